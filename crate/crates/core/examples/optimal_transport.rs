//! Entropic optimal transport: Sinkhorn plan, Jacobian tangency, and the
//! cosine similarity between exact and approximate gradients.

use declgrad::linalg::{Matrix, Rng};
use declgrad::nodes::ot::{self, ot_constraint_matrix, ot_jacobian};
use declgrad::nodes::{gradient_report, DeclarativeNode, EntropicOt};

fn main() {
    let (m, n, gamma) = (5, 5, 1.0);
    let mut rng = Rng::new(2);
    let node = EntropicOt::uniform(m, n, gamma);

    let cost = rng.gaussian_vector(m * n);
    let plan = node.forward(&cost).unwrap();
    println!(
        "Sinkhorn: {} iterations, marginal violation {:.1e}",
        plan.iterations, plan.violation
    );
    let row_sums: Vec<String> = (0..m).map(|i| format!("{:.6}", plan.p.row(i).iter().sum::<f64>())).collect();
    println!("row sums: {}", row_sums.join(" "));

    let tangency = ot_constraint_matrix(m, n).matmul(&ot_jacobian(&plan).unwrap()).max_abs();
    println!("max |A·Dy| = {tangency:.1e}");

    let mut sims = Vec::new();
    for _ in 0..200 {
        let v = rng.gaussian_vector(m * n);
        if let Some(c) = gradient_report(&node, &cost, &v).unwrap().cos_sim {
            sims.push(c);
        }
    }
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    let positive = sims.iter().filter(|&&c| c > 0.0).count();
    println!("cos(g, ĝ): mean {mean:.4}, positive in {positive} of {}", sims.len());

    let uniform = ot::uniform_marginal(m);
    let flat = ot::sinkhorn_forward(&Matrix::zeros(m, n), &uniform, &uniform, gamma, 1e-12, 100).unwrap();
    println!("zero cost gives the product plan rcᵀ: P[0,0] = {:.6}", flat.p[(0, 0)]);
}
