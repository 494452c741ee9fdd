//! Projection onto the unit sphere: forward pass, both gradients, and how
//! often the constraint-ignoring gradient is still a descent direction.

use declgrad::linalg::Rng;
use declgrad::nodes::{gradient_report, DeclarativeNode, SphereProjection};

fn main() {
    let m = 8;
    let node = SphereProjection::new(m);
    let mut rng = Rng::new(1);

    let x = rng.gaussian_vector(m);
    let y = node.output(&node.forward(&x).unwrap());
    println!("‖x‖ = {:.4}, ‖y‖ = {:.12}", x.norm(), y.norm());

    let trials = 1000;
    let mut min_cos = f64::INFINITY;
    for _ in 0..trials {
        let x = rng.gaussian_vector(m);
        let v = rng.gaussian_vector(m);
        let report = gradient_report(&node, &x, &v).unwrap();
        min_cos = min_cos.min(report.cos_sim.unwrap_or(f64::NAN));
    }
    // The approximate gradient drops a projection, so gᵀĝ = ‖g‖²‖x‖ > 0.
    println!("min cos(g, ĝ) over {trials} draws: {min_cos:.4}");
}
