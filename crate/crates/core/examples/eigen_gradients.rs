//! Top-eigenvector gradients. For a negative definite matrix the approximate
//! gradient always has positive inner product with the exact one; for a
//! general symmetric matrix it often does not.

use declgrad::linalg::{Matrix, Rng};
use declgrad::nodes::eigen::{eigen_backward_approx, eigen_backward_exact, eigen_forward};

fn cosine(a: &Matrix, b: &Matrix) -> f64 {
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    dot / (a.frobenius_norm() * b.frobenius_norm())
}

fn fraction_positive(rng: &mut Rng, m: usize, negdef: bool) -> f64 {
    let trials = 500;
    let mut positive = 0;
    for _ in 0..trials {
        let mut x = rng.gaussian_matrix(m, m).symmetric_part();
        if negdef {
            x = x.matmul(&x).scale(-1.0).shift_diagonal(-0.1);
        }
        let top = eigen_forward(&x).unwrap().pop().unwrap();
        let v = rng.gaussian_vector(m);
        let g = eigen_backward_exact(&x, &top, &v).unwrap();
        let g_hat = eigen_backward_approx(&x, &top, &v).unwrap();
        if cosine(&g, &g_hat) > 0.0 {
            positive += 1;
        }
    }
    positive as f64 / trials as f64
}

fn main() {
    let mut rng = Rng::new(3);
    let m = 6;
    println!("fraction with cos(g, ĝ) > 0");
    println!("  general symmetric X: {:.3}", fraction_positive(&mut rng, m, false));
    println!("  negative definite X: {:.3}", fraction_positive(&mut rng, m, true));
}
