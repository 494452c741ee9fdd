//! Batch losses and their gradients with respect to node outputs.

use crate::linalg::{dot, Vector};

/// `(1/B) Σ_b ‖y_b − y*_b‖²` and `2(y_b − y*_b)/B`.
pub fn loss_mse(ys: &[Vector], targets: &[Vector]) -> (f64, Vec<Vector>) {
    assert_eq!(ys.len(), targets.len());
    let batch = ys.len() as f64;
    let mut loss = 0.0;
    let grads = ys
        .iter()
        .zip(targets)
        .map(|(y, t)| {
            let diff = y.sub(t);
            loss += diff.dot(&diff);
            diff.scale(2.0 / batch)
        })
        .collect();
    (loss / batch, grads)
}

/// Sign-invariant alignment loss, `(1/B) Σ_b (1/K) Σ_k (1 − |y_bkᵀ y*_bk|)`.
///
/// Each element holds `K = len / dim` concatenated unit vectors of length `dim`.
pub fn loss_eigen_align(ys: &[Vector], targets: &[Vector], dim: usize) -> (f64, Vec<Vector>) {
    assert_eq!(ys.len(), targets.len());
    let batch = ys.len() as f64;
    let mut loss = 0.0;
    let grads = ys
        .iter()
        .zip(targets)
        .map(|(y, t)| {
            assert_eq!(y.dim(), t.dim());
            let k = (y.dim() / dim) as f64;
            let mut g = vec![0.0; y.dim()];
            for ((yc, tc), gc) in y.chunks(dim).zip(t.chunks(dim)).zip(g.chunks_mut(dim)) {
                let c = dot(yc, tc);
                loss += (1.0 - c.abs()) / k;
                let s = -c.signum() / (batch * k);
                for (gi, ti) in gc.iter_mut().zip(tc) {
                    *gi = s * ti;
                }
            }
            Vector::from(g)
        })
        .collect();
    (loss / batch, grads)
}
