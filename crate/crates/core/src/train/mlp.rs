//! Three-layer ReLU perceptron with hand-written reverse mode.

use crate::linalg::{dot, Rng, Vector};

/// `x = W₃ relu(W₂ relu(W₁ z + b₁) + b₂) + b₃`, parameters stored flat.
///
/// Layer `l` occupies `W_l` (row-major, `dims[l+1] × dims[l]`) followed by
/// `b_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: [usize; 4],
    params: Vec<f64>,
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    pre: [Vec<f64>; 2],
    post: [Vec<f64>; 2],
}

impl Mlp {
    /// He-initialized weights, `N(0, 2/fan_in)`, and zero biases.
    pub fn init(d: usize, hidden: [usize; 2], out_dim: usize, rng: &mut Rng) -> Self {
        let dims = [d, hidden[0], hidden[1], out_dim];
        assert!(dims.iter().all(|&k| k >= 1), "all layer widths must be positive");
        let mut params = Vec::with_capacity(Self::count(&dims));
        for l in 0..3 {
            let std = (2.0 / dims[l] as f64).sqrt();
            params.extend((0..dims[l] * dims[l + 1]).map(|_| std * rng.gaussian()));
            params.extend(std::iter::repeat_n(0.0, dims[l + 1]));
        }
        Mlp { dims, params }
    }

    fn count(dims: &[usize; 4]) -> usize {
        (0..3).map(|l| dims[l + 1] * (dims[l] + 1)).sum()
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[3]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.dims[l + 1] * (self.dims[l] + 1)).sum()
    }

    fn affine(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| dot(&w[o * n_in..(o + 1) * n_in], input) + b[o])
            .collect()
    }

    pub fn forward(&self, z: &[f64]) -> (Vector, MlpCache) {
        assert_eq!(z.len(), self.dims[0], "input dimension mismatch");
        let pre1 = self.affine(0, z);
        let post1: Vec<f64> = pre1.iter().map(|x| x.max(0.0)).collect();
        let pre2 = self.affine(1, &post1);
        let post2: Vec<f64> = pre2.iter().map(|x| x.max(0.0)).collect();
        let out = self.affine(2, &post2);
        let cache = MlpCache {
            input: z.to_vec(),
            pre: [pre1, pre2],
            post: [post1, post2],
        };
        (Vector::from(out), cache)
    }

    /// Gradient of `⟨dl_dx, x⟩` with respect to every parameter, added into `grads`.
    pub fn backward_into(&self, cache: &MlpCache, dl_dx: &[f64], grads: &mut [f64]) {
        assert_eq!(dl_dx.len(), self.dims[3], "output gradient dimension mismatch");
        assert_eq!(grads.len(), self.params.len());
        let mut delta = dl_dx.to_vec();
        for layer in (0..3).rev() {
            let input: &[f64] = if layer == 0 { &cache.input } else { &cache.post[layer - 1] };
            let (n_in, n_out) = (self.dims[layer], self.dims[layer + 1]);
            let off = self.offset(layer);
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let gw = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                    for (g, x) in gw.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                grads[off + n_in * n_out + o] += d;
            }
            if layer > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *p += d * wv;
                        }
                    }
                }
                for (p, pre) in prev.iter_mut().zip(&cache.pre[layer - 1]) {
                    if *pre <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn backward(&self, cache: &MlpCache, dl_dx: &[f64]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, dl_dx, &mut grads);
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::init(3, [4, 5], 2, &mut Rng::new(1));
        let b = Mlp::init(3, [4, 5], 2, &mut Rng::new(1));
        assert_eq!(a, b);
        assert_eq!(a.num_params(), 4 * 4 + 5 * 5 + 2 * 6);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mlp = Mlp::init(5, [64, 64], 10, &mut Rng::new(2));
        let (x, _) = mlp.forward(&[0.0; 5]);
        assert_eq!(x.dim(), 10);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_blocks_negative_path() {
        // one hidden unit per layer, identity weights, negative input
        let mut mlp = Mlp::init(1, [1, 1], 1, &mut Rng::new(3));
        mlp.params_mut().copy_from_slice(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let (x, cache) = mlp.forward(&[-1.0]);
        assert_eq!(x[0], 0.0);
        let g = mlp.backward(&cache, &[1.0]);
        // only the output bias sees a gradient
        assert_eq!(g, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mlp = Mlp::init(3, [4, 4], 2, &mut Rng::new(4));
        let (_, cache) = mlp.forward(&[0.3, -1.0, 2.0]);
        assert!(mlp.backward(&cache, &[0.0, 0.0]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let mut mlp = Mlp::init(3, [4, 4], 2, &mut rng);
        // nonzero biases so every path is exercised
        for p in mlp.params_mut().iter_mut() {
            *p += 0.1 * rng.gaussian();
        }
        let z = rng.gaussian_vector(3);
        let w = rng.gaussian_vector(2);
        let (_, cache) = mlp.forward(&z);
        let g = mlp.backward(&cache, &w);
        let f = |m: &Mlp| m.forward(&z).0.dot(&w);
        let mut max_err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..mlp.num_params() {
            let h = 1e-5 * mlp.params()[k].abs().max(1.0);
            let mut plus = mlp.clone();
            plus.params_mut()[k] += h;
            let mut minus = mlp.clone();
            minus.params_mut()[k] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            max_err = max_err.max((fd - g[k]).abs());
            scale = scale.max(g[k].abs());
        }
        assert!(max_err <= 1e-5 * scale, "{max_err:e} vs {scale:e}");
    }
}
