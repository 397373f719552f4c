//! Fully connected tanh networks over a flat parameter slice.

use rand::Rng;

/// Layer sizes `[input, hidden.., output]`. Hidden layers use tanh, the
/// output layer is affine. Each layer stores its weights input-major
/// (`w[i * out + o]`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(
            sizes.len() >= 2 && sizes.iter().all(|s| *s > 0),
            "invalid layer sizes {sizes:?}"
        );
        Self { sizes }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases; the output layer is scaled by
    /// `out_gain`.
    pub fn init<R: Rng>(&self, rng: &mut R, out_gain: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        let last = self.num_layers() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l == last { out_gain } else { 1.0 };
            let a = gain * (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                p.push(if a > 0.0 { rng.gen_range(-a..a) } else { 0.0 });
            }
            p.extend(std::iter::repeat(0.0).take(n_out));
        }
        p
    }

    /// Forward pass, filling `cache`.
    pub fn forward(&self, params: &[f64], input: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(params.len(), self.num_params());
        debug_assert_eq!(input.len(), self.input());
        let n = self.num_layers();
        cache.acts.resize(n + 1, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);
        let mut off = 0;
        for l in 0..n {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut rest[0];
            y.clear();
            y.extend_from_slice(b);
            for (i, xi) in x.iter().enumerate() {
                axpy(*xi, &w[i * n_out..(i + 1) * n_out], y);
            }
            if l + 1 < n {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    /// Accumulate `d loss / d params` into `grad` given `d loss / d output`.
    /// `scratch` is reused between calls.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        d_out: &[f64],
        grad: &mut [f64],
        scratch: &mut (Vec<f64>, Vec<f64>),
    ) {
        let n = self.num_layers();
        let (delta, next) = scratch;
        delta.clear();
        delta.extend_from_slice(d_out);
        let mut off = self.num_params();
        for l in (0..n).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let x = &cache.acts[l];
            let w = &params[off..off + n_in * n_out];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (g, d) in gb.iter_mut().zip(delta.iter()) {
                *g += d;
            }
            for (i, xi) in x.iter().enumerate() {
                axpy(*xi, delta, &mut gw[i * n_out..(i + 1) * n_out]);
            }
            if l > 0 {
                next.clear();
                next.extend((0..n_in).map(|i| {
                    let h = x[i];
                    dot(&w[i * n_out..(i + 1) * n_out], delta) * (1.0 - h * h)
                }));
                std::mem::swap(delta, next);
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_output() {
        let s = MlpShape::new(vec![3, 5, 2]);
        let p = vec![0.0; s.num_params()];
        let mut c = MlpCache::default();
        s.forward(&p, &[1.0, -2.0, 0.5], &mut c);
        assert_eq!(c.output(), &[0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let s = MlpShape::new(vec![2, 2]);
        // Identity weights, bias (0.5, 0).
        let p = vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0];
        let mut c = MlpCache::default();
        s.forward(&p, &[3.0, -1.0], &mut c);
        assert_eq!(c.output(), &[3.5, -1.0]);
    }

    #[test]
    fn backward_matches_finite_difference() {
        let s = MlpShape::new(vec![4, 6, 5, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = s.init(&mut rng, 1.0);
        for v in p.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let x = [0.3, -0.7, 1.1, 0.05];
        let weights = [0.7, -1.3, 0.4];
        let loss = |p: &[f64]| {
            let mut c = MlpCache::default();
            s.forward(p, &x, &mut c);
            c.output()
                .iter()
                .zip(weights)
                .map(|(o, w)| w * o * o)
                .sum::<f64>()
        };
        let mut c = MlpCache::default();
        s.forward(&p, &x, &mut c);
        let d_out: Vec<f64> = c
            .output()
            .iter()
            .zip(weights)
            .map(|(o, w)| 2.0 * w * o)
            .collect();
        let mut g = vec![0.0; p.len()];
        s.backward(&p, &c, &d_out, &mut g, &mut Default::default());
        let eps = 1e-5;
        for i in 0..p.len() {
            let mut hi = p.clone();
            hi[i] += eps;
            let mut lo = p.clone();
            lo[i] -= eps;
            let fd = (loss(&hi) - loss(&lo)) / (2.0 * eps);
            assert!(
                (fd - g[i]).abs() <= 1e-7 + 1e-5 * fd.abs(),
                "param {i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
