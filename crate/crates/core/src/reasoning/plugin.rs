//! Neighbour-aggregation plug-in.
//!
//! For a central entity `e` the plug-in stacks `e` on top of up to `m`
//! neighbour vectors (zero rows pad short neighbourhoods), convolves the
//! `(1+m) × d` matrix with a small 2D filter bank (zero "same" padding,
//! stride 1), applies ReLU, flattens, and maps the result back to `d`
//! dimensions with a one-hidden-layer MLP:
//!
//! ```text
//! e' = W2 · relu(W1 · flatten(relu(conv(stack(e, N'(e))) + b)) + b1) + b2
//! ```

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginConfig {
    /// Neighbours stacked under the central entity.
    pub neighbors: usize,
    /// Convolution kernel height and width (odd).
    pub kernel: (usize, usize),
    pub channels: usize,
    /// Hidden MLP width; `None` means `4d`.
    pub hidden: Option<usize>,
    /// Start from a pass-through configuration (`e' = e`) plus small noise.
    pub identity_init: bool,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self {
            neighbors: 8,
            kernel: (3, 3),
            channels: 2,
            hidden: None,
            identity_init: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginParams {
    pub dim: usize,
    pub rows: usize,
    pub kernel: (usize, usize),
    pub channels: usize,
    pub hidden: usize,
    /// `channels × kh × kw`
    pub conv: Vec<f64>,
    /// One bias per output channel.
    pub conv_bias: Vec<f64>,
    /// Stored transposed, `(channels · rows · dim) × hidden`, so that
    /// zero activations skip whole rows.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `dim × hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradients with the same layout as [`PluginParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PluginGrads {
    pub conv: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PluginCache {
    input: Vec<f64>,
    conv_pre: Vec<f64>,
    conv_act: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden_act: Vec<f64>,
}

impl PluginCache {
    /// Every ReLU pre-activation, in a fixed order.
    pub fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.conv_pre.iter().chain(&self.hidden_pre).copied()
    }
}

impl PluginParams {
    pub fn new(dim: usize, cfg: &PluginConfig, seed: u64) -> Result<Self> {
        let (kh, kw) = cfg.kernel;
        if dim == 0 || cfg.neighbors == 0 || cfg.channels == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(
                "plug-in needs positive dim / neighbours / channels and odd kernel sizes",
            ));
        }
        let rows = cfg.neighbors + 1;
        let hidden = cfg.hidden.unwrap_or(4 * dim);
        if hidden == 0 {
            return Err(Error::invalid("plug-in hidden width must be positive"));
        }
        let flat = cfg.channels * rows * dim;
        let mut rng = rng::derived(seed, "plugin-init", 0);
        // Uniform(-s, s) with s = 1/√fan_in, shrunk when the pass-through
        // structure is added on top.
        let shrink = if cfg.identity_init { 0.05 } else { 1.0 };
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let s = shrink / math::sqrt(fan_in as f64);
            (0..n).map(|_| rng.random_range(-s..=s)).collect()
        };
        let mut p = PluginParams {
            dim,
            rows,
            kernel: cfg.kernel,
            channels: cfg.channels,
            hidden,
            conv: draw(cfg.channels * kh * kw, kh * kw),
            conv_bias: draw(cfg.channels, kh * kw),
            w1: draw(hidden * flat, flat),
            b1: draw(hidden, flat),
            w2: draw(dim * hidden, hidden),
            b2: draw(dim, hidden),
        };
        if cfg.identity_init && cfg.channels >= 2 && hidden >= 2 * dim {
            // Channel 0 passes +e, channel 1 passes -e; hidden units j and
            // d + j pick up their first rows and the output recombines
            // relu(x) - relu(-x) = x.
            let centre = (kh / 2) * kw + kw / 2;
            p.conv[centre] += 1.0;
            p.conv[kh * kw + centre] -= 1.0;
            for j in 0..dim {
                p.w1[j * hidden + j] += 1.0;
                p.w1[(rows * dim + j) * hidden + dim + j] += 1.0;
                p.w2[j * hidden + j] += 1.0;
                p.w2[j * hidden + dim + j] -= 1.0;
            }
        }
        Ok(p)
    }

    fn flat(&self) -> usize {
        self.channels * self.rows * self.dim
    }

    pub fn neighbor_cap(&self) -> usize {
        self.rows - 1
    }

    pub fn num_params(&self) -> usize {
        self.conv.len()
            + self.conv_bias.len()
            + self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn slices(&self) -> [&[f64]; 6] {
        [
            &self.conv,
            &self.conv_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    /// Mutable views of every parameter block, in a fixed order.
    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv,
            &mut self.conv_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    /// Builds the `(1+m) × d` input: the central vector atop its neighbours,
    /// zero-padded.
    pub fn stack(&self, centre: &[f64], neighbors: &[&[f64]]) -> Vec<f64> {
        let d = self.dim;
        let mut x = alloc::vec![0.0; self.rows * d];
        x[..d].copy_from_slice(centre);
        for (i, n) in neighbors.iter().take(self.rows - 1).enumerate() {
            x[(i + 1) * d..(i + 2) * d].copy_from_slice(n);
        }
        x
    }

    pub fn forward(&self, input: Vec<f64>) -> (Vec<f64>, PluginCache) {
        let (mut outs, mut caches) = self.forward_batch(alloc::vec![input]);
        (
            outs.pop().expect("one output"),
            caches.pop().expect("one cache"),
        )
    }

    /// Forward pass over many stacked inputs at once. Each output is
    /// bitwise identical to [`forward`](Self::forward) on the same input;
    /// batching only keeps each row of W1 hot across inputs.
    pub fn forward_batch(&self, inputs: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<PluginCache>) {
        let hdim = self.hidden;
        let mut caches: Vec<PluginCache> = inputs
            .into_iter()
            .map(|input| {
                debug_assert_eq!(input.len(), self.rows * self.dim);
                let conv_pre = self.conv_forward(&input);
                let conv_act = conv_pre.iter().map(|&z| z.max(0.0)).collect();
                PluginCache {
                    input,
                    conv_pre,
                    conv_act,
                    hidden_pre: self.b1.clone(),
                    hidden_act: Vec::new(),
                }
            })
            .collect();
        for tile in caches.chunks_mut(TILE) {
            for f in 0..self.flat() {
                let w = &self.w1[f * hdim..(f + 1) * hdim];
                for c in tile.iter_mut() {
                    let a = c.conv_act[f];
                    if a != 0.0 {
                        axpy(&mut c.hidden_pre, a, w);
                    }
                }
            }
        }
        let outs = caches
            .iter_mut()
            .map(|c| {
                c.hidden_act = c.hidden_pre.iter().map(|&z| z.max(0.0)).collect();
                (0..self.dim)
                    .map(|o| {
                        self.b2[o] + math::dot(&self.w2[o * hdim..(o + 1) * hdim], &c.hidden_act)
                    })
                    .collect()
            })
            .collect();
        (outs, caches)
    }

    fn conv_forward(&self, input: &[f64]) -> Vec<f64> {
        let (d, rows, c) = (self.dim, self.rows, self.channels);
        let (kh, kw) = self.kernel;
        let (ph, pw) = (kh / 2, kw / 2);
        let mut conv_pre = alloc::vec![0.0; c * rows * d];
        for ch in 0..c {
            let w = &self.conv[ch * kh * kw..(ch + 1) * kh * kw];
            for i in 0..rows {
                for j in 0..d {
                    let mut z = self.conv_bias[ch];
                    for u in 0..kh {
                        let Some(ii) = (i + u).checked_sub(ph).filter(|&ii| ii < rows) else {
                            continue;
                        };
                        for v in 0..kw {
                            let Some(jj) = (j + v).checked_sub(pw).filter(|&jj| jj < d) else {
                                continue;
                            };
                            z += w[u * kw + v] * input[ii * d + jj];
                        }
                    }
                    conv_pre[(ch * rows + i) * d + j] = z;
                }
            }
        }
        conv_pre
    }

    pub fn zero_grads(&self) -> PluginGrads {
        PluginGrads {
            conv: alloc::vec![0.0; self.conv.len()],
            conv_bias: alloc::vec![0.0; self.conv_bias.len()],
            w1: alloc::vec![0.0; self.w1.len()],
            b1: alloc::vec![0.0; self.b1.len()],
            w2: alloc::vec![0.0; self.w2.len()],
            b2: alloc::vec![0.0; self.b2.len()],
        }
    }

    /// Accumulates parameter gradients for output gradient `grad_out` into
    /// `grads` and returns the gradient with respect to the stacked input.
    pub fn backward(
        &self,
        cache: &PluginCache,
        grad_out: &[f64],
        grads: &mut PluginGrads,
    ) -> Vec<f64> {
        self.backward_batch(&[cache], &[grad_out], grads)
            .pop()
            .expect("one gradient")
    }

    /// Batched [`backward`](Self::backward); gradients accumulate in input
    /// order, so the result matches sequential calls bitwise.
    pub fn backward_batch(
        &self,
        caches: &[&PluginCache],
        grad_outs: &[&[f64]],
        grads: &mut PluginGrads,
    ) -> Vec<Vec<f64>> {
        let hdim = self.hidden;
        let g_hidden: Vec<Vec<f64>> = caches
            .iter()
            .zip(grad_outs)
            .map(|(c, g)| self.head_backward(c, g, grads))
            .collect();

        // Only positive conv activations carry gradient further back, and
        // only they touch W1.
        let mut g_act: Vec<Vec<f64>> = caches
            .iter()
            .map(|_| alloc::vec![0.0; self.flat()])
            .collect();
        for start in (0..caches.len()).step_by(TILE) {
            let end = (start + TILE).min(caches.len());
            for f in 0..self.flat() {
                let w = &self.w1[f * hdim..(f + 1) * hdim];
                let gw = &mut grads.w1[f * hdim..(f + 1) * hdim];
                for i in start..end {
                    let a = caches[i].conv_act[f];
                    if a != 0.0 {
                        axpy(gw, a, &g_hidden[i]);
                        g_act[i][f] = math::dot(w, &g_hidden[i]);
                    }
                }
            }
        }
        caches
            .iter()
            .zip(&g_act)
            .map(|(c, ga)| self.conv_backward(c, ga, grads))
            .collect()
    }

    /// Output layer and hidden ReLU: returns the masked hidden gradient.
    fn head_backward(
        &self,
        cache: &PluginCache,
        grad_out: &[f64],
        grads: &mut PluginGrads,
    ) -> Vec<f64> {
        let hdim = self.hidden;
        let mut g_hidden = alloc::vec![0.0; hdim];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.b2[o] += g;
            let row = &self.w2[o * hdim..(o + 1) * hdim];
            let grow = &mut grads.w2[o * hdim..(o + 1) * hdim];
            for k in 0..hdim {
                grow[k] += g * cache.hidden_act[k];
                g_hidden[k] += g * row[k];
            }
        }
        for (g, &z) in g_hidden.iter_mut().zip(&cache.hidden_pre) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        axpy(&mut grads.b1, 1.0, &g_hidden);
        g_hidden
    }

    fn conv_backward(
        &self,
        cache: &PluginCache,
        g_act: &[f64],
        grads: &mut PluginGrads,
    ) -> Vec<f64> {
        let (d, rows, c) = (self.dim, self.rows, self.channels);
        let (kh, kw) = self.kernel;
        let (ph, pw) = (kh / 2, kw / 2);
        let mut g_input = alloc::vec![0.0; rows * d];
        for ch in 0..c {
            let w = &self.conv[ch * kh * kw..(ch + 1) * kh * kw];
            for i in 0..rows {
                for j in 0..d {
                    let idx = (ch * rows + i) * d + j;
                    if cache.conv_pre[idx] <= 0.0 {
                        continue;
                    }
                    let g = g_act[idx];
                    if g == 0.0 {
                        continue;
                    }
                    grads.conv_bias[ch] += g;
                    for u in 0..kh {
                        let Some(ii) = (i + u).checked_sub(ph).filter(|&ii| ii < rows) else {
                            continue;
                        };
                        for v in 0..kw {
                            let Some(jj) = (j + v).checked_sub(pw).filter(|&jj| jj < d) else {
                                continue;
                            };
                            grads.conv[(ch * kh + u) * kw + v] += g * cache.input[ii * d + jj];
                            g_input[ii * d + jj] += g * w[u * kw + v];
                        }
                    }
                }
            }
        }
        g_input
    }

    /// Plain SGD update `θ ← θ − lr · g`.
    pub fn apply(&mut self, grads: &PluginGrads, lr: f64) {
        let gs: [&Vec<f64>; 6] = [
            &grads.conv,
            &grads.conv_bias,
            &grads.w1,
            &grads.b1,
            &grads.w2,
            &grads.b2,
        ];
        for (p, g) in self.blocks_mut().into_iter().zip(gs) {
            for (x, dx) in p.iter_mut().zip(g) {
                *x -= lr * dx;
            }
        }
    }
}

impl PluginGrads {
    pub fn blocks(&self) -> [&Vec<f64>; 6] {
        [
            &self.conv,
            &self.conv_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }
}

/// Inputs processed together per pass over W1.
const TILE: usize = 16;

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Fixed neighbour sample for entity `e`: all neighbours when there are at
/// most `m`, otherwise a seeded uniform sample without replacement (kept in
/// neighbour-list order).
pub fn sample_neighbors(e: u32, neighbors: &[u32], m: usize, seed: u64) -> Vec<u32> {
    if neighbors.len() <= m {
        return neighbors.to_vec();
    }
    let mut rng = rng::derived(seed, "plugin-neighbors", e as u64);
    let mut picked = index::sample(&mut rng, neighbors.len(), m).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| neighbors[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_init_passes_centre_through_approximately() {
        let cfg = PluginConfig::default();
        let p = PluginParams::new(6, &cfg, 1).unwrap();
        let e = [0.5, -0.25, 0.1, 0.0, -0.7, 0.3];
        let n1 = [1.0; 6];
        let (out, _) = p.forward(p.stack(&e, &[&n1]));
        assert_eq!(out.len(), 6);
        let err: f64 = out
            .iter()
            .zip(&e)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.5, "max deviation {err}");
    }

    #[test]
    fn zero_neighbours_and_shape() {
        let cfg = PluginConfig {
            identity_init: false,
            ..Default::default()
        };
        let p = PluginParams::new(5, &cfg, 2).unwrap();
        for k in 0..12 {
            let nb: Vec<Vec<f64>> = (0..k).map(|i| vec![i as f64 * 0.1; 5]).collect();
            let refs: Vec<&[f64]> = nb.iter().map(Vec::as_slice).collect();
            let (out, _) = p.forward(p.stack(&[0.1; 5], &refs));
            assert_eq!(out.len(), 5);
            assert!(out.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn forward_is_pure() {
        let p = PluginParams::new(4, &PluginConfig::default(), 3).unwrap();
        let x = p.stack(&[0.1, 0.2, 0.3, 0.4], &[&[1.0, 0.0, 0.0, 0.0]]);
        let (a, _) = p.forward(x.clone());
        let (b, _) = p.forward(x);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn neighbour_sampling() {
        let nb: Vec<u32> = (0..20).collect();
        let s = sample_neighbors(3, &nb, 8, 9);
        assert_eq!(s.len(), 8);
        assert_eq!(s, sample_neighbors(3, &nb, 8, 9));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_neighbors(3, &nb[..5], 8, 9), nb[..5].to_vec());
    }

    #[test]
    fn rejects_even_kernels() {
        let cfg = PluginConfig {
            kernel: (2, 3),
            ..Default::default()
        };
        assert!(PluginParams::new(4, &cfg, 0).is_err());
    }
}
