//! Patch-quality backbones.
//!
//! The bundled `toy-conv` backbone works frame by frame on two input
//! channels: the absolute reference/transcode difference, and that difference
//! weighted by the normalized transcoded content. Two bias-free strided 3×3
//! convolutions with leaky ReLU follow, then global average pooling over all
//! frames and positions and a linear head. With no bias anywhere before the
//! head, identical inputs give zero features and `Q` equals the head bias,
//! which starts at zero and receives no gradient under the pairwise loss.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{Patch, PatchGeometry};

const LEAK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackbonePreset {
    ToyConv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub preset: BackbonePreset,
    pub geometry: PatchGeometry,
    pub bit_depth: u32,
    /// Output channels of the two convolution layers.
    pub channels: [usize; 2],
    /// Difference magnitude (in 8-bit sample units) mapped to 1.0.
    pub diff_scale: f64,
}

impl BackboneConfig {
    pub fn toy(geometry: PatchGeometry, bit_depth: u32) -> Self {
        BackboneConfig {
            preset: BackbonePreset::ToyConv,
            geometry,
            bit_depth,
            channels: [8, 8],
            diff_scale: 8.0,
        }
    }

    pub fn build(&self) -> Box<dyn Backbone> {
        match self.preset {
            BackbonePreset::ToyConv => Box::new(ToyConv::new(self.clone())),
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    buffers: Vec<Vec<f64>>,
}

/// A differentiable map from a (reference, transcoded) patch pair to a scalar.
pub trait Backbone: Send + Sync {
    fn config(&self) -> &BackboneConfig;

    fn param_count(&self) -> usize;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    fn forward(&self, params: &[f64], reference: &Patch, dist: &Patch) -> Result<(f64, Tape)>;

    /// Accumulates `upstream · ∂Q/∂params` into `grad`.
    fn backward(&self, params: &[f64], tape: &Tape, upstream: f64, grad: &mut [f64]);
}

struct Dims {
    h0: usize,
    w0: usize,
    h1: usize,
    w1: usize,
    h2: usize,
    w2: usize,
}

pub struct ToyConv {
    cfg: BackboneConfig,
    dims: Dims,
}

const C_IN: usize = 2;

fn conv_out(n: usize) -> usize {
    (n - 1) / 2 + 1
}

/// 3×3, stride 2, zero padding 1, no bias.
fn conv_forward(input: &[f64], c_in: usize, h: usize, w: usize, weights: &[f64], c_out: usize, out: &mut [f64]) {
    let (ho, wo) = (conv_out(h), conv_out(w));
    for co in 0..c_out {
        let wk = &weights[co * c_in * 9..(co + 1) * c_in * 9];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    let plane = &input[ci * h * w..(ci + 1) * h * w];
                    let k = &wk[ci * 9..ci * 9 + 9];
                    for ky in 0..3 {
                        let iy = (oy * 2 + ky) as isize - 1;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for kx in 0..3 {
                            let ix = (ox * 2 + kx) as isize - 1;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            acc += k[ky * 3 + kx] * row[ix as usize];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    c_out: usize,
    dout: &[f64],
    dweights: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let (ho, wo) = (conv_out(h), conv_out(w));
    for co in 0..c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let g = dout[(co * ho + oy) * wo + ox];
                if g == 0.0 {
                    continue;
                }
                for ci in 0..c_in {
                    let base = (co * c_in + ci) * 9;
                    for ky in 0..3 {
                        let iy = (oy * 2 + ky) as isize - 1;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (ox * 2 + kx) as isize - 1;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let idx = (ci * h + iy as usize) * w + ix as usize;
                            dweights[base + ky * 3 + kx] += g * input[idx];
                            if let Some(di) = dinput.as_deref_mut() {
                                di[idx] += g * weights[base + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAK * z
    }
}

#[inline]
fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAK
    }
}

impl ToyConv {
    pub fn new(cfg: BackboneConfig) -> Self {
        let g = cfg.geometry;
        let (h1, w1) = (conv_out(g.height), conv_out(g.width));
        let dims = Dims {
            h0: g.height,
            w0: g.width,
            h1,
            w1,
            h2: conv_out(h1),
            w2: conv_out(w1),
        };
        ToyConv { cfg, dims }
    }

    fn sizes(&self) -> (usize, usize, usize, usize) {
        let [c1, c2] = self.cfg.channels;
        (C_IN * c1 * 9, c1 * c2 * 9, c2, 1)
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], f64) {
        let (a, b, c, _) = self.sizes();
        (&params[..a], &params[a..a + b], &params[a + b..a + b + c], params[a + b + c])
    }
}

impl Backbone for ToyConv {
    fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    fn param_count(&self) -> usize {
        let (a, b, c, d) = self.sizes();
        a + b + c + d
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let [c1, c2] = self.cfg.channels;
        let he = |fan_in: usize| Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        let mut params = Vec::with_capacity(self.param_count());
        let n1 = he(C_IN * 9);
        params.extend((0..C_IN * c1 * 9).map(|_| n1.sample(rng)));
        let n2 = he(c1 * 9);
        params.extend((0..c1 * c2 * 9).map(|_| n2.sample(rng)));
        let scale = 1.0 / (c2 as f64).sqrt();
        params.extend((0..c2).map(|_| rng.random_range(-scale..scale)));
        params.push(0.0);
        params
    }

    fn forward(&self, params: &[f64], reference: &Patch, dist: &Patch) -> Result<(f64, Tape)> {
        let g = self.cfg.geometry;
        for p in [reference, dist] {
            if p.geometry != g || p.bit_depth != self.cfg.bit_depth {
                return Err(Error::Geometry(format!(
                    "patch {:?}/{}-bit does not match model {:?}/{}-bit",
                    p.geometry, p.bit_depth, g, self.cfg.bit_depth
                )));
            }
        }
        if params.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let [c1, c2] = self.cfg.channels;
        let Dims { h0, w0, h1, w1, h2, w2 } = self.dims;
        let (w_conv1, w_conv2, head, bias) = self.split(params);
        let diff_scale = self.cfg.diff_scale * (1u32 << (self.cfg.bit_depth - 8)) as f64;
        let max = dist.max_sample();

        let frame_in = C_IN * h0 * w0;
        let frame_z1 = c1 * h1 * w1;
        let frame_z2 = c2 * h2 * w2;
        let mut x = vec![0.0; g.frames * frame_in];
        let mut z1 = vec![0.0; g.frames * frame_z1];
        let mut z2 = vec![0.0; g.frames * frame_z2];
        let mut a1 = vec![0.0; frame_z1];
        let mut pooled = vec![0.0; c2];
        for t in 0..g.frames {
            let xt = &mut x[t * frame_in..(t + 1) * frame_in];
            let (r, d) = (reference.frame(t), dist.frame(t));
            let n = h0 * w0;
            for i in 0..n {
                let diff = (r[i] as f64 - d[i] as f64).abs() / diff_scale;
                xt[i] = diff;
                xt[n + i] = diff * d[i] as f64 / max;
            }
            let z1t = &mut z1[t * frame_z1..(t + 1) * frame_z1];
            conv_forward(xt, C_IN, h0, w0, w_conv1, c1, z1t);
            for (a, &z) in a1.iter_mut().zip(z1t.iter()) {
                *a = leaky(z);
            }
            let z2t = &mut z2[t * frame_z2..(t + 1) * frame_z2];
            conv_forward(&a1, c1, h1, w1, w_conv2, c2, z2t);
            for (c, acc) in pooled.iter_mut().enumerate() {
                *acc += z2t[c * h2 * w2..(c + 1) * h2 * w2].iter().map(|&z| leaky(z)).sum::<f64>();
            }
        }
        let denom = (g.frames * h2 * w2) as f64;
        pooled.iter_mut().for_each(|p| *p /= denom);
        let q = bias + head.iter().zip(&pooled).map(|(w, f)| w * f).sum::<f64>();
        Ok((
            q,
            Tape {
                buffers: vec![x, z1, z2, pooled],
            },
        ))
    }

    fn backward(&self, params: &[f64], tape: &Tape, upstream: f64, grad: &mut [f64]) {
        let g = self.cfg.geometry;
        let [c1, c2] = self.cfg.channels;
        let Dims { h0, w0, h1, w1, h2, w2 } = self.dims;
        let (w_conv1, w_conv2, head, _) = self.split(params);
        let (s1, s2, s3, _) = self.sizes();
        let (g_conv1, rest) = grad.split_at_mut(s1);
        let (g_conv2, rest) = rest.split_at_mut(s2);
        let (g_head, g_bias) = rest.split_at_mut(s3);
        let [x, z1, z2, pooled] = &tape.buffers[..] else {
            panic!("tape does not come from ToyConv::forward");
        };

        for (gh, f) in g_head.iter_mut().zip(pooled) {
            *gh += upstream * f;
        }
        g_bias[0] += upstream;

        let denom = (g.frames * h2 * w2) as f64;
        let frame_in = C_IN * h0 * w0;
        let frame_z1 = c1 * h1 * w1;
        let frame_z2 = c2 * h2 * w2;
        let mut dz2 = vec![0.0; frame_z2];
        let mut a1 = vec![0.0; frame_z1];
        let mut da1 = vec![0.0; frame_z1];
        for t in 0..g.frames {
            let z2t = &z2[t * frame_z2..(t + 1) * frame_z2];
            for c in 0..c2 {
                let dpool = upstream * head[c] / denom;
                for i in c * h2 * w2..(c + 1) * h2 * w2 {
                    dz2[i] = dpool * leaky_grad(z2t[i]);
                }
            }
            let z1t = &z1[t * frame_z1..(t + 1) * frame_z1];
            for (a, &z) in a1.iter_mut().zip(z1t) {
                *a = leaky(z);
            }
            da1.iter_mut().for_each(|v| *v = 0.0);
            conv_backward(&a1, c1, h1, w1, w_conv2, c2, &dz2, g_conv2, Some(&mut da1));
            for (d, &z) in da1.iter_mut().zip(z1t) {
                *d *= leaky_grad(z);
            }
            let xt = &x[t * frame_in..(t + 1) * frame_in];
            conv_backward(xt, C_IN, h0, w0, w_conv1, c1, &da1, g_conv1, None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::PatchOrigin;
    use rand::SeedableRng;

    fn patch(g: PatchGeometry, f: impl Fn(usize) -> u16) -> Patch {
        Patch {
            data: (0..g.len()).map(f).collect(),
            origin: PatchOrigin { sequence_id: "p".into(), frame_offset: 0, x: 0, y: 0 },
            geometry: g,
            bit_depth: 8,
        }
    }

    #[test]
    fn identical_inputs_give_zero() {
        let g = PatchGeometry::new(3, 9, 7);
        let b = ToyConv::new(BackboneConfig::toy(g, 8));
        let params = b.init_params(&mut ChaCha8Rng::seed_from_u64(1));
        let p = patch(g, |i| (i * 37 % 251) as u16);
        assert_eq!(b.forward(&params, &p, &p).unwrap().0, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = PatchGeometry::new(2, 7, 6);
        let b = ToyConv::new(BackboneConfig::toy(g, 8));
        let params = b.init_params(&mut ChaCha8Rng::seed_from_u64(3));
        let r = patch(g, |i| (i * 37 % 200) as u16 + 20);
        let d = patch(g, |i| ((i * 37 % 200) as i64 + 20 + (i as i64 * 13 % 17) - 8).clamp(0, 255) as u16);
        let (_, tape) = b.forward(&params, &r, &d).unwrap();
        let mut grad = vec![0.0; b.param_count()];
        b.backward(&params, &tape, 1.0, &mut grad);
        let h = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = b.forward(&p, &r, &d).unwrap().0;
            p[i] -= 2.0 * h;
            let down = b.forward(&p, &r, &d).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {i}: analytic {} vs numeric {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn geometry_mismatch() {
        let g = PatchGeometry::new(2, 8, 8);
        let b = ToyConv::new(BackboneConfig::toy(g, 8));
        let params = b.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let other = patch(PatchGeometry::new(2, 8, 4), |_| 0);
        assert!(b.forward(&params, &other, &other).is_err());
    }
}
