use super::NetworkParams;
use crate::{Error, Result};

/// Pre-activations `z_l` and activations `a_l` (with `a_0 = x`) of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

/// Rows of a flat sample matrix with labels and optional per-sample weights.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub samples: &'a [f64],
    pub labels: &'a [usize],
    pub weights: Option<&'a [f64]>,
}

impl<'a> Batch<'a> {
    pub fn new(samples: &'a [f64], labels: &'a [usize]) -> Self {
        Batch {
            samples,
            labels,
            weights: None,
        }
    }

    pub fn weighted(samples: &'a [f64], labels: &'a [usize], weights: &'a [f64]) -> Self {
        Batch {
            samples,
            labels,
            weights: Some(weights),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LossGrads {
    /// (Weighted) mean cross-entropy over the batch.
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Gradient of `loss` with respect to each input row, flattened like the batch.
    pub input_grads: Option<Vec<f64>>,
}

fn matvec_add(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n_in = x.len();
    for (row, bias) in w.chunks_exact(n_in).zip(b) {
        let s: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum();
        out.push(s + bias);
    }
}

/// `W^T dz` for a row-major `out x in` matrix.
fn matvec_t(w: &[f64], dz: &[f64], n_in: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_in];
    for (row, &g) in w.chunks_exact(n_in).zip(dz) {
        if g != 0.0 {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p * g;
            }
        }
    }
    out
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

impl NetworkParams {
    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::Dimension {
                expected: self.arch.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.arch.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.arch.num_classes(),
            });
        }
        Ok(())
    }

    /// Forward pass up to (and including) layer `through`.
    fn forward_until(&self, x: &[f64], through: usize) -> ForwardCache {
        let last = self.arch.num_layers() - 1;
        let mut pre = Vec::with_capacity(through + 1);
        let mut act = Vec::with_capacity(through + 2);
        act.push(x.to_vec());
        for l in 0..=through {
            let (w, b) = self.layer(l);
            let mut z = Vec::with_capacity(b.len());
            matvec_add(w, b, &act[l], &mut z);
            if l < last {
                act.push(z.iter().map(|v| v.max(0.0)).collect());
            }
            pre.push(z);
        }
        ForwardCache { pre, act }
    }

    pub fn forward_cache(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        Ok(self.forward_until(x, self.arch.num_layers() - 1))
    }

    /// Logits and embedding (the configured hidden activation, penultimate by default).
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.forward_cache(x)?;
        let emb = cache.act[self.arch.embedding_index()].clone();
        Ok((cache.logits().to_vec(), emb))
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let e = self.arch.embedding_index();
        let mut cache = self.forward_until(x, e - 1);
        Ok(cache.act.swap_remove(e))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let cache = self.forward_cache(x)?;
        let z = cache.logits();
        Ok(z.iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            )
            .0)
    }

    /// Reverse pass. `d_logits` is injected at the output and `d_emb` at the embedding
    /// activation; at least one must be given. Parameter gradients are accumulated into
    /// `grad` when supplied; the input gradient is returned.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: Option<&[f64]>,
        d_emb: Option<&[f64]>,
        mut grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let e = self.arch.embedding_index();
        let (top, mut dz) = match (d_logits, d_emb) {
            (Some(dl), _) => (self.arch.num_layers() - 1, dl.to_vec()),
            (None, Some(de)) => {
                let dz = de
                    .iter()
                    .zip(&cache.pre[e - 1])
                    .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                    .collect();
                (e - 1, dz)
            }
            (None, None) => panic!("backward needs an injected gradient"),
        };
        for l in (0..=top).rev() {
            let fan_in = self.arch.widths[l];
            let (w, _) = self.layer(l);
            if let Some(g) = grad.as_deref_mut() {
                let off = self.arch.layer_offset(l);
                let (gw, gb) = g[off..off + fan_in * dz.len() + dz.len()].split_at_mut(fan_in * dz.len());
                for (o, &dzo) in dz.iter().enumerate() {
                    if dzo != 0.0 {
                        for (gwi, ai) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(&cache.act[l]) {
                            *gwi += dzo * ai;
                        }
                    }
                    gb[o] += dzo;
                }
            }
            let mut da = matvec_t(w, &dz, fan_in);
            if l == e && d_logits.is_some() {
                if let Some(de) = d_emb {
                    da.iter_mut().zip(de).for_each(|(a, g)| *a += g);
                }
            }
            if l == 0 {
                return da;
            }
            dz = da
                .iter()
                .zip(&cache.pre[l - 1])
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect();
        }
        unreachable!("loop returns at layer 0")
    }

    /// Mean (or weighted mean) softmax cross-entropy and its gradients.
    pub fn loss_and_grads(&self, batch: &Batch<'_>, want_input_grads: bool) -> Result<LossGrads> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::config("empty batch"));
        }
        let d = self.arch.input_dim();
        if batch.samples.len() != n * d {
            return Err(Error::Dimension {
                expected: n * d,
                got: batch.samples.len(),
            });
        }
        let total_w: f64 = match batch.weights {
            Some(w) => w.iter().sum(),
            None => n as f64,
        };
        let mut grad = vec![0.0; self.theta.len()];
        let mut input_grads = want_input_grads.then(|| vec![0.0; n * d]);
        let mut loss = 0.0;
        for i in 0..n {
            let y = batch.labels[i];
            self.check_label(y)?;
            let x = &batch.samples[i * d..(i + 1) * d];
            let cache = self.forward_until(x, self.arch.num_layers() - 1);
            let z = cache.logits();
            let scale = batch.weights.map_or(1.0, |w| w[i]) / total_w;
            loss += scale * cross_entropy(z, y);
            let mut dl = softmax(z);
            dl[y] -= 1.0;
            dl.iter_mut().for_each(|v| *v *= scale);
            let gx = self.backward(&cache, Some(&dl), None, Some(&mut grad));
            if let Some(ig) = input_grads.as_mut() {
                ig[i * d..(i + 1) * d].copy_from_slice(&gx);
            }
        }
        Ok(LossGrads {
            loss,
            grad,
            input_grads,
        })
    }

    /// For one sample, returns `h = v . grad_theta CE(x, y)` and `grad_x h`.
    ///
    /// A tangent pass along `v` in parameter space followed by the reverse pass of that
    /// tangent computation; ReLU masks are locally constant so no second derivative of
    /// the activation appears.
    pub fn grad_dot_input_grad(&self, x: &[f64], y: usize, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_label(y)?;
        if v.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                got: v.len(),
            });
        }
        let tangent = NetworkParams {
            arch: self.arch.clone(),
            theta: v.to_vec(),
        };
        let layers = self.arch.num_layers();
        let mut act = vec![x.to_vec()];
        let mut act_dot = vec![vec![0.0; x.len()]];
        let mut pre = Vec::with_capacity(layers);
        let mut pre_dot = Vec::with_capacity(layers);
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let (vw, vb) = tangent.layer(l);
            let mut z = Vec::new();
            matvec_add(w, b, &act[l], &mut z);
            let mut zd = Vec::new();
            matvec_add(vw, vb, &act[l], &mut zd);
            let mut wad = Vec::new();
            matvec_add(w, &vec![0.0; b.len()], &act_dot[l], &mut wad);
            zd.iter_mut().zip(&wad).for_each(|(a, b)| *a += b);
            if l < layers - 1 {
                act.push(z.iter().map(|v| v.max(0.0)).collect());
                act_dot.push(
                    z.iter()
                        .zip(&zd)
                        .map(|(z, d)| if *z > 0.0 { *d } else { 0.0 })
                        .collect(),
                );
            }
            pre.push(z);
            pre_dot.push(zd);
        }
        let p = softmax(&pre[layers - 1]);
        let zd_out = &pre_dot[layers - 1];
        let mut g_zdot: Vec<f64> = p.clone();
        g_zdot[y] -= 1.0;
        let h: f64 = g_zdot.iter().zip(zd_out).map(|(a, b)| a * b).sum();
        let p_dot_zd: f64 = p.iter().zip(zd_out).map(|(a, b)| a * b).sum();
        let mut g_z: Vec<f64> = p.iter().zip(zd_out).map(|(pi, zi)| pi * zi - pi * p_dot_zd).collect();

        for l in (0..layers).rev() {
            let fan_in = self.arch.widths[l];
            let (w, _) = self.layer(l);
            let (vw, _) = tangent.layer(l);
            let mut g_a = matvec_t(vw, &g_zdot, fan_in);
            let wz = matvec_t(w, &g_z, fan_in);
            g_a.iter_mut().zip(&wz).for_each(|(a, b)| *a += b);
            if l == 0 {
                return Ok((h, g_a));
            }
            let g_adot = matvec_t(w, &g_zdot, fan_in);
            let mask = &pre[l - 1];
            g_z = g_a
                .iter()
                .zip(mask)
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect();
            g_zdot = g_adot
                .iter()
                .zip(mask)
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect();
        }
        unreachable!("loop returns at layer 0")
    }
}
