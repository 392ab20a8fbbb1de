//! A small PointNet-style network: a shared per-point MLP on the noisy
//! cloud, conditioned on a max-pooled encoding of the condition cloud and,
//! optionally, a sinusoidal step embedding. Forward and backward passes are
//! written out by hand in `f32`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HapError, Result};

const MAGIC: &[u8; 4] = b"HAPW";
const VERSION: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Width of the per-point layers.
    pub hidden: usize,
    /// Number of per-point hidden layers; each one sees the condition and
    /// step embedding.
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Width of the first condition layer.
    pub cond_hidden: usize,
    /// Width of the pooled condition feature.
    pub global: usize,
    /// Size of the sinusoidal step embedding; 0 disables it.
    pub time_dims: usize,
    /// Per-condition-point feature count (xyz + rgb).
    pub cond_dims: usize,
    /// Number of diffusion steps the step embedding was trained for.
    #[serde(default)]
    pub steps: usize,
}

fn default_layers() -> usize {
    3
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 128,
            layers: 3,
            cond_hidden: 64,
            global: 128,
            time_dims: 16,
            cond_dims: 6,
            steps: 1000,
        }
    }
}

// Tensor order in `PointNet::params`: the condition encoder, then
// (w, wg, wt, b) per point layer, then the output layer.
const WC1: usize = 0;
const BC1: usize = 1;
const WC2: usize = 2;
const BC2: usize = 3;
const LAYER0: usize = 4;

fn layer(l: usize) -> (usize, usize, usize, usize) {
    let b = LAYER0 + 4 * l;
    (b, b + 1, b + 2, b + 3)
}

fn tensor_name(cfg: &NetConfig, i: usize) -> String {
    match i {
        WC1 => "wc1".into(),
        BC1 => "bc1".into(),
        WC2 => "wc2".into(),
        BC2 => "bc2".into(),
        i if i < LAYER0 + 4 * cfg.layers => {
            let l = (i - LAYER0) / 4;
            format!("{}{}", ["w", "wg", "wt", "b"][(i - LAYER0) % 4], l + 1)
        }
        i if i == LAYER0 + 4 * cfg.layers => "wout".into(),
        _ => "bout".into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointNet {
    pub config: NetConfig,
    /// Weights as `in × out` matrices; biases as `1 × out`.
    pub params: Vec<Array2<f32>>,
}

/// Activations kept for the backward pass.
pub struct Tape {
    x: Array2<f32>,
    cond: Array2<f32>,
    temb: Array1<f32>,
    c1: Array2<f32>,
    c2: Array2<f32>,
    argmax: Vec<usize>,
    g: Array1<f32>,
    acts: Vec<Array2<f32>>,
}

fn relu(a: &mut Array2<f32>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn relu_mask(grad: &mut Array2<f32>, act: &Array2<f32>) {
    Zip::from(grad).and(act).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

fn row(b: &Array2<f32>) -> ndarray::ArrayView1<'_, f32> {
    b.row(0)
}

impl PointNet {
    /// He-initialized weights; with `zero_last` the output layer starts at
    /// zero so the network initially predicts 0.
    pub fn new<R: Rng>(config: NetConfig, zero_last: bool, rng: &mut R) -> Self {
        assert!(config.layers >= 1, "at least one point layer");
        let mut params: Vec<Array2<f32>> = tensor_shapes(&config)
            .into_iter()
            .enumerate()
            .map(|(i, (r, c))| {
                let name = tensor_name(&config, i);
                if name.starts_with('b') {
                    return Array2::zeros((r, c));
                }
                // the three inputs of a point layer share one fan-in
                let fan_in = if name.starts_with("wc") || name == "wout" {
                    r
                } else {
                    let l = (i - LAYER0) / 4;
                    let input = if l == 0 { 3 } else { config.hidden };
                    input + config.global + config.time_dims
                };
                let n = Normal::new(0.0f32, (2.0 / fan_in.max(1) as f32).sqrt()).unwrap();
                Array2::from_shape_fn((r, c), |_| n.sample(rng))
            })
            .collect();
        let wout = params.len() - 2;
        if zero_last {
            params[wout].fill(0.0);
        } else {
            params[wout].mapv_inplace(|v| v * 0.1);
        }
        PointNet { config, params }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Array2<f32>> {
        self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect()
    }

    /// Sinusoidal embedding of a step index scaled to `[0, 1000]`.
    pub fn time_embedding(&self, t: usize, t_max: usize) -> Array1<f32> {
        let td = self.config.time_dims;
        let tau = t as f64 * 1000.0 / t_max.max(1) as f64;
        let half = td / 2;
        Array1::from_shape_fn(td, |i| {
            let k = i % half.max(1);
            let freq = (-(10000f64.ln()) * k as f64 / half.max(1) as f64).exp();
            let a = tau * freq;
            (if i < half { a.sin() } else { a.cos() }) as f32
        })
    }

    /// Pooled condition feature; constant across the steps of one sample.
    pub fn encode_condition(&self, cond: &Array2<f32>) -> Array1<f32> {
        self.encode(cond).3
    }

    fn encode(&self, cond: &Array2<f32>) -> (Array2<f32>, Array2<f32>, Vec<usize>, Array1<f32>) {
        let p = &self.params;
        assert_eq!(cond.ncols(), self.config.cond_dims, "condition feature count");
        let mut c1 = cond.dot(&p[WC1]) + row(&p[BC1]);
        relu(&mut c1);
        let mut c2 = c1.dot(&p[WC2]) + row(&p[BC2]);
        relu(&mut c2);
        let hg = self.config.global;
        let mut argmax = vec![0usize; hg];
        let mut g = Array1::<f32>::zeros(hg);
        if c2.nrows() > 0 {
            for k in 0..hg {
                let col = c2.column(k);
                let (mut bi, mut bv) = (0, f32::NEG_INFINITY);
                for (i, &v) in col.iter().enumerate() {
                    if v > bv {
                        bi = i;
                        bv = v;
                    }
                }
                argmax[k] = bi;
                g[k] = bv;
            }
        }
        (c1, c2, argmax, g)
    }

    /// Per-layer biases from the condition feature and step embedding.
    fn layer_biases(&self, g: &Array1<f32>, temb: &Array1<f32>) -> Vec<Array1<f32>> {
        let p = &self.params;
        (0..self.config.layers)
            .map(|l| {
                let (_, wg, wt, b) = layer(l);
                g.dot(&p[wg]) + temb.dot(&p[wt]) + row(&p[b])
            })
            .collect()
    }

    fn point_layers(&self, x: &Array2<f32>, biases: &[Array1<f32>]) -> Vec<Array2<f32>> {
        let mut acts: Vec<Array2<f32>> = Vec::with_capacity(biases.len());
        for (l, bias) in biases.iter().enumerate() {
            let input = if l == 0 { x } else { &acts[l - 1] };
            let mut a = input.dot(&self.params[layer(l).0]) + bias;
            relu(&mut a);
            acts.push(a);
        }
        acts
    }

    fn output(&self, last: &Array2<f32>) -> Array2<f32> {
        let n = self.params.len();
        last.dot(&self.params[n - 2]) + row(&self.params[n - 1])
    }

    /// Per-point output for a precomputed condition feature `g`.
    pub fn predict_with_global(&self, x: &Array2<f32>, g: &Array1<f32>, temb: &Array1<f32>) -> Array2<f32> {
        let biases = self.layer_biases(g, temb);
        let acts = self.point_layers(x, &biases);
        self.output(acts.last().expect("at least one layer"))
    }

    pub fn forward(&self, x: Array2<f32>, cond: Array2<f32>, temb: Array1<f32>) -> (Array2<f32>, Tape) {
        assert_eq!(temb.len(), self.config.time_dims, "time embedding size");
        let (c1, c2, argmax, g) = self.encode(&cond);
        let biases = self.layer_biases(&g, &temb);
        let acts = self.point_layers(&x, &biases);
        let out = self.output(acts.last().expect("at least one layer"));
        (
            out,
            Tape {
                x,
                cond,
                temb,
                c1,
                c2,
                argmax,
                g,
                acts,
            },
        )
    }

    /// Parameter gradients given the loss gradient on the output.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f32>) -> Vec<Array2<f32>> {
        let p = &self.params;
        let n = p.len();
        let nl = self.config.layers;
        let mut grads = self.zeros_like();
        grads[n - 2] = tape.acts[nl - 1].t().dot(d_out);
        grads[n - 1] = d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut da = d_out.dot(&p[n - 2].t());
        let mut dg = Array1::<f32>::zeros(self.config.global);
        for l in (0..nl).rev() {
            let (w, wg, wt, b) = layer(l);
            relu_mask(&mut da, &tape.acts[l]);
            let input = if l == 0 { &tape.x } else { &tape.acts[l - 1] };
            grads[w] = input.t().dot(&da);
            let dh = da.sum_axis(Axis(0));
            grads[wg] = outer(&tape.g, &dh);
            grads[wt] = outer(&tape.temb, &dh);
            dg += &p[wg].dot(&dh);
            if l > 0 {
                da = da.dot(&p[w].t());
            }
            grads[b] = dh.insert_axis(Axis(0));
        }
        if tape.c2.nrows() > 0 {
            let mut dc2 = Array2::<f32>::zeros(tape.c2.raw_dim());
            for (k, &i) in tape.argmax.iter().enumerate() {
                if tape.c2[[i, k]] > 0.0 {
                    dc2[[i, k]] += dg[k];
                }
            }
            grads[WC2] = tape.c1.t().dot(&dc2);
            grads[BC2] = dc2.sum_axis(Axis(0)).insert_axis(Axis(0));
            let mut dc1 = dc2.dot(&p[WC2].t());
            relu_mask(&mut dc1, &tape.c1);
            grads[WC1] = tape.cond.t().dot(&dc1);
            grads[BC1] = dc1.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        grads
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let cfg = serde_json::to_vec(&self.config)?;
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(&cfg)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for t in &self.params {
            w.write_all(&2u32.to_le_bytes())?;
            for d in t.shape() {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
        }
        for t in &self.params {
            for v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut dyn Read) -> Result<Self> {
        let bad = |m: &str| HapError::parse("weights", m);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a weight file (bad magic)"));
        }
        let mut u = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u)?;
            Ok(u32::from_le_bytes(u))
        };
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = read_u32(r)? as usize;
        let mut cfg = vec![0u8; n];
        r.read_exact(&mut cfg)?;
        let config: NetConfig = serde_json::from_slice(&cfg)?;
        let count = read_u32(r)? as usize;
        let want_shapes = tensor_shapes(&config);
        if count != want_shapes.len() {
            return Err(bad(&format!("expected {} tensors, found {count}", want_shapes.len())));
        }
        let mut shapes = Vec::with_capacity(count);
        for (i, want) in want_shapes.iter().enumerate() {
            let ndim = read_u32(r)?;
            if ndim != 2 {
                return Err(bad(&format!("tensor {} has rank {ndim}", tensor_name(&config, i))));
            }
            let shape = (read_u32(r)? as usize, read_u32(r)? as usize);
            if shape != *want {
                return Err(bad(&format!(
                    "tensor {} has shape {shape:?}, expected {want:?}",
                    tensor_name(&config, i)
                )));
            }
            shapes.push(shape);
        }
        let mut params = Vec::with_capacity(count);
        let mut buf = [0u8; 4];
        for shape in shapes {
            let mut data = Vec::with_capacity(shape.0 * shape.1);
            for _ in 0..shape.0 * shape.1 {
                r.read_exact(&mut buf)?;
                data.push(f32::from_le_bytes(buf));
            }
            params.push(Array2::from_shape_vec(shape, data).expect("shape checked"));
        }
        Ok(PointNet { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| crate::io::open_err(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(f))
    }
}

fn outer(a: &Array1<f32>, b: &Array1<f32>) -> Array2<f32> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Gradient-descent state for a [`PointNet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Momentum { lr: f32, momentum: f32 },
    Adam { lr: f32, beta1: f32, beta2: f32 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Momentum { lr: 1e-3, momentum: 0.9 }
    }
}

pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
    step: i32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, net: &PointNet) -> Self {
        Optimizer {
            config,
            m: net.zeros_like(),
            v: net.zeros_like(),
            step: 0,
        }
    }

    pub fn apply(&mut self, net: &mut PointNet, grads: &[Array2<f32>]) {
        self.step += 1;
        match self.config {
            OptimizerConfig::Momentum { lr, momentum } => {
                for ((p, m), g) in net.params.iter_mut().zip(&mut self.m).zip(grads) {
                    Zip::from(&mut *m).and(g).for_each(|m, &g| *m = momentum * *m + g);
                    p.scaled_add(-lr, m);
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2 } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (((p, m), v), g) in net.params.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grads) {
                    Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                    });
                }
            }
        }
    }
}

/// Slice helper used by the tests: parameters as one flat vector.
pub fn flatten(params: &[Array2<f32>]) -> Vec<f32> {
    params.iter().flat_map(|p| p.iter().copied()).collect()
}

fn tensor_shapes(c: &NetConfig) -> Vec<(usize, usize)> {
    let (h, hc, hg, td, cd) = (c.hidden, c.cond_hidden, c.global, c.time_dims, c.cond_dims);
    let mut s = vec![(cd, hc), (1, hc), (hc, hg), (1, hg)];
    for l in 0..c.layers {
        s.extend([(if l == 0 { 3 } else { h }, h), (hg, h), (td, h), (1, h)]);
    }
    s.extend([(h, 3), (1, 3)]);
    s
}
