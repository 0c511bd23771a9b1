//! Q-function machinery: continuous-time embeddings, fixed-length history
//! features, a small MLP with hand-written backpropagation, a tabular Q for
//! enumerable processes, and the soft-updated target copy.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{outcome_total, Event, EventKind};
use crate::rng::SeedStream;

pub const EMBEDDING_BASE: f64 = 1e5;

/// Sinusoidal embedding: coordinate `k` is `sin(t·C^(−k/d))` for even `k`
/// and `cos(t·C^(−(k−1)/d))` for odd `k`.
pub fn embed_time(t: f64, dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    embed_time_into(t, dim, &mut out)?;
    Ok(out)
}

fn embed_time_into(t: f64, dim: usize, out: &mut [f64]) -> Result<()> {
    if dim % 2 != 0 {
        return Err(Error::InvalidParameter(format!("embedding dimension {dim} must be even")));
    }
    for k in (0..dim).step_by(2) {
        let w = EMBEDDING_BASE.powf(-(k as f64) / dim as f64);
        out[k] = (t * w).sin();
        out[k + 1] = (t * w).cos();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Number of most recent events summarised individually.
    pub k_events: usize,
    pub time_dim: usize,
    /// Widest mark across event kinds; shorter marks are zero-padded.
    pub mark_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            k_events: 16,
            time_dim: 16,
            mark_dim: 1,
        }
    }
}

const KINDS: usize = 3;

impl FeatureConfig {
    fn slot_len(&self) -> usize {
        KINDS + 1 + self.mark_dim + self.time_dim
    }

    pub fn dim(&self) -> usize {
        2 * self.time_dim + self.k_events * self.slot_len() + KINDS + 1
    }

    /// Offset of the per-kind counts and outcome sum.
    pub fn summary_offset(&self) -> usize {
        2 * self.time_dim + self.k_events * self.slot_len()
    }
}

fn kind_column(kind: EventKind) -> usize {
    match kind {
        EventKind::Feature => 0,
        EventKind::Outcome => 1,
        EventKind::Treatment | EventKind::ObservedTreatment => 2,
    }
}

/// Fixed-length summary of `(H_t, t)`:
/// `[emb(t), emb(t − t_last), K × (kind one-hot, present, mark, emb(time)),
/// counts per kind, outcome sum]`, most recent event first.
pub fn featurize(history: &[Event], t: f64, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cfg.dim()];
    let d = cfg.time_dim;
    embed_time_into(t, d, &mut out[..d])?;
    let last = history.last().map_or(0.0, |e| e.time);
    embed_time_into(t - last, d, &mut out[d..2 * d])?;
    let slot = cfg.slot_len();
    for (i, e) in history.iter().rev().take(cfg.k_events).enumerate() {
        let base = 2 * d + i * slot;
        out[base + kind_column(e.kind)] = 1.0;
        out[base + KINDS] = 1.0;
        if e.mark.len() > cfg.mark_dim {
            return Err(Error::MarkDimension {
                kind: e.kind.as_str(),
                expected: cfg.mark_dim,
                got: e.mark.len(),
            });
        }
        out[base + KINDS + 1..base + KINDS + 1 + e.mark.len()].copy_from_slice(&e.mark);
        let tb = base + KINDS + 1 + cfg.mark_dim;
        embed_time_into(e.time, d, &mut out[tb..tb + d])?;
    }
    let s = cfg.summary_offset();
    for e in history {
        out[s + kind_column(e.kind)] += 1.0;
    }
    out[s + KINDS] = outcome_total(history);
    Ok(out)
}

/// Per-coordinate affine input normalisation fitted on a feature sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_sd: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            inv_sd: vec![1.0; dim],
        }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let inv_sd = var
            .iter()
            .map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, inv_sd }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((x, m), s) in x.iter_mut().zip(&self.mean).zip(&self.inv_sd) {
            *x = (*x - m) * s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => crate::simulators::sigmoid(z),
        }
    }
}

/// Fully connected network with a scalar linear output. Parameters are one
/// flat vector: for each layer, the row-major weight matrix then the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl Mlp {
    /// `sizes = [input, hidden..., 1]`. Weights ~ N(0, 1/fan_in), output
    /// layer scaled down by 10, biases zero.
    pub fn new(sizes: Vec<usize>, activation: Activation, rng: &mut dyn RngCore) -> Result<Self> {
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let scale = (1.0 / n_in as f64).sqrt() * if l + 1 == layers { 0.1 } else { 1.0 };
            for _ in 0..n_in * n_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(scale * z);
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Ok(Mlp {
            sizes,
            activation,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.sizes[0] {
            return Err(Error::InvalidParameter(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.sizes[0]
            )));
        }
        Ok(())
    }

    /// Forward pass with explicit parameters (used for the target copy).
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let layers = self.sizes.len() - 1;
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut z = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
            }
            if l + 1 < layers {
                for zo in z.iter_mut() {
                    *zo = self.activation.apply(*zo);
                }
            }
            a = z;
        }
        Ok(a[0])
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.forward_with(&self.params, x)
    }

    /// Output and its gradient with respect to every parameter, accumulated
    /// into `grad` scaled by `weight`.
    pub fn backward(&self, x: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64> {
        self.check_input(x)?;
        let layers = self.sizes.len() - 1;
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        post.push(x.to_vec());
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offsets.push(off);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &post[l];
            let mut z = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(a).map(|(p, q)| p * q).sum::<f64>();
            }
            let act = if l + 1 < layers {
                z.iter().map(|v| self.activation.apply(*v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(act);
        }
        let out = post[layers][0];

        let mut delta = vec![weight];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a = &post[l];
            for o in 0..n_out {
                let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += delta[o] * ai;
                }
                grad[off + n_in * n_out + o] += delta[o];
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                for (ni, wi) in next.iter_mut().zip(row) {
                    *ni += delta[o] * wi;
                }
            }
            for (i, ni) in next.iter_mut().enumerate() {
                *ni *= self.activation.derivative(pre[l - 1][i], post[l][i]);
            }
            delta = next;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd {
        lr: f64,
        momentum: f64,
        velocity: Vec<f64>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd {
                lr,
                momentum,
                velocity: vec![0.0; n],
            },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => *lr = new_lr,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd {
                lr,
                momentum,
                velocity,
            } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *v = *momentum * *v + g;
                    *p -= *lr * *v;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
        }
    }
}

/// Slowly tracking copy `θ′ ← τθ + (1−τ)θ′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCopy {
    pub params: Vec<f64>,
    pub tau: f64,
}

impl TargetCopy {
    pub fn new(params: &[f64], tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParameter(format!("τ = {tau} outside (0, 1]")));
        }
        Ok(TargetCopy {
            params: params.to_vec(),
            tau,
        })
    }

    pub fn soft_update(&mut self, online: &[f64]) {
        let tau = self.tau;
        if tau == 1.0 {
            self.params.copy_from_slice(online);
            return;
        }
        for (p, o) in self.params.iter_mut().zip(online) {
            *p = tau * o + (1.0 - tau) * *p;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

/// MLP Q-function over featurised histories. Predictions are
/// `offset + scale · net(standardise(featurize(H, t)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpQ {
    pub features: FeatureConfig,
    pub input: Standardizer,
    pub net: Mlp,
    pub output_offset: f64,
    pub output_scale: f64,
}

impl MlpQ {
    pub fn new(features: FeatureConfig, mlp: &MlpConfig, rng: &mut dyn RngCore) -> Result<Self> {
        let dim = features.dim();
        let mut sizes = vec![dim];
        sizes.extend(&mlp.hidden);
        sizes.push(1);
        Ok(MlpQ {
            input: Standardizer::identity(dim),
            net: Mlp::new(sizes, mlp.activation, rng)?,
            features,
            output_offset: 0.0,
            output_scale: 1.0,
        })
    }

    pub fn encode(&self, history: &[Event], t: f64) -> Result<Vec<f64>> {
        let mut x = featurize(history, t, &self.features)?;
        self.input.apply(&mut x);
        Ok(x)
    }

    pub fn value_encoded(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.output_offset + self.output_scale * self.net.forward_with(params, x)?)
    }

    pub fn value(&self, history: &[Event], t: f64) -> Result<f64> {
        let x = self.encode(history, t)?;
        self.value_encoded(&self.net.params, &x)
    }

    /// Value under the target-copy parameters.
    pub fn target_value(&self, target: &TargetCopy, history: &[Event], t: f64) -> Result<f64> {
        let x = self.encode(history, t)?;
        self.value_encoded(&target.params, &x)
    }

    /// Mean of `½(q − y)²` over the batch (in normalised output units) and
    /// its gradient; returns the pre-step loss after applying one optimiser
    /// step.
    pub fn grad_step(&mut self, batch: &[(Vec<f64>, f64)], opt: &mut Optimizer, iteration: usize) -> Result<f64> {
        let mut grad = vec![0.0; self.net.n_params()];
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for (x, y) in batch {
            let yn = (y - self.output_offset) / self.output_scale;
            let out = self.net.forward(x)?;
            let r = out - yn;
            loss += 0.5 * r * r / n;
            self.net.backward(x, r / n, &mut grad)?;
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                detail: format!("loss {loss}, gradient norm {}", grad.iter().map(|g| g * g).sum::<f64>().sqrt()),
            });
        }
        opt.step(&mut self.net.params, &grad);
        Ok(loss)
    }
}

/// One squared-loss step on a single example; returns the pre-step loss.
pub fn q_grad_step(q: &mut MlpQ, features: &[f64], label: f64, opt: &mut Optimizer) -> Result<f64> {
    q.grad_step(&[(features.to_vec(), label)], opt, 0)
}

pub fn soft_update(q: &MlpQ, copy: &mut TargetCopy) {
    copy.soft_update(&q.net.params);
}

/// Exact table keyed by canonical discrete-history encodings. Serialised as
/// a map from dotted key strings (`"0.1.2"`, `"∅"` for the empty history).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "BTreeMap<String, f64>", try_from = "BTreeMap<String, f64>")]
pub struct TabularQ {
    pub values: BTreeMap<Vec<u8>, f64>,
}

impl From<TabularQ> for BTreeMap<String, f64> {
    fn from(q: TabularQ) -> Self {
        q.values.into_iter().map(|(k, v)| (key_string(&k), v)).collect()
    }
}

impl TryFrom<BTreeMap<String, f64>> for TabularQ {
    type Error = Error;

    fn try_from(m: BTreeMap<String, f64>) -> Result<Self> {
        let values = m
            .into_iter()
            .map(|(k, v)| Ok((parse_key(&k)?, v)))
            .collect::<Result<_>>()?;
        Ok(TabularQ { values })
    }
}

pub fn key_string(key: &[u8]) -> String {
    if key.is_empty() {
        return "∅".into();
    }
    key.iter().map(u8::to_string).collect::<Vec<_>>().join(".")
}

/// Serde adapter for maps keyed by discrete histories.
pub mod keyed {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<V: Serialize, S: Serializer>(m: &BTreeMap<Vec<u8>, V>, s: S) -> Result<S::Ok, S::Error> {
        let named: BTreeMap<String, &V> = m.iter().map(|(k, v)| (super::key_string(k), v)).collect();
        named.serialize(s)
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Vec<u8>, V>, D::Error> {
        let named = BTreeMap::<String, V>::deserialize(d)?;
        named
            .into_iter()
            .map(|(k, v)| Ok((super::parse_key(&k).map_err(D::Error::custom)?, v)))
            .collect()
    }
}

pub fn parse_key(s: &str) -> Result<Vec<u8>> {
    if s == "∅" {
        return Ok(Vec::new());
    }
    s.split('.')
        .map(|p| p.parse::<u8>().map_err(|_| Error::MissingKey(format!("malformed key `{s}`"))))
        .collect()
}

impl TabularQ {
    pub fn new() -> Self {
        TabularQ::default()
    }

    pub fn get(&self, key: &[u8]) -> Result<f64> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(key_string(key)))
    }

    pub fn set(&mut self, key: Vec<u8>, value: f64) {
        self.values.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute difference over the union of keys; a key present
    /// in only one table is an error.
    pub fn max_abs_diff(&self, other: &TabularQ) -> Result<f64> {
        let mut m: f64 = 0.0;
        for (k, v) in &self.values {
            m = m.max((v - other.get(k)?).abs());
        }
        for k in other.values.keys() {
            self.get(k)?;
        }
        Ok(m)
    }
}

/// Relative error `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)` of the backpropagated gradient
/// of `½(f(x) − y)²` against central finite differences.
pub fn gradient_relative_error(net: &Mlp, x: &[f64], y: f64) -> Result<f64> {
    let mut grad = vec![0.0; net.n_params()];
    let out = net.forward(x)?;
    net.backward(x, out - y, &mut grad)?;
    let h = 1e-6;
    let mut p = net.params.clone();
    let mut num = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = 0.5 * (net.forward_with(&p, x)? - y).powi(2);
        p[i] = orig - h;
        let down = 0.5 * (net.forward_with(&p, x)? - y).powi(2);
        p[i] = orig;
        num.push((up - down) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = grad.iter().zip(&num).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&grad).max(norm(&num)).max(1e-12))
}

/// Worst gradient error over `cases` random small networks (alternating
/// tanh and softplus) with Gaussian inputs and labels.
pub fn gradient_check(cases: u64, seed: u64) -> Result<f64> {
    let root = SeedStream::new(seed);
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let mut rng = root.index(i).rng();
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Softplus };
        let net = Mlp::new(vec![5, 7, 6, 1], act, &mut rng)?;
        let x: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: f64 = rng.sample(StandardNormal);
        worst = worst.max(gradient_relative_error(&net, &x, y)?);
    }
    Ok(worst)
}

/// Worst relative deviation from `‖θ′_n − θ‖ = (1−τ)^n ‖θ′_0 − θ‖` over
/// `n = 1..=steps` of soft updates towards a frozen `theta`.
pub fn soft_update_law_error(start: &[f64], theta: &[f64], tau: f64, steps: i32) -> Result<f64> {
    let dist = |a: &[f64]| a.iter().zip(theta).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let d0 = dist(start);
    let mut copy = TargetCopy::new(start, tau)?;
    let mut worst: f64 = 0.0;
    for n in 1..=steps {
        copy.soft_update(theta);
        let expected = (1.0 - tau).powi(n) * d0;
        worst = worst.max((dist(&copy.params) - expected).abs() / expected);
    }
    Ok(worst)
}
