//! Exact ground truth on small discrete-time decision processes.
//!
//! A step is `(x_s, y_s, a_s)`: `x_s ~ P(· | H_{s−1})`, the reward
//! `y_s = r(H_{s−1}, x_s)` is deterministic, and `a_s` is drawn from the
//! observed or the target policy given `(H_{s−1}, x_s)`. Histories are keyed
//! by `[x_1, a_1, …, x_t, a_t]` (even length); policy and reward tables are
//! keyed by `[x_1, a_1, …, x_s]` (odd length). `Y = Σ_s y_s`.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::approximator::{key_string, keyed, TabularQ};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const MAX_HORIZON: usize = 5;
pub const MAX_VALUES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Observed,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteProcess {
    pub horizon: usize,
    pub n_x: usize,
    pub n_a: usize,
    #[serde(with = "keyed")]
    pub features: BTreeMap<Vec<u8>, Vec<f64>>,
    #[serde(with = "keyed")]
    pub pi_obs: BTreeMap<Vec<u8>, Vec<f64>>,
    #[serde(with = "keyed")]
    pub pi: BTreeMap<Vec<u8>, Vec<f64>>,
    #[serde(with = "keyed")]
    pub reward: BTreeMap<Vec<u8>, f64>,
}

/// All keys of the given length over alternating `n_x`/`n_a` alphabets.
pub fn keys_of_length(len: usize, n_x: usize, n_a: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for pos in 0..len {
        let n = if pos % 2 == 0 { n_x } else { n_a };
        out = out
            .into_iter()
            .flat_map(|k| {
                (0..n as u8).map(move |v| {
                    let mut k = k.clone();
                    k.push(v);
                    k
                })
            })
            .collect();
    }
    out
}

fn extend(key: &[u8], more: &[u8]) -> Vec<u8> {
    let mut k = Vec::with_capacity(key.len() + more.len());
    k.extend_from_slice(key);
    k.extend_from_slice(more);
    k
}

fn draw_index(p: &[f64], rng: &mut dyn RngCore) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i as u8;
        }
    }
    // Rounding slack: last index with positive mass.
    p.iter().rposition(|v| *v > 0.0).unwrap_or(0) as u8
}

impl DiscreteProcess {
    /// Random instance: strictly positive feature and observed-policy rows,
    /// a target policy with some zero entries, rewards uniform on [0, 1].
    pub fn random(horizon: usize, n_x: usize, n_a: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let positive_row = |n: usize, rng: &mut dyn RngCore| -> Vec<f64> {
            let w: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        };
        let sparse_row = |n: usize, rng: &mut dyn RngCore| -> Vec<f64> {
            let mut w: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() + 0.05 })
                .collect();
            if w.iter().all(|v| *v == 0.0) {
                let i = rng.random_range(0..n);
                w[i] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        };
        let mut p = DiscreteProcess {
            horizon,
            n_x,
            n_a,
            features: BTreeMap::new(),
            pi_obs: BTreeMap::new(),
            pi: BTreeMap::new(),
            reward: BTreeMap::new(),
        };
        for s in 0..horizon {
            for h in keys_of_length(2 * s, n_x, n_a) {
                p.features.insert(h.clone(), positive_row(n_x, rng));
                for x in 0..n_x as u8 {
                    let k = extend(&h, &[x]);
                    p.pi_obs.insert(k.clone(), positive_row(n_a, rng));
                    p.pi.insert(k.clone(), sparse_row(n_a, rng));
                    p.reward.insert(k, rng.random::<f64>());
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Copy whose target policy equals the observed one.
    pub fn on_policy(&self) -> Self {
        DiscreteProcess {
            pi: self.pi_obs.clone(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(Error::InvalidParameter(format!(
                "horizon {} outside 1..={MAX_HORIZON}",
                self.horizon
            )));
        }
        for (name, n) in [("feature", self.n_x), ("action", self.n_a)] {
            if n == 0 || n > MAX_VALUES {
                return Err(Error::InvalidParameter(format!("{name} space size {n} outside 1..={MAX_VALUES}")));
            }
        }
        let check_row = |table: &str, key: &[u8], row: Option<&Vec<f64>>, n: usize| -> Result<()> {
            let row = row.ok_or_else(|| Error::MissingKey(format!("{table}[{}]", key_string(key))))?;
            if row.len() != n || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidParameter(format!("{table}[{}] is not a distribution", key_string(key))));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("{table}[{}] sums to {s}", key_string(key))));
            }
            Ok(())
        };
        for s in 0..self.horizon {
            for h in keys_of_length(2 * s, self.n_x, self.n_a) {
                check_row("features", &h, self.features.get(&h), self.n_x)?;
                for x in 0..self.n_x as u8 {
                    let k = extend(&h, &[x]);
                    check_row("pi_obs", &k, self.pi_obs.get(&k), self.n_a)?;
                    check_row("pi", &k, self.pi.get(&k), self.n_a)?;
                    let r = self
                        .reward
                        .get(&k)
                        .ok_or_else(|| Error::MissingKey(format!("reward[{}]", key_string(&k))))?;
                    if !r.is_finite() {
                        return Err(Error::InvalidParameter(format!("reward[{}] not finite", key_string(&k))));
                    }
                    let (po, pt) = (&self.pi_obs[&k], &self.pi[&k]);
                    if pt.iter().zip(po).any(|(t, o)| *t > 0.0 && *o == 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "overlap violated at {}: target puts mass where the observed policy has none",
                            key_string(&k)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn feature_probs(&self, history: &[u8]) -> Result<&[f64]> {
        self.features
            .get(history)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingKey(format!("features[{}]", key_string(history))))
    }

    pub fn policy(&self, under: Measure, key: &[u8]) -> Result<&[f64]> {
        let table = match under {
            Measure::Observed => &self.pi_obs,
            Measure::Target => &self.pi,
        };
        table
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingKey(format!("policy[{}]", key_string(key))))
    }

    pub fn reward_at(&self, key: &[u8]) -> Result<f64> {
        self.reward
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(format!("reward[{}]", key_string(key))))
    }

    /// Rewards already realised in a (full-step) history.
    pub fn past_reward(&self, history: &[u8]) -> Result<f64> {
        let mut s = 0.0;
        for step in 0..history.len() / 2 {
            s += self.reward_at(&history[..2 * step + 1])?;
        }
        Ok(s)
    }

    /// Probability of a full-step history under the given measure.
    pub fn prefix_probability(&self, history: &[u8], under: Measure) -> Result<f64> {
        self.check_history(history)?;
        let mut p = 1.0;
        for step in 0..history.len() / 2 {
            let h = &history[..2 * step];
            let x = history[2 * step];
            let a = history[2 * step + 1];
            p *= self.feature_probs(h)?[x as usize];
            p *= self.policy(under, &history[..2 * step + 1])?[a as usize];
        }
        Ok(p)
    }

    fn check_history(&self, history: &[u8]) -> Result<()> {
        if history.len() % 2 != 0 || history.len() > 2 * self.horizon {
            return Err(Error::InvalidParameter(format!(
                "history {} is not a full-step prefix",
                key_string(history)
            )));
        }
        for (i, v) in history.iter().enumerate() {
            let n = if i % 2 == 0 { self.n_x } else { self.n_a };
            if *v as usize >= n {
                return Err(Error::InvalidParameter(format!("value {v} out of range in {}", key_string(history))));
            }
        }
        Ok(())
    }

    /// Full-step histories of length `t`.
    pub fn histories(&self, t: usize) -> Vec<Vec<u8>> {
        keys_of_length(2 * t, self.n_x, self.n_a)
    }

    pub fn all_histories(&self) -> Vec<Vec<u8>> {
        (0..=self.horizon).flat_map(|t| self.histories(t)).collect()
    }

    /// Extend `prefix` to a full trajectory under the given measure.
    pub fn sample_continuation(&self, prefix: &[u8], under: Measure, rng: &mut dyn RngCore) -> Result<Vec<u8>> {
        self.check_history(prefix)?;
        let mut h = prefix.to_vec();
        while h.len() < 2 * self.horizon {
            let x = draw_index(self.feature_probs(&h)?, rng);
            h.push(x);
            let a = draw_index(self.policy(under, &h)?, rng);
            h.push(a);
        }
        Ok(h)
    }

    /// Expected future reward `E[Y_{>t} | H_t]` for every full-step history,
    /// by backward recursion.
    pub fn future_table(&self, under: Measure) -> Result<BTreeMap<Vec<u8>, f64>> {
        let mut table = BTreeMap::new();
        for h in self.histories(self.horizon) {
            table.insert(h, 0.0);
        }
        for t in (0..self.horizon).rev() {
            for h in self.histories(t) {
                let mut v = 0.0;
                for (x, px) in self.feature_probs(&h)?.iter().enumerate() {
                    if *px == 0.0 {
                        continue;
                    }
                    let hx = extend(&h, &[x as u8]);
                    let mut inner = self.reward_at(&hx)?;
                    for (a, pa) in self.policy(under, &hx)?.iter().enumerate() {
                        if *pa > 0.0 {
                            inner += pa * table[&extend(&hx, &[a as u8])];
                        }
                    }
                    v += px * inner;
                }
                table.insert(h, v);
            }
        }
        Ok(table)
    }
}

/// `E[Y | H_t = prefix]` by summing over every completion of the prefix.
pub fn enumerate_expectation(proc: &DiscreteProcess, prefix: &[u8], under: Measure) -> Result<f64> {
    if proc.prefix_probability(prefix, Measure::Observed)? == 0.0 {
        return Err(Error::ZeroProbabilityPrefix(key_string(prefix)));
    }
    fn future(proc: &DiscreteProcess, h: &mut Vec<u8>, under: Measure) -> Result<f64> {
        if h.len() == 2 * proc.horizon {
            return Ok(0.0);
        }
        let px = proc.feature_probs(h)?.to_vec();
        let mut v = 0.0;
        for (x, p) in px.iter().enumerate() {
            h.push(x as u8);
            let y = proc.reward_at(h)?;
            let pa = proc.policy(under, h)?.to_vec();
            for (a, q) in pa.iter().enumerate() {
                let w = p * q;
                if w > 0.0 {
                    h.push(a as u8);
                    v += w * (y + future(proc, h, under)?);
                    h.pop();
                }
            }
            h.pop();
        }
        Ok(v)
    }
    let mut h = prefix.to_vec();
    Ok(proc.past_reward(prefix)? + future(proc, &mut h, under)?)
}

/// Both sides of the discrete expansion identity for `E_P[Y | H_t]` at depth
/// `d`: `lhs` is the direct enumeration under the target; `rhs` sums, over
/// the augmented draws `(x, a_obs, a)` of the next `d` steps, the
/// disagreement-indicator-weighted expectations at the spliced histories plus
/// the all-agree term.
pub fn verify_discrete_identity(proc: &DiscreteProcess, prefix: &[u8], d: usize) -> Result<(f64, f64)> {
    let t = prefix.len() / 2;
    if d == 0 || t + d > proc.horizon {
        return Err(Error::InvalidParameter(format!("depth {d} invalid at t={t}, T={}", proc.horizon)));
    }
    let lhs = enumerate_expectation(proc, prefix, Measure::Target)?;
    let mut memo: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    let mut conditional = |h: &[u8]| -> Result<f64> {
        if let Some(v) = memo.get(h) {
            return Ok(*v);
        }
        let v = enumerate_expectation(proc, h, Measure::Target)?;
        memo.insert(h.to_vec(), v);
        Ok(v)
    };

    fn walk(
        proc: &DiscreteProcess,
        h: &mut Vec<u8>,
        k: usize,
        d: usize,
        conditional: &mut dyn FnMut(&[u8]) -> Result<f64>,
    ) -> Result<f64> {
        let px = proc.feature_probs(h)?.to_vec();
        let mut total = 0.0;
        for (x, p) in px.iter().enumerate() {
            h.push(x as u8);
            let obs = proc.policy(Measure::Observed, h)?.to_vec();
            let tgt = proc.policy(Measure::Target, h)?.to_vec();
            for (ao, po) in obs.iter().enumerate() {
                for (a, pt) in tgt.iter().enumerate() {
                    let w = p * po * pt;
                    if w == 0.0 {
                        continue;
                    }
                    h.push(a as u8);
                    let v = if a != ao || k == d {
                        conditional(h)?
                    } else {
                        walk(proc, h, k + 1, d, conditional)?
                    };
                    h.pop();
                    total += w * v;
                }
            }
            h.pop();
        }
        Ok(total)
    }

    let mut h = prefix.to_vec();
    let rhs = walk(proc, &mut h, 1, d, &mut conditional)?;
    Ok((lhs, rhs))
}

/// One application of the EDQ operator at `h`: follow the observed stream
/// while both policies agree, bootstrapping from `q` at the first
/// disagreement and stopping at the horizon.
pub fn edq_operator(proc: &DiscreteProcess, q: &TabularQ, h: &[u8]) -> Result<f64> {
    fn walk(proc: &DiscreteProcess, q: &TabularQ, h: &mut Vec<u8>) -> Result<f64> {
        if h.len() == 2 * proc.horizon {
            return Ok(0.0);
        }
        let px = proc.feature_probs(h)?.to_vec();
        let mut total = 0.0;
        for (x, p) in px.iter().enumerate() {
            h.push(x as u8);
            let y = proc.reward_at(h)?;
            let obs = proc.policy(Measure::Observed, h)?.to_vec();
            let tgt = proc.policy(Measure::Target, h)?.to_vec();
            let mut inner = 0.0;
            for (ao, po) in obs.iter().enumerate() {
                for (a, pt) in tgt.iter().enumerate() {
                    let w = po * pt;
                    if w == 0.0 {
                        continue;
                    }
                    h.push(a as u8);
                    inner += w * if a != ao { q.get(h)? } else { walk(proc, q, h)? };
                    h.pop();
                }
            }
            h.pop();
            total += p * (y + inner);
        }
        Ok(total)
    }
    let mut h = h.to_vec();
    walk(proc, q, &mut h)
}

/// The unique solution of the EDQ self-consistency system, by backward
/// induction on history length (`Q(H_T) = 0`).
pub fn edq_fixed_point(proc: &DiscreteProcess) -> Result<TabularQ> {
    let mut q = TabularQ::new();
    for t in (0..=proc.horizon).rev() {
        for h in proc.histories(t) {
            let v = if t == proc.horizon { 0.0 } else { edq_operator(proc, &q, &h)? };
            q.set(h, v);
        }
    }
    Ok(q)
}

/// `max_H |Q(H) − (EDQ operator Q)(H)|`.
pub fn edq_residual(proc: &DiscreteProcess, q: &TabularQ) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for h in proc.all_histories() {
        let target = if h.len() == 2 * proc.horizon { 0.0 } else { edq_operator(proc, q, &h)? };
        worst = worst.max((q.get(&h)? - target).abs());
    }
    Ok(worst)
}

/// One-step Bellman (FQE) solution on the native grid: at each step the
/// target policy's action is taken and the next-step value bootstrapped.
pub fn fqe_fixed_point(proc: &DiscreteProcess) -> Result<TabularQ> {
    let mut q = TabularQ::new();
    for t in (0..=proc.horizon).rev() {
        for h in proc.histories(t) {
            if t == proc.horizon {
                q.set(h, 0.0);
                continue;
            }
            let mut v = 0.0;
            for (x, px) in proc.feature_probs(&h)?.iter().enumerate() {
                let hx = extend(&h, &[x as u8]);
                let mut inner = proc.reward_at(&hx)?;
                for (a, pa) in proc.policy(Measure::Target, &hx)?.iter().enumerate() {
                    if *pa > 0.0 {
                        inner += pa * q.get(&extend(&hx, &[a as u8]))?;
                    }
                }
                v += px * inner;
            }
            q.set(h, v);
        }
    }
    Ok(q)
}

/// Instance `i` of the seeded random sweep: horizon 1–4, 2–3 feature and
/// action values.
pub fn sweep_instance(seed: u64, i: u64) -> Result<DiscreteProcess> {
    let mut rng = SeedStream::new(seed).child("oracle-sweep").index(i).rng();
    let horizon = rng.random_range(1..=4);
    let n_x = rng.random_range(2..=MAX_VALUES);
    let n_a = rng.random_range(2..=MAX_VALUES);
    DiscreteProcess::random(horizon, n_x, n_a, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    pub instances: usize,
    pub checks: usize,
    pub max_error: f64,
}

/// `max |lhs − rhs|` of [`verify_discrete_identity`] over every history and
/// every valid depth of `instances` sweep instances.
pub fn identity_sweep(instances: usize, seed: u64) -> Result<SweepReport> {
    let mut report = SweepReport { instances, checks: 0, max_error: 0.0 };
    for i in 0..instances {
        let p = sweep_instance(seed, i as u64)?;
        for t in 0..p.horizon {
            for h in p.histories(t) {
                for d in 1..=p.horizon - t {
                    let (lhs, rhs) = verify_discrete_identity(&p, &h, d)?;
                    report.max_error = report.max_error.max((lhs - rhs).abs());
                    report.checks += 1;
                }
            }
        }
    }
    Ok(report)
}

/// `max |Q*(H) − (E_target[Y | H] − past reward)|` over every history of
/// `instances` sweep instances, `Q*` the EDQ fixed point.
pub fn fixed_point_sweep(instances: usize, seed: u64) -> Result<SweepReport> {
    let mut report = SweepReport { instances, checks: 0, max_error: 0.0 };
    for i in 0..instances {
        let p = sweep_instance(seed, i as u64)?;
        let q = edq_fixed_point(&p)?;
        for h in p.all_histories() {
            let truth = enumerate_expectation(&p, &h, Measure::Target)? - p.past_reward(&h)?;
            report.max_error = report.max_error.max((q.get(&h)? - truth).abs());
            report.checks += 1;
        }
    }
    Ok(report)
}

/// A two-step binary process with hand-set tables; its target value
/// `E[Y] = 2.076` and observed value `2.834` were summed independently.
pub fn hand_fixture() -> DiscreteProcess {
    let mut p = DiscreteProcess {
        horizon: 2,
        n_x: 2,
        n_a: 2,
        features: BTreeMap::new(),
        pi_obs: BTreeMap::new(),
        pi: BTreeMap::new(),
        reward: BTreeMap::new(),
    };
    p.features.insert(vec![], vec![0.6, 0.4]);
    p.features.insert(vec![0, 0], vec![0.7, 0.3]);
    p.features.insert(vec![0, 1], vec![0.2, 0.8]);
    p.features.insert(vec![1, 0], vec![0.5, 0.5]);
    p.features.insert(vec![1, 1], vec![0.9, 0.1]);
    p.pi_obs.insert(vec![0], vec![0.5, 0.5]);
    p.pi_obs.insert(vec![1], vec![0.3, 0.7]);
    p.pi.insert(vec![0], vec![1.0, 0.0]);
    p.pi.insert(vec![1], vec![0.2, 0.8]);
    p.reward.insert(vec![0], 1.0);
    p.reward.insert(vec![1], 2.0);
    for x1 in 0..2u8 {
        for a1 in 0..2u8 {
            for x2 in 0..2u8 {
                let k = vec![x1, a1, x2];
                p.pi_obs.insert(k.clone(), vec![0.5, 0.5]);
                p.pi.insert(k.clone(), vec![0.4, 0.6]);
                p.reward.insert(k, 3.0 * x2 as f64 + a1 as f64 - x1 as f64);
            }
        }
    }
    p
}
