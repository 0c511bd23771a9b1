//! Training procedures: EDQ, discretized FQE and ERM (Monte-Carlo
//! regression) over continuous-time datasets, plus the sampled tabular EDQ
//! used on the enumerable discrete processes.
//!
//! All Q-functions predict *future* outcome mass, `E[Y | H_t] − Σ y_{≤t}`.
//! Use [`predict_total`] to recover a total-outcome estimate.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::{FeatureConfig, MlpConfig, MlpQ, Optimizer, OptimizerKind, Standardizer, TabularQ, TargetCopy};
use crate::disagreement::{disagreement_time, first_observed_treatment, first_target_treatment, splice, Boundary};
use crate::error::{Error, Result};
use crate::oracle::{DiscreteProcess, Measure};
use crate::process::{after, outcome_total, Event, EventKind, Policy, Trajectory};
use crate::rng::SeedStream;
use crate::simulators::Simulator;
use crate::stats;

/// Trajectories with their outcomes, all drawn under one policy.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub horizon: f64,
    pub records: Vec<(Trajectory, f64)>,
}

impl Dataset {
    pub fn new(records: Vec<(Trajectory, f64)>, horizon: f64) -> Result<Self> {
        for (i, (traj, _)) in records.iter().enumerate() {
            if traj.horizon() != horizon {
                return Err(Error::InvalidTrajectory(format!(
                    "trajectory {i} has horizon {}, dataset horizon is {horizon}",
                    traj.horizon()
                )));
            }
        }
        Ok(Dataset { horizon, records })
    }

    /// `n` patients, patient `i` drawn from `seeds.index(i)`.
    pub fn simulate(sim: &dyn Simulator, policy: &Policy, n: usize, seeds: &SeedStream) -> Result<Self> {
        let records = (0..n)
            .into_par_iter()
            .map(|i| sim.simulate(policy, &mut seeds.index(i as u64).rng()))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records, sim.horizon())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Edq,
    Fqe,
    Erm,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Edq => "edq",
            EstimatorKind::Fqe => "fqe",
            EstimatorKind::Erm => "erm",
        }
    }
}

/// Distribution of update times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeSampling {
    /// Uniform on `[0, T)`.
    Uniform,
    /// Uniform over the trajectory's event times (and 0).
    EventTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate at the last iteration, as a fraction of `lr` (linear decay).
    pub lr_end_factor: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub tau: f64,
    pub time_sampling: TimeSampling,
    /// FQE cell width.
    pub fqe_step: f64,
    pub seed: u64,
    pub features: FeatureConfig,
    pub mlp: MlpConfig,
    /// Prefixes used to fit the input standardiser and output scale.
    pub calibration_samples: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 5000,
            batch_size: 1,
            lr: 1e-3,
            lr_end_factor: 1.0,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            tau: 0.01,
            time_sampling: TimeSampling::Uniform,
            fqe_step: 1.0,
            seed: 0,
            features: FeatureConfig::default(),
            mlp: MlpConfig::default(),
            calibration_samples: 2000,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_end_factor.is_finite() && self.lr_end_factor > 0.0) {
            return bad(format!("lr_end_factor must be positive, got {}", self.lr_end_factor));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.fqe_step.is_finite() && self.fqe_step > 0.0) {
            return bad(format!("fqe_step must be positive, got {}", self.fqe_step));
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        Ok(())
    }
}

/// One row of the training-diagnostic CSV, averaged over `log_every`
/// iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub iteration: usize,
    pub loss: f64,
    pub mean_label: f64,
    /// Mean bootstrap window length (δ for EDQ, the cell width for FQE, the
    /// remaining horizon for ERM).
    pub mean_delta: f64,
    /// Fraction of labels without a bootstrap term.
    pub horizon_fraction: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "iteration,loss,mean_label,mean_delta,horizon_fraction";

impl DiagnosticRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.9e},{:.9e},{:.9e},{:.6}",
            self.iteration, self.loss, self.mean_label, self.mean_delta, self.horizon_fraction
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedQ {
    pub estimator: EstimatorKind,
    pub q: MlpQ,
    pub target: TargetCopy,
    pub optimizer: Optimizer,
    pub iterations_done: usize,
    pub diagnostics: Vec<DiagnosticRow>,
}

impl TrainedQ {
    /// Predicted future outcome mass.
    pub fn value(&self, history: &[Event], t: f64) -> Result<f64> {
        self.q.value(history, t)
    }
}

/// Total-outcome estimate `Q(H_t) + Σ y_{≤t}`, with `Q ≡ 0` from the horizon
/// on (nothing is left to happen, and the network never trains there).
pub fn predict_total(q: &MlpQ, history: &[Event], t: f64, horizon: f64) -> Result<f64> {
    let future = if t < horizon { q.value(history, t)? } else { 0.0 };
    Ok(future + outcome_total(history))
}

/// A regression label and how it was formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelDraw {
    pub label: f64,
    pub delta: f64,
    pub boundary: Boundary,
}

/// The EDQ label at `t`: outcome mass on `(t, t+δ]` plus the frozen Q at the
/// spliced history unless the window reaches the horizon.
///
/// Only the first target treatment before the first observed one is drawn;
/// later target draws do not affect δ.
pub fn edq_label(
    traj: &Trajectory,
    t: f64,
    target: &Policy,
    q_target: &dyn Fn(&[Event], f64) -> Result<f64>,
    rng: &mut dyn RngCore,
) -> Result<LabelDraw> {
    let until = first_observed_treatment(traj, t).map_or(traj.horizon(), |e| e.time);
    if !(t < traj.horizon()) {
        return Err(Error::InvalidParameter(format!("label time {t} must precede the horizon")));
    }
    let segment: Vec<Event> = first_target_treatment(traj, target, t, until, rng)?.into_iter().collect();
    let (end, boundary) = disagreement_time(traj, &segment, t);
    let delta = end - t;
    let mass: f64 = traj
        .window(t, end)
        .iter()
        .filter(|e| e.kind == EventKind::Outcome)
        .map(Event::value)
        .sum();
    let label = if boundary == Boundary::HorizonReached {
        mass
    } else {
        let spliced = splice(traj, &segment, t, delta)?;
        mass + q_target(spliced.events(), end)?
    };
    Ok(LabelDraw { label, delta, boundary })
}

/// One-cell FQE label: outcome mass on `(t, t+h]` plus the frozen Q at
/// `t+h`, where the observed treatments in the cell are replaced by a single
/// target treatment at the cell end with the target's probability of
/// treating somewhere in the cell.
pub fn fqe_label(
    traj: &Trajectory,
    t: f64,
    h: f64,
    target: &Policy,
    q_target: &dyn Fn(&[Event], f64) -> Result<f64>,
    rng: &mut dyn RngCore,
) -> Result<LabelDraw> {
    let horizon = traj.horizon();
    let end = (t + h).min(horizon);
    let cell: Vec<Event> = traj
        .window(t, end)
        .iter()
        .filter(|e| e.kind != EventKind::Treatment)
        .cloned()
        .collect();
    let mass: f64 = cell.iter().filter(|e| e.kind == EventKind::Outcome).map(Event::value).sum();
    if end >= horizon {
        return Ok(LabelDraw {
            label: mass,
            delta: end - t,
            boundary: Boundary::HorizonReached,
        });
    }
    let mut history: Vec<Event> = traj.prefix(t).to_vec();
    // No-treatment probability over the cell, with the history updated at
    // each retained event.
    let mut survive = 1.0;
    let mut from = t;
    for e in &cell {
        survive *= target.no_treatment_probability(from, e.time, &history)?;
        history.push(e.clone());
        from = e.time;
    }
    survive *= target.no_treatment_probability(from, end, &history)?;
    let treats = rng.random::<f64>() < 1.0 - survive;
    let boundary = if treats {
        let mark = target.sample_mark(end, &history, rng)?;
        let prev = history.last().map_or(f64::NEG_INFINITY, |e| e.time);
        history.push(Event::new(after(prev, end), EventKind::Treatment, mark));
        Boundary::TargetTreats
    } else {
        Boundary::ObservedTreats
    };
    let at = history.last().map_or(end, |e| e.time.max(end));
    Ok(LabelDraw {
        label: mass + q_target(&history, at)?,
        delta: end - t,
        boundary,
    })
}

/// ERM label: the trajectory's own future outcome mass.
pub fn erm_label(traj: &Trajectory, t: f64) -> LabelDraw {
    LabelDraw {
        label: traj.outcome_sum_after(t),
        delta: traj.horizon() - t,
        boundary: Boundary::HorizonReached,
    }
}

fn draw_time(traj: &Trajectory, sampling: TimeSampling, rng: &mut dyn RngCore) -> f64 {
    match sampling {
        TimeSampling::Uniform => rng.random::<f64>() * traj.horizon(),
        TimeSampling::EventTimes => {
            let events = traj.events();
            let i = rng.random_range(0..=events.len());
            let t = if i == 0 { 0.0 } else { events[i - 1].time };
            if t < traj.horizon() {
                t
            } else {
                rng.random::<f64>() * traj.horizon()
            }
        }
    }
}

/// Fits the input standardiser on sampled prefixes and sets the output
/// affine map to the mean and sd of the future outcome mass.
fn calibrate(q: &mut MlpQ, data: &Dataset, cfg: &TrainConfig, rng: &mut dyn RngCore) -> Result<()> {
    if cfg.calibration_samples == 0 {
        return Ok(());
    }
    let mut rows = Vec::with_capacity(cfg.calibration_samples);
    let mut ys = Vec::with_capacity(cfg.calibration_samples);
    for _ in 0..cfg.calibration_samples {
        let (traj, _) = &data.records[rng.random_range(0..data.len())];
        let t = draw_time(traj, cfg.time_sampling, rng);
        rows.push(crate::approximator::featurize(traj.prefix(t), t, &q.features)?);
        ys.push(traj.outcome_sum_after(t));
    }
    q.input = Standardizer::fit(&rows);
    q.output_offset = stats::mean(&ys);
    let sd = stats::population_sd(&ys);
    q.output_scale = if sd > 1e-12 { sd } else { 1.0 };
    Ok(())
}

/// Fresh model for `data` under `cfg` (calibrated, untrained).
pub fn init_model(data: &Dataset, cfg: &TrainConfig) -> Result<(MlpQ, TargetCopy, Optimizer)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot train on an empty dataset".into()));
    }
    let seeds = SeedStream::new(cfg.seed);
    let mut q = MlpQ::new(cfg.features.clone(), &cfg.mlp, &mut seeds.child("init").rng())?;
    calibrate(&mut q, data, cfg, &mut seeds.child("calibrate").rng())?;
    let target = TargetCopy::new(&q.net.params, cfg.tau)?;
    let opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.momentum, q.net.n_params());
    Ok((q, target, opt))
}

/// Runs (or resumes) the shared training loop until `cfg.iterations`.
/// Labels in a batch are built in parallel from per-draw seed streams, so
/// the result does not depend on the thread count.
pub fn train_from(
    mut state: TrainedQ,
    data: &Dataset,
    target_policy: Option<&Policy>,
    cfg: &TrainConfig,
) -> Result<TrainedQ> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot train on an empty dataset".into()));
    }
    let kind = state.estimator;
    let policy = match (kind, target_policy) {
        (EstimatorKind::Erm, _) => None,
        (_, Some(p)) => Some(p),
        (_, None) => {
            return Err(Error::InvalidParameter(format!("{} needs a target policy", kind.as_str())));
        }
    };
    let seeds = SeedStream::new(cfg.seed).child("train");
    let mut acc = (0.0, 0.0, 0.0, 0.0, 0usize);
    for it in state.iterations_done..cfg.iterations {
        let frac = it as f64 / cfg.iterations as f64;
        state.optimizer.set_lr(cfg.lr * (1.0 - (1.0 - cfg.lr_end_factor) * frac));
        let step = seeds.index(it as u64);
        let q = &state.q;
        let copy = &state.target;
        let draws = (0..cfg.batch_size)
            .into_par_iter()
            .map(|j| -> Result<(Vec<f64>, LabelDraw)> {
                let mut rng = step.index(j as u64).rng();
                let (traj, _) = &data.records[rng.random_range(0..data.len())];
                let t = draw_time(traj, cfg.time_sampling, &mut rng);
                let frozen = |h: &[Event], s: f64| q.target_value(copy, h, s);
                let draw = match kind {
                    EstimatorKind::Edq => edq_label(traj, t, policy.unwrap(), &frozen, &mut rng)?,
                    EstimatorKind::Fqe => fqe_label(traj, t, cfg.fqe_step, policy.unwrap(), &frozen, &mut rng)?,
                    EstimatorKind::Erm => erm_label(traj, t),
                };
                Ok((q.encode(traj.prefix(t), t)?, draw))
            })
            .collect::<Result<Vec<_>>>()?;
        let batch: Vec<(Vec<f64>, f64)> = draws.iter().map(|(x, d)| (x.clone(), d.label)).collect();
        let loss = state.q.grad_step(&batch, &mut state.optimizer, it)?;
        state.target.soft_update(&state.q.net.params);
        state.iterations_done = it + 1;

        let n = draws.len() as f64;
        acc.0 += loss;
        acc.1 += draws.iter().map(|(_, d)| d.label).sum::<f64>() / n;
        acc.2 += draws.iter().map(|(_, d)| d.delta).sum::<f64>() / n;
        acc.3 += draws.iter().filter(|(_, d)| d.boundary == Boundary::HorizonReached).count() as f64 / n;
        acc.4 += 1;
        if state.iterations_done % cfg.log_every == 0 || state.iterations_done == cfg.iterations {
            let k = acc.4 as f64;
            state.diagnostics.push(DiagnosticRow {
                iteration: state.iterations_done,
                loss: acc.0 / k,
                mean_label: acc.1 / k,
                mean_delta: acc.2 / k,
                horizon_fraction: acc.3 / k,
            });
            acc = (0.0, 0.0, 0.0, 0.0, 0);
        }
    }
    Ok(state)
}

fn train(data: &Dataset, target: Option<&Policy>, cfg: &TrainConfig, estimator: EstimatorKind) -> Result<TrainedQ> {
    let (q, copy, optimizer) = init_model(data, cfg)?;
    let state = TrainedQ {
        estimator,
        q,
        target: copy,
        optimizer,
        iterations_done: 0,
        diagnostics: Vec::new(),
    };
    train_from(state, data, target, cfg)
}

/// Earliest-disagreement Q-evaluation.
pub fn train_edq(data: &Dataset, target: &Policy, cfg: &TrainConfig) -> Result<TrainedQ> {
    train(data, Some(target), cfg, EstimatorKind::Edq)
}

/// Fitted Q-evaluation with one-cell bootstrapping on cells of width
/// `cfg.fqe_step`.
pub fn train_fqe_discretized(data: &Dataset, target: &Policy, cfg: &TrainConfig) -> Result<TrainedQ> {
    train(data, Some(target), cfg, EstimatorKind::Fqe)
}

/// Monte-Carlo regression of every prefix onto its own future outcome.
pub fn train_erm(data: &Dataset, cfg: &TrainConfig) -> Result<TrainedQ> {
    train(data, None, cfg, EstimatorKind::Erm)
}

pub fn train_estimator(kind: EstimatorKind, data: &Dataset, target: &Policy, cfg: &TrainConfig) -> Result<TrainedQ> {
    train(data, Some(target), cfg, kind)
}

// ---------------------------------------------------------------------------
// Tabular mode on discrete processes

/// Sampled EDQ label at step `t` of a full observed trajectory `base`: the
/// target action is drawn on the observed history at each step; at the first
/// disagreement the label bootstraps from `q`.
pub fn edq_label_discrete(
    proc: &DiscreteProcess,
    base: &[u8],
    t: usize,
    q: &TabularQ,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if base.len() != 2 * proc.horizon || t >= proc.horizon {
        return Err(Error::InvalidParameter(format!(
            "need a full trajectory and t < T, got length {} and t={t}",
            base.len()
        )));
    }
    let mut sum = 0.0;
    for s in t..proc.horizon {
        let hx = &base[..2 * s + 1];
        sum += proc.reward_at(hx)?;
        let a = draw(proc.policy(Measure::Target, hx)?, rng);
        if a != base[2 * s + 1] {
            let mut h = hx.to_vec();
            h.push(a);
            return Ok(sum + q.get(&h)?);
        }
    }
    Ok(sum)
}

fn draw(p: &[f64], rng: &mut dyn RngCore) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i as u8;
        }
    }
    p.iter().rposition(|v| *v > 0.0).unwrap_or(0) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularConfig {
    pub updates: usize,
    /// Step at the n-th visit of a history is `n^(−power)`.
    pub step_power: f64,
    /// Update-step distribution: uniform, or proportional to the number of
    /// histories of each length so that every table entry is visited at a
    /// similar rate.
    pub balance_steps: bool,
    pub seed: u64,
    /// Record the sup-distance to this table every `log_every` updates.
    pub log_every: usize,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            updates: 200_000,
            step_power: 1.0,
            balance_steps: false,
            seed: 0,
            log_every: 10_000,
        }
    }
}

/// Sampled tabular EDQ: each update draws a fresh observed trajectory and a
/// uniform step, builds [`edq_label_discrete`] against the current table and
/// moves that history's entry towards it. Terminal entries stay at 0.
/// Returns the table and `(update, sup-distance to reference)` checkpoints
/// when a reference is given.
pub fn train_edq_tabular(
    proc: &DiscreteProcess,
    cfg: &TabularConfig,
    reference: Option<&TabularQ>,
) -> Result<(TabularQ, Vec<(usize, f64)>)> {
    proc.validate()?;
    if cfg.updates == 0 || cfg.log_every == 0 {
        return Err(Error::InvalidParameter("updates and log_every must be positive".into()));
    }
    if !(cfg.step_power > 0.5 && cfg.step_power <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "step_power {} outside (0.5, 1]",
            cfg.step_power
        )));
    }
    let mut q = TabularQ::new();
    let mut visits = std::collections::BTreeMap::new();
    for h in proc.all_histories() {
        visits.insert(h.clone(), 0u64);
        q.set(h, 0.0);
    }
    let mut rng = SeedStream::new(cfg.seed).child("tabular-edq").rng();
    let weights: Vec<f64> = (0..proc.horizon)
        .map(|t| if cfg.balance_steps { ((proc.n_x * proc.n_a) as f64).powi(t as i32) } else { 1.0 })
        .collect();
    let steps = rand::distr::weighted::WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidParameter(format!("step weights: {e}")))?;
    let mut trace = Vec::new();
    for u in 0..cfg.updates {
        let base = proc.sample_continuation(&[], Measure::Observed, &mut rng)?;
        let t = rng.sample(&steps);
        let y = edq_label_discrete(proc, &base, t, &q, &mut rng)?;
        let key = &base[..2 * t];
        let n = visits.get_mut(key).expect("all histories registered");
        *n += 1;
        let step = (*n as f64).powf(-cfg.step_power);
        let old = q.get(key)?;
        q.set(key.to_vec(), old + step * (y - old));
        if (u + 1) % cfg.log_every == 0 {
            if let Some(r) = reference {
                trace.push((u + 1, q.max_abs_diff(r)?));
            }
        }
    }
    Ok((q, trace))
}

/// Expectation-form EDQ iteration: Jacobi sweeps of the exact EDQ operator
/// starting from zero. Reaches the fixed point after at most `T` sweeps.
pub fn edq_value_iteration(proc: &DiscreteProcess, sweeps: usize) -> Result<TabularQ> {
    let mut q = TabularQ::new();
    for h in proc.all_histories() {
        q.set(h, 0.0);
    }
    for _ in 0..sweeps {
        let mut next = TabularQ::new();
        for h in proc.all_histories() {
            let v = if h.len() == 2 * proc.horizon {
                0.0
            } else {
                crate::oracle::edq_operator(proc, &q, &h)?
            };
            next.set(h, v);
        }
        q = next;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{edq_fixed_point, hand_fixture};
    use crate::process::{Constant, FixedMark};
    use crate::simulators::{make_failure_policy, FailureSim, FailureSimParams};

    fn ev(t: f64, kind: EventKind, v: f64) -> Event {
        Event::new(t, kind, vec![v])
    }

    #[test]
    fn horizon_label_without_outcomes_is_zero() {
        let traj = Trajectory::new(vec![ev(0.5, EventKind::Feature, 1.0)], 5.0).unwrap();
        let never = Policy::never(1);
        let q = |_: &[Event], _: f64| Ok(100.0);
        let d = edq_label(&traj, 1.0, &never, &q, &mut SeedStream::new(0).rng()).unwrap();
        assert_eq!(d.label, 0.0);
        assert_eq!(d.boundary, Boundary::HorizonReached);
    }

    #[test]
    fn label_adds_window_mass_and_bootstrap() {
        let traj = Trajectory::new(
            vec![ev(1.5, EventKind::Outcome, 1.0), ev(2.0, EventKind::Treatment, 1.0), ev(3.0, EventKind::Outcome, 7.0)],
            5.0,
        )
        .unwrap();
        let never = Policy::never(1);
        let q = |h: &[Event], s: f64| {
            assert_eq!(s, 2.0);
            assert!(h.iter().all(|e| e.kind != EventKind::Treatment));
            Ok(2.0)
        };
        let d = edq_label(&traj, 1.0, &never, &q, &mut SeedStream::new(0).rng()).unwrap();
        assert_eq!(d.label, 3.0);
        assert_eq!(d.boundary, Boundary::ObservedTreats);
    }

    #[test]
    fn label_uses_target_treatment_when_first() {
        let traj = Trajectory::new(vec![ev(4.0, EventKind::Treatment, 1.0)], 5.0).unwrap();
        let eager = Policy::from_intensity(Constant(50.0), FixedMark(vec![9.0]));
        let q = |h: &[Event], s: f64| {
            let last = h.last().unwrap();
            assert_eq!(last.kind, EventKind::Treatment);
            assert_eq!(last.mark, vec![9.0]);
            assert_eq!(last.time, s);
            Ok(1.0)
        };
        let d = edq_label(&traj, 0.0, &eager, &q, &mut SeedStream::new(3).rng()).unwrap();
        assert_eq!(d.boundary, Boundary::TargetTreats);
        assert!(d.delta < 1.0);
        assert_eq!(d.label, 1.0);
    }

    #[test]
    fn fqe_label_single_cell_is_window_mass() {
        let traj = Trajectory::new(
            vec![ev(1.0, EventKind::Treatment, 1.0), ev(2.0, EventKind::Outcome, 4.0)],
            5.0,
        )
        .unwrap();
        let q = |_: &[Event], _: f64| Ok(100.0);
        let d = fqe_label(&traj, 0.0, 5.0, &Policy::never(1), &q, &mut SeedStream::new(0).rng()).unwrap();
        assert_eq!(d.label, 4.0);
        assert_eq!(d.boundary, Boundary::HorizonReached);
    }

    #[test]
    fn fqe_label_treatment_frequency() {
        let traj = Trajectory::new(vec![], 10.0).unwrap();
        let policy = Policy::from_intensity(Constant(0.7), FixedMark(vec![1.0]));
        let q = |h: &[Event], _: f64| Ok(h.len() as f64);
        let root = SeedStream::new(11);
        let n = 20_000;
        let hits: f64 = (0..n)
            .map(|i| fqe_label(&traj, 1.0, 1.0, &policy, &q, &mut root.index(i).rng()).unwrap().label)
            .sum();
        let p = 1.0 - (-0.7f64).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 4.0 * se);
    }

    fn toy_data(n: usize, seed: u64) -> Dataset {
        let params = FailureSimParams::short();
        let sim = FailureSim::new(params.clone()).unwrap();
        let policy = make_failure_policy(&params, params.rate).unwrap();
        Dataset::simulate(&sim, &policy, n, &SeedStream::new(seed)).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 300,
            batch_size: 8,
            features: FeatureConfig {
                k_events: 4,
                time_dim: 4,
                mark_dim: 1,
            },
            mlp: MlpConfig {
                hidden: vec![8],
                ..MlpConfig::default()
            },
            calibration_samples: 200,
            log_every: 50,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(40, 1);
        let params = FailureSimParams::short();
        let target = make_failure_policy(&params, 0.2).unwrap();
        let a = train_edq(&data, &target, &small_cfg()).unwrap();
        let b = train_edq(&data, &target, &small_cfg()).unwrap();
        assert_eq!(a.q.net.params, b.q.net.params);
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.diagnostics.len(), 6);
    }

    #[test]
    fn resume_matches_single_run() {
        let data = toy_data(30, 2);
        let target = make_failure_policy(&FailureSimParams::short(), 0.2).unwrap();
        let cfg = small_cfg();
        let full = train_fqe_discretized(&data, &target, &cfg).unwrap();
        let half_cfg = TrainConfig {
            iterations: 150,
            ..cfg.clone()
        };
        let half = train_fqe_discretized(&data, &target, &half_cfg).unwrap();
        let resumed = train_from(half, &data, Some(&target), &cfg).unwrap();
        assert_eq!(resumed.q.net.params, full.q.net.params);
    }

    #[test]
    fn erm_learns_constant_outcome() {
        let recs = (0..20)
            .map(|i| {
                let t = 1.0 + i as f64 * 0.1;
                (Trajectory::new(vec![ev(t, EventKind::Outcome, 2.5)], 5.0).unwrap(), 2.5)
            })
            .collect();
        let data = Dataset::new(recs, 5.0).unwrap();
        let cfg = TrainConfig {
            iterations: 2000,
            batch_size: 16,
            lr: 3e-3,
            ..small_cfg()
        };
        let q = train_erm(&data, &cfg).unwrap();
        let h = [ev(0.5, EventKind::Feature, 0.0)];
        let err = (predict_total(&q.q, &h[..0], 0.5, 1.0).unwrap() - 2.5).abs();
        assert!(err < 0.1, "{err}");
    }

    #[test]
    fn prediction_at_horizon_is_past_outcomes() {
        let data = toy_data(5, 3);
        let (q, _, _) = init_model(&data, &small_cfg()).unwrap();
        let h = [ev(0.2, EventKind::Feature, 1.0), ev(1.0, EventKind::Outcome, 3.5)];
        assert_eq!(predict_total(&q, &h, 1.0, 1.0).unwrap(), 3.5);
        assert_ne!(predict_total(&q, &h[..1], 0.2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn edq_without_target_is_rejected() {
        let data = toy_data(5, 3);
        let (q, target, optimizer) = init_model(&data, &small_cfg()).unwrap();
        let state = TrainedQ {
            estimator: EstimatorKind::Edq,
            q,
            target,
            optimizer,
            iterations_done: 0,
            diagnostics: vec![],
        };
        assert!(train_from(state, &data, None, &small_cfg()).is_err());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = Dataset::new(vec![], 12.0).unwrap();
        assert!(train_erm(&data, &small_cfg()).is_err());
    }

    #[test]
    fn discrete_label_follows_agreement() {
        let mut p = hand_fixture();
        // Deterministic target that always picks action 1.
        for row in p.pi.values_mut() {
            *row = vec![0.0, 1.0];
        }
        let q = edq_fixed_point(&p).unwrap();
        let mut rng = SeedStream::new(0).rng();
        // Agreement throughout: sum of both rewards.
        let agree = [1, 1, 0, 1];
        let y = edq_label_discrete(&p, &agree, 0, &q, &mut rng).unwrap();
        assert_eq!(y, 2.0 + (0.0 + 1.0 - 1.0));
        // Disagreement at the first step: y1 + Q([0, 1]).
        let disagree = [0, 0, 1, 1];
        let y = edq_label_discrete(&p, &disagree, 0, &q, &mut rng).unwrap();
        assert_eq!(y, 1.0 + q.get(&[0, 1]).unwrap());
    }

    #[test]
    fn value_iteration_reaches_fixed_point_in_horizon_sweeps() {
        let p = DiscreteProcess::random(4, 2, 2, &mut SeedStream::new(9).rng()).unwrap();
        let exact = edq_fixed_point(&p).unwrap();
        let q = edq_value_iteration(&p, 4).unwrap();
        assert!(q.max_abs_diff(&exact).unwrap() < 1e-12);
        let short = edq_value_iteration(&p, 2).unwrap();
        assert!(short.max_abs_diff(&exact).unwrap() > 1e-6);
    }

    #[test]
    fn tabular_edq_approaches_fixed_point() {
        let p = hand_fixture();
        let exact = edq_fixed_point(&p).unwrap();
        let cfg = TabularConfig {
            updates: 20_000,
            log_every: 5_000,
            ..TabularConfig::default()
        };
        let (q, trace) = train_edq_tabular(&p, &cfg, Some(&exact)).unwrap();
        assert_eq!(trace.len(), 4);
        assert!(q.max_abs_diff(&exact).unwrap() < 0.1);
    }
}
