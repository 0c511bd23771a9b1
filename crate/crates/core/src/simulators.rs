//! The two synthetic environments: a time-to-failure vital sign and a
//! discrete-time tumor growth model.
//!
//! Both run under an arbitrary [`Policy`] so the same code produces
//! observational data (observed policy) and test sets (target policy). The
//! policies themselves only read the observed history, which is what lets
//! EDQ evaluate them on logged trajectories.
//!
//! Measurement times are deterministic (failure) or Bernoulli per step
//! (tumor), so these are direct event-driven samplers rather than
//! intensity-based [`crate::process::ProcessSpec`]s.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{
    after, Bound, Event, EventKind, EpochRule, IntensityFn, MarkSampler, Policy, Trajectory,
    TreatmentTiming,
};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// An environment that can be rolled out under any treatment policy.
pub trait Simulator: Send + Sync {
    fn horizon(&self) -> f64;
    fn treatment_mark_dim(&self) -> usize;
    /// One patient: the trajectory and its outcome `Y`.
    fn simulate(&self, policy: &Policy, rng: &mut dyn RngCore) -> Result<(Trajectory, f64)>;
}

// ---------------------------------------------------------------------------
// Time to failure

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSimParams {
    pub alpha: f64,
    pub noise_sd: f64,
    /// Effect constant `c`: the k-th treatment raises the vital by `c/k`.
    pub dose_scale: f64,
    pub dose_noise_sd: f64,
    pub threshold: f64,
    /// Observed-policy scheduling rate.
    pub rate: f64,
    pub max_treatments: usize,
    pub initial_vital: f64,
    pub obs_period: f64,
    pub horizon: f64,
}

impl FailureSimParams {
    /// Long trajectories (10–100 events), up to five treatments.
    pub fn long() -> Self {
        FailureSimParams {
            alpha: 0.2,
            noise_sd: 0.05,
            dose_scale: 5.0,
            dose_noise_sd: 0.25,
            threshold: 6.0,
            rate: 0.5,
            max_treatments: 5,
            initial_vital: 10.0,
            obs_period: 1.0,
            horizon: 100.0,
        }
    }

    /// Steep decline, a single treatment: trajectories of 3–10 events.
    pub fn short() -> Self {
        FailureSimParams {
            alpha: 2.5,
            noise_sd: 0.3,
            dose_scale: 5.0,
            dose_noise_sd: 0.25,
            threshold: 6.0,
            rate: 2.0,
            max_treatments: 1,
            initial_vital: 10.0,
            obs_period: 1.0,
            horizon: 12.0,
        }
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        FailureSimParams {
            rate,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("initial_vital", self.initial_vital),
            ("obs_period", self.obs_period),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("noise_sd", self.noise_sd),
            ("dose_scale", self.dose_scale),
            ("dose_noise_sd", self.dose_noise_sd),
            ("threshold", self.threshold),
            ("rate", self.rate),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if self.max_treatments == 0 {
            return Err(Error::InvalidParameter("max_treatments must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Constant hazard `rate` while a sub-threshold measurement taken after the
/// last treatment is waiting to be acted on; zero otherwise.
#[derive(Debug, Clone, Copy)]
pub struct FailureHazard {
    pub rate: f64,
    pub threshold: f64,
    pub max_treatments: usize,
}

impl FailureHazard {
    pub fn pending(&self, history: &[Event]) -> bool {
        let mut last_treat = f64::NEG_INFINITY;
        let mut treatments = 0;
        for e in history {
            match e.kind {
                EventKind::Outcome => return false,
                EventKind::Treatment => {
                    treatments += 1;
                    last_treat = e.time;
                }
                _ => {}
            }
        }
        treatments < self.max_treatments
            && history
                .iter()
                .any(|e| e.kind == EventKind::Feature && e.time > last_treat && e.value() < self.threshold)
    }
}

impl IntensityFn for FailureHazard {
    fn rate(&self, _t: f64, history: &[Event]) -> f64 {
        if self.pending(history) {
            self.rate
        } else {
            0.0
        }
    }

    fn bound(&self, t: f64, history: &[Event]) -> Bound {
        Bound::forever(self.rate(t, history))
    }
}

/// Dose of the k-th treatment: `c/k` plus Gaussian noise.
#[derive(Debug, Clone, Copy)]
pub struct FailureDose {
    pub scale: f64,
    pub noise_sd: f64,
}

impl MarkSampler for FailureDose {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, _t: f64, history: &[Event], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let k = 1 + history.iter().filter(|e| e.kind == EventKind::Treatment).count();
        let z: f64 = rng.sample(StandardNormal);
        Ok(vec![self.scale / k as f64 + self.noise_sd * z])
    }
}

/// Threshold-triggered exponential-delay policy with the given rate.
pub fn make_failure_policy(params: &FailureSimParams, rate: f64) -> Result<Policy> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidParameter(format!("policy rate must be positive, got {rate}")));
    }
    Ok(Policy::from_intensity(
        FailureHazard {
            rate,
            threshold: params.threshold,
            max_treatments: params.max_treatments,
        },
        FailureDose {
            scale: params.dose_scale,
            noise_sd: params.dose_noise_sd,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct FailureSim {
    pub params: FailureSimParams,
}

impl FailureSim {
    pub fn new(params: FailureSimParams) -> Result<Self> {
        params.validate()?;
        Ok(FailureSim { params })
    }
}

impl Simulator for FailureSim {
    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn treatment_mark_dim(&self) -> usize {
        1
    }

    fn simulate(&self, policy: &Policy, rng: &mut dyn RngCore) -> Result<(Trajectory, f64)> {
        simulate_patient_with(&self.params, policy, rng)
    }
}

/// One patient under the observed policy (`params.rate`).
pub fn simulate_patient(params: &FailureSimParams, rng: &mut dyn RngCore) -> Result<(Trajectory, f64)> {
    let policy = make_failure_policy(params, params.rate)?;
    simulate_patient_with(params, &policy, rng)
}

fn push(events: &mut Vec<Event>, time: f64, kind: EventKind, mark: Vec<f64>) {
    let prev = events.last().map_or(f64::NEG_INFINITY, |e| e.time);
    events.push(Event::new(after(prev, time), kind, mark));
}

/// One patient under an arbitrary policy. The vital declines linearly with a
/// slope redrawn every time unit; treatments add their dose to the vital;
/// failure is the first zero crossing, which need not coincide with a
/// measurement.
pub fn simulate_patient_with(
    params: &FailureSimParams,
    policy: &Policy,
    rng: &mut dyn RngCore,
) -> Result<(Trajectory, f64)> {
    params.validate()?;
    let horizon = params.horizon;
    let draw_slope = |rng: &mut dyn RngCore| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        -(params.alpha + params.noise_sd * z)
    };
    let mut events: Vec<Event> = Vec::new();
    let mut v = params.initial_vital;
    let mut s = 0.0;
    let mut slope = draw_slope(rng);
    let mut unit = 1u64;
    let mut obs = 0u64;

    let failure = loop {
        let next_obs = obs as f64 * params.obs_period;
        if next_obs <= s && next_obs < horizon {
            push(&mut events, next_obs, EventKind::Feature, vec![v]);
            obs += 1;
            continue;
        }
        let next_unit = unit as f64;
        let fail_at = if slope < 0.0 { s + v / -slope } else { f64::INFINITY };
        let stop = next_obs.min(next_unit).min(fail_at).min(horizon);

        if let Some(u) = policy.next_treatment(s, stop, &events, rng)? {
            if u < fail_at && u < horizon {
                v += slope * (u - s);
                s = u;
                let mark = policy.sample_mark(u, &events, rng)?;
                v += mark[0];
                push(&mut events, u, EventKind::Treatment, mark);
                continue;
            }
        }

        v += slope * (stop - s);
        s = stop;
        if stop == fail_at || stop == horizon {
            break stop.min(horizon);
        }
        if stop == next_unit {
            slope = draw_slope(rng);
            unit += 1;
        }
    };
    push(&mut events, failure, EventKind::Outcome, vec![failure]);
    Ok((Trajectory::new(events, horizon)?, failure))
}

// ---------------------------------------------------------------------------
// Tumor growth

/// Log-normal coefficient prior: `median · exp(log_sd · z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormal {
    pub median: f64,
    pub log_sd: f64,
}

impl LogNormal {
    pub fn fixed(value: f64) -> Self {
        LogNormal {
            median: value,
            log_sd: 0.0,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.median * (self.log_sd * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TumorPrior {
    pub rho: LogNormal,
    pub beta_c: LogNormal,
    pub alpha_r: LogNormal,
    /// `β_r = alpha_r · beta_r_ratio`.
    pub beta_r_ratio: f64,
    /// Initial volume as a fraction of `v_max`.
    pub initial_volume: LogNormal,
}

impl Default for TumorPrior {
    fn default() -> Self {
        TumorPrior {
            rho: LogNormal {
                median: 0.02,
                log_sd: 0.3,
            },
            beta_c: LogNormal {
                median: 0.028,
                log_sd: 0.2,
            },
            alpha_r: LogNormal {
                median: 0.0398,
                log_sd: 0.2,
            },
            beta_r_ratio: 0.1,
            initial_volume: LogNormal {
                median: 0.2,
                log_sd: 0.5,
            },
        }
    }
}

/// Per-patient coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumorCoefficients {
    pub rho: f64,
    pub beta_c: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
    pub initial_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TumorSimParams {
    /// Carrying capacity, in the same units as `v_max`.
    pub carrying_capacity: f64,
    pub v_max: f64,
    pub noise_sd: f64,
    pub chemo_dose: f64,
    pub radio_dose: f64,
    pub gamma: f64,
    pub beta: f64,
    pub lookback: usize,
    pub horizon: usize,
    /// Volumes are floored here (fraction of `v_max`) to keep them positive.
    pub min_volume: f64,
    pub prior: TumorPrior,
}

/// Volume of a sphere of the given diameter.
pub fn sphere_volume(diameter: f64) -> f64 {
    std::f64::consts::PI / 6.0 * diameter.powi(3)
}

impl Default for TumorSimParams {
    fn default() -> Self {
        TumorSimParams {
            carrying_capacity: sphere_volume(30.0),
            v_max: sphere_volume(13.0),
            noise_sd: 0.01,
            chemo_dose: 5.0,
            radio_dose: 2.0,
            gamma: 10.0,
            beta: 0.5,
            lookback: 15,
            horizon: 20,
            min_volume: 1e-6,
            prior: TumorPrior::default(),
        }
    }
}

impl TumorSimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrying_capacity > 0.0 && self.v_max > 0.0) {
            return Err(Error::InvalidParameter("K and v_max must be positive".into()));
        }
        if self.horizon == 0 || self.lookback == 0 {
            return Err(Error::InvalidParameter("horizon and lookback must be ≥ 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.min_volume > 0.0) {
            return Err(Error::InvalidParameter("noise_sd ≥ 0 and min_volume > 0 required".into()));
        }
        Ok(())
    }

    pub fn draw_coefficients(&self, rng: &mut dyn RngCore) -> TumorCoefficients {
        let p = &self.prior;
        let alpha_r = p.alpha_r.sample(rng);
        TumorCoefficients {
            rho: p.rho.sample(rng),
            beta_c: p.beta_c.sample(rng),
            alpha_r,
            beta_r: alpha_r * p.beta_r_ratio,
            initial_volume: p.initial_volume.sample(rng) * self.v_max,
        }
    }
}

/// Per-step treatment probability `σ(γ(v_last − β) + t − t_last)` for each of
/// chemotherapy and radiotherapy. `v_last` is the last observed (normalised)
/// volume, `t` and `t_last` are integer steps, `t_last = 0` before the first
/// treatment.
#[derive(Debug, Clone, Copy)]
pub struct TumorRule {
    pub gamma: f64,
    pub beta: f64,
}

impl TumorRule {
    pub fn per_arm(&self, t: f64, history: &[Event]) -> f64 {
        let v_last = history
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::Feature)
            .map_or(0.0, Event::value);
        let t_last = history
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::Treatment)
            .map_or(0.0, |e| e.time.floor());
        sigmoid(self.gamma * (v_last - self.beta) + t.floor() - t_last)
    }
}

impl EpochRule for TumorRule {
    /// Probability that at least one arm fires.
    fn probability(&self, t: f64, history: &[Event]) -> f64 {
        let p = self.per_arm(t, history);
        1.0 - (1.0 - p) * (1.0 - p)
    }
}

/// `[chemo, radio]` indicators, conditioned on at least one being set.
#[derive(Debug, Clone, Copy)]
pub struct TumorMarks(pub TumorRule);

impl MarkSampler for TumorMarks {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, t: f64, history: &[Event], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let p = self.0.per_arm(t, history);
        let w_single = p * (1.0 - p);
        let w_both = p * p;
        let u = rng.random::<f64>() * (2.0 * w_single + w_both);
        Ok(if u < w_single {
            vec![1.0, 0.0]
        } else if u < 2.0 * w_single {
            vec![0.0, 1.0]
        } else {
            vec![1.0, 1.0]
        })
    }
}

/// Decisions halfway between volume steps.
pub fn make_tumor_policy(gamma: f64, beta: f64) -> Policy {
    let rule = TumorRule { gamma, beta };
    Policy::new(
        TreatmentTiming::Epochs {
            period: 1.0,
            offset: 0.5,
            rule: Arc::new(rule),
        },
        TumorMarks(rule),
    )
}

#[derive(Debug, Clone)]
pub struct TumorSim {
    pub params: TumorSimParams,
}

impl TumorSim {
    pub fn new(params: TumorSimParams) -> Result<Self> {
        params.validate()?;
        Ok(TumorSim { params })
    }
}

impl Simulator for TumorSim {
    fn horizon(&self) -> f64 {
        self.params.horizon as f64
    }

    fn treatment_mark_dim(&self) -> usize {
        2
    }

    fn simulate(&self, policy: &Policy, rng: &mut dyn RngCore) -> Result<(Trajectory, f64)> {
        let coef = self.params.draw_coefficients(rng);
        simulate_tumor_with(&self.params, &coef, policy, rng)
    }
}

/// One patient, drawing coefficients from the prior. `policy_override`
/// replaces the configured `(γ, β)`.
pub fn simulate_tumor(
    params: &TumorSimParams,
    policy_override: Option<(f64, f64)>,
    rng: &mut dyn RngCore,
) -> Result<(Trajectory, f64)> {
    params.validate()?;
    let (gamma, beta) = policy_override.unwrap_or((params.gamma, params.beta));
    let coef = params.draw_coefficients(rng);
    simulate_tumor_with(params, &coef, &make_tumor_policy(gamma, beta), rng)
}

/// One patient with fixed coefficients. Features are volumes divided by
/// `v_max`; the outcome is the normalised volume at the horizon.
pub fn simulate_tumor_with(
    params: &TumorSimParams,
    coef: &TumorCoefficients,
    policy: &Policy,
    rng: &mut dyn RngCore,
) -> Result<(Trajectory, f64)> {
    let steps = params.horizon;
    let horizon = steps as f64;
    let mut volumes = vec![coef.initial_volume.max(params.min_volume * params.v_max)];
    let mut events: Vec<Event> = Vec::new();
    let mut concentration = 0.0;

    for step in 0..steps {
        let t = step as f64;
        let v = volumes[step];
        let observe = if step == 0 {
            true
        } else {
            let lo = step.saturating_sub(params.lookback);
            let window = &volumes[lo..step];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            rng.random::<f64>() < sigmoid(mean / params.v_max - 1.5)
        };
        if observe {
            push(&mut events, t, EventKind::Feature, vec![v / params.v_max]);
        }

        let (mut chemo, mut radio) = (0.0, 0.0);
        if let Some(u) = policy.next_treatment(t, t + 0.5, &events, rng)? {
            let mark = policy.sample_mark(u, &events, rng)?;
            if mark.len() != 2 {
                return Err(Error::MarkDimension {
                    kind: "treatment",
                    expected: 2,
                    got: mark.len(),
                });
            }
            chemo = mark[0];
            radio = mark[1];
            push(&mut events, u, EventKind::Treatment, mark);
        }
        concentration = concentration / 2.0 + params.chemo_dose * chemo;
        let d = params.radio_dose * radio;
        let e: f64 = params.noise_sd * rng.sample::<f64, _>(StandardNormal);
        let factor = 1.0 + coef.rho * (params.carrying_capacity / v).ln()
            - coef.beta_c * concentration
            - (coef.alpha_r * d + coef.beta_r * d * d)
            + e;
        let next = v * factor;
        if !next.is_finite() {
            return Err(Error::Numerical(format!(
                "tumor volume overflowed at step {step} (factor {factor})"
            )));
        }
        volumes.push(next.max(params.min_volume * params.v_max));
    }
    let y = volumes[steps] / params.v_max;
    push(&mut events, horizon, EventKind::Outcome, vec![y]);
    Ok((Trajectory::new(events, horizon)?, y))
}
