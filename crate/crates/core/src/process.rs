//! Marked multivariate point processes with a treatment component.
//!
//! A [`Trajectory`] is a strictly time-ordered list of marked events on
//! `[0, horizon]`. Histories are plain event slices: `H_t` is
//! [`Trajectory::prefix`] and intensities are always evaluated against the
//! events strictly before the evaluation time.
//!
//! [`sample_trajectory`] draws from a [`ProcessSpec`] by thinning: candidate
//! times come from the summed component bounds, are accepted with probability
//! `λ_•(t|H)/M`, and the accepted event type is chosen in proportion to the
//! component rates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Feature,
    Outcome,
    Treatment,
    /// Observed treatment carried alongside a sampled target treatment
    /// stream. Only produced by [`crate::disagreement::AugmentedSample`].
    ObservedTreatment,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Feature => "feature",
            EventKind::Outcome => "outcome",
            EventKind::Treatment => "treatment",
            EventKind::ObservedTreatment => "observed_treatment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "feature" => Some(EventKind::Feature),
            "outcome" => Some(EventKind::Outcome),
            "treatment" => Some(EventKind::Treatment),
            "observed_treatment" => Some(EventKind::ObservedTreatment),
            _ => None,
        }
    }

    /// Column used for this kind in one-hot encodings.
    pub fn index(self) -> usize {
        match self {
            EventKind::Feature => 0,
            EventKind::Outcome => 1,
            EventKind::Treatment => 2,
            EventKind::ObservedTreatment => 3,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub mark: Vec<f64>,
}

impl Event {
    pub fn new(time: f64, kind: EventKind, mark: Vec<f64>) -> Self {
        Event { time, kind, mark }
    }

    /// First mark coordinate, or 0 for unmarked events.
    pub fn value(&self) -> f64 {
        self.mark.first().copied().unwrap_or(0.0)
    }
}

/// Events strictly before `t`.
pub fn history_before(events: &[Event], t: f64) -> &[Event] {
    let n = events.partition_point(|e| e.time < t);
    &events[..n]
}

/// Events at or before `t`.
pub fn history_until(events: &[Event], t: f64) -> &[Event] {
    let n = events.partition_point(|e| e.time <= t);
    &events[..n]
}

/// Sum of outcome marks over a history slice.
pub fn outcome_total(events: &[Event]) -> f64 {
    events
        .iter()
        .filter(|e| e.kind == EventKind::Outcome)
        .map(Event::value)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    events: Vec<Event>,
    horizon: f64,
}

impl Trajectory {
    pub fn new(events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidTrajectory(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter().enumerate() {
            if !(e.time.is_finite() && e.time >= 0.0 && e.time <= horizon) {
                return Err(Error::InvalidTrajectory(format!(
                    "event {i} at t={} outside [0, {horizon}]",
                    e.time
                )));
            }
            if e.time <= prev {
                return Err(Error::InvalidTrajectory(format!(
                    "event {i} at t={} does not follow t={prev}",
                    e.time
                )));
            }
            if e.mark.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidTrajectory(format!(
                    "event {i} has a non-finite mark"
                )));
            }
            prev = e.time;
        }
        Ok(Trajectory { events, horizon })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Trajectory::new(Vec::new(), horizon)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `H_t`: events with time ≤ t.
    pub fn prefix(&self, t: f64) -> &[Event] {
        history_until(&self.events, t)
    }

    /// `H_{t-}`: events with time < t.
    pub fn before(&self, t: f64) -> &[Event] {
        history_before(&self.events, t)
    }

    /// `H_(from, to]`.
    pub fn window(&self, from: f64, to: f64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.time <= from);
        let hi = self.events.partition_point(|e| e.time <= to);
        &self.events[lo..hi.max(lo)]
    }

    /// Events of one kind, in order.
    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Sum of outcome marks with event time strictly greater than `after`.
    pub fn outcome_sum_after(&self, after: f64) -> f64 {
        outcome_total(self.window(after, f64::INFINITY))
    }

    /// Sum of all outcome marks (the `after = 0⁻` convention).
    pub fn total_outcome(&self) -> f64 {
        outcome_total(&self.events)
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Upper bound on a rate that holds from the query time until `until`,
/// provided no event occurs in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub rate: f64,
    pub until: f64,
}

impl Bound {
    pub fn forever(rate: f64) -> Self {
        Bound {
            rate,
            until: f64::INFINITY,
        }
    }
}

/// Conditional intensity `λ(t | H_{t-})` together with a thinning bound.
pub trait IntensityFn: Send + Sync {
    fn rate(&self, t: f64, history: &[Event]) -> f64;

    /// Must dominate `rate(s, history)` for every `s` in `[t, until]` as long
    /// as the history does not change.
    fn bound(&self, t: f64, history: &[Event]) -> Bound;
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl IntensityFn for Constant {
    fn rate(&self, _t: f64, _history: &[Event]) -> f64 {
        self.0
    }

    fn bound(&self, _t: f64, _history: &[Event]) -> Bound {
        Bound::forever(self.0)
    }
}

/// Time-only piecewise-constant rate: `rates[i]` on `[breaks[i], breaks[i+1])`,
/// with the last rate extending to infinity. `breaks[0]` must be 0.
#[derive(Debug, Clone)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    rates: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != rates.len() || breaks[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "piecewise intensity needs matching breaks/rates starting at 0".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("breaks must increase".into()));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter("rates must be finite and ≥ 0".into()));
        }
        Ok(PiecewiseConstant { breaks, rates })
    }

    fn piece(&self, t: f64) -> usize {
        self.breaks.partition_point(|b| *b <= t).saturating_sub(1)
    }

    /// `∫_0^t λ(s) ds`.
    pub fn integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.breaks.len() {
            let lo = self.breaks[i];
            if lo >= t {
                break;
            }
            let hi = self.breaks.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
            acc += self.rates[i] * (hi - lo);
        }
        acc
    }
}

impl IntensityFn for PiecewiseConstant {
    fn rate(&self, t: f64, _history: &[Event]) -> f64 {
        self.rates[self.piece(t)]
    }

    fn bound(&self, t: f64, _history: &[Event]) -> Bound {
        let i = self.piece(t);
        Bound {
            rate: self.rates[i],
            until: self.breaks.get(i + 1).copied().unwrap_or(f64::INFINITY),
        }
    }
}

/// Draws the mark of an event given its time and the preceding history.
pub trait MarkSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, t: f64, history: &[Event], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// Always returns the same mark.
#[derive(Debug, Clone)]
pub struct FixedMark(pub Vec<f64>);

impl MarkSampler for FixedMark {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _t: f64, _history: &[Event], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// Mark drawn from a standard normal scaled and shifted.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMark {
    pub mean: f64,
    pub sd: f64,
}

impl MarkSampler for GaussianMark {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, _t: f64, _history: &[Event], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        Ok(vec![self.mean + self.sd * z])
    }
}

#[derive(Clone)]
pub struct Component {
    pub intensity: Arc<dyn IntensityFn>,
    pub marks: Arc<dyn MarkSampler>,
}

impl Component {
    pub fn new(intensity: impl IntensityFn + 'static, marks: impl MarkSampler + 'static) -> Self {
        Component {
            intensity: Arc::new(intensity),
            marks: Arc::new(marks),
        }
    }

    /// A component that never fires.
    pub fn silent(mark_dim: usize) -> Self {
        Component::new(Constant(0.0), FixedMark(vec![0.0; mark_dim]))
    }
}

/// Probability of treating at a scheduled decision epoch.
pub trait EpochRule: Send + Sync {
    fn probability(&self, t: f64, history: &[Event]) -> f64;
}

/// When treatments happen under a policy.
#[derive(Clone)]
pub enum TreatmentTiming {
    /// Continuous-time hazard `λ^a(t | H_{t-})`.
    Intensity(Arc<dyn IntensityFn>),
    /// Decisions at `offset + k·period`, each firing with the rule's
    /// probability.
    Epochs {
        period: f64,
        offset: f64,
        rule: Arc<dyn EpochRule>,
    },
}

/// A treatment policy `(λ^a, π)`: timing plus a mark distribution.
#[derive(Clone)]
pub struct Policy {
    pub timing: TreatmentTiming,
    pub marks: Arc<dyn MarkSampler>,
}

fn check_rate(component: &'static str, t: f64, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFiniteIntensity {
            component,
            time: t,
            value,
        });
    }
    if value < 0.0 {
        return Err(Error::NegativeIntensity {
            component,
            time: t,
            value,
        });
    }
    Ok(value)
}

fn check_bound(component: &'static str, t: f64, bound: Bound) -> Result<Bound> {
    check_rate(component, t, bound.rate)?;
    if bound.until.is_nan() || bound.until <= t {
        return Err(Error::InvalidParameter(format!(
            "bound of `{component}` at t={t} is valid only until {}",
            bound.until
        )));
    }
    Ok(bound)
}

fn check_under_bound(component: &'static str, t: f64, rate: f64, bound: f64) -> Result<()> {
    if rate > bound {
        return Err(Error::BoundViolation {
            component,
            time: t,
            rate,
            bound,
        });
    }
    Ok(())
}

fn exp_gap(rate: f64, rng: &mut dyn RngCore) -> f64 {
    // rate > 0 is checked by the callers.
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Strictly increasing successor for tie-breaking simultaneous events.
pub(crate) fn after(prev: f64, t: f64) -> f64 {
    if t > prev {
        t
    } else {
        prev.next_up()
    }
}

impl Policy {
    pub fn new(timing: TreatmentTiming, marks: impl MarkSampler + 'static) -> Self {
        Policy {
            timing,
            marks: Arc::new(marks),
        }
    }

    pub fn from_intensity(
        intensity: impl IntensityFn + 'static,
        marks: impl MarkSampler + 'static,
    ) -> Self {
        Policy::new(TreatmentTiming::Intensity(Arc::new(intensity)), marks)
    }

    /// A policy that never treats.
    pub fn never(mark_dim: usize) -> Self {
        Policy::from_intensity(Constant(0.0), FixedMark(vec![0.0; mark_dim]))
    }

    pub fn mark_dim(&self) -> usize {
        self.marks.dim()
    }

    /// Instantaneous treatment rate. Epoch policies have no density between
    /// epochs and report 0.
    pub fn rate(&self, t: f64, history: &[Event]) -> Result<f64> {
        match &self.timing {
            TreatmentTiming::Intensity(f) => check_rate("treatment", t, f.rate(t, history)),
            TreatmentTiming::Epochs { .. } => Ok(0.0),
        }
    }

    /// First decision epoch strictly after `t`, if this is an epoch policy.
    pub fn next_epoch(&self, t: f64) -> Option<f64> {
        match &self.timing {
            TreatmentTiming::Intensity(_) => None,
            TreatmentTiming::Epochs { period, offset, .. } => {
                let k = ((t - offset) / period).floor() + 1.0;
                let mut e = offset + k.max(0.0) * period;
                while e <= t {
                    e += period;
                }
                Some(e)
            }
        }
    }

    fn epoch_probability(&self, rule: &dyn EpochRule, t: f64, history: &[Event]) -> Result<f64> {
        let p = rule.probability(t, history);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Numerical(format!(
                "treatment probability {p} at epoch t={t} outside [0, 1]"
            )));
        }
        Ok(p)
    }

    /// First treatment time in `(from, until]`, assuming the history stays
    /// equal to `history` over that span.
    pub fn next_treatment(
        &self,
        from: f64,
        until: f64,
        history: &[Event],
        rng: &mut dyn RngCore,
    ) -> Result<Option<f64>> {
        if until <= from {
            return Ok(None);
        }
        match &self.timing {
            TreatmentTiming::Intensity(f) => {
                let mut s = from;
                loop {
                    let b = check_bound("treatment", s, f.bound(s, history))?;
                    let cap = b.until.min(until);
                    if b.rate > 0.0 {
                        let cand = s + exp_gap(b.rate, rng);
                        if cand <= cap {
                            let r = check_rate("treatment", cand, f.rate(cand, history))?;
                            check_under_bound("treatment", cand, r, b.rate)?;
                            if rng.random::<f64>() * b.rate < r {
                                return Ok(Some(cand));
                            }
                            s = cand;
                            continue;
                        }
                    }
                    if cap >= until {
                        return Ok(None);
                    }
                    s = cap;
                }
            }
            TreatmentTiming::Epochs { rule, .. } => {
                let mut e = self.next_epoch(from).expect("epoch policy");
                while e <= until {
                    let p = self.epoch_probability(rule.as_ref(), e, history)?;
                    if rng.random::<f64>() < p {
                        return Ok(Some(e));
                    }
                    e = self.next_epoch(e).expect("epoch policy");
                }
                Ok(None)
            }
        }
    }

    /// Probability of no treatment in `(from, to]` with the history held
    /// fixed: `exp(-∫λ)` for intensities, `∏(1 - p_k)` over epochs.
    pub fn no_treatment_probability(&self, from: f64, to: f64, history: &[Event]) -> Result<f64> {
        if to <= from {
            return Ok(1.0);
        }
        match &self.timing {
            TreatmentTiming::Intensity(f) => {
                // Midpoint rule on each bound segment; exact for
                // piecewise-constant rates.
                const STEPS: usize = 16;
                let mut s = from;
                let mut integral = 0.0;
                while s < to {
                    let b = check_bound("treatment", s, f.bound(s, history))?;
                    let hi = b.until.min(to);
                    let h = (hi - s) / STEPS as f64;
                    for i in 0..STEPS {
                        let m = s + (i as f64 + 0.5) * h;
                        integral += check_rate("treatment", m, f.rate(m, history))? * h;
                    }
                    s = hi;
                }
                Ok((-integral).exp())
            }
            TreatmentTiming::Epochs { rule, .. } => {
                let mut q = 1.0;
                let mut e = self.next_epoch(from).expect("epoch policy");
                while e <= to {
                    q *= 1.0 - self.epoch_probability(rule.as_ref(), e, history)?;
                    e = self.next_epoch(e).expect("epoch policy");
                }
                Ok(q)
            }
        }
    }

    pub fn sample_mark(&self, t: f64, history: &[Event], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let m = self.marks.sample(t, history, rng)?;
        if m.len() != self.marks.dim() {
            return Err(Error::MarkDimension {
                kind: "treatment",
                expected: self.marks.dim(),
                got: m.len(),
            });
        }
        Ok(m)
    }
}

/// A decision point process: feature and outcome components, a treatment
/// policy, and a horizon.
#[derive(Clone)]
pub struct ProcessSpec {
    pub feature: Component,
    pub outcome: Component,
    pub policy: Policy,
    pub horizon: f64,
}

impl ProcessSpec {
    pub fn new(feature: Component, outcome: Component, policy: Policy, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
        }
        Ok(ProcessSpec {
            feature,
            outcome,
            policy,
            horizon,
        })
    }

    pub fn with_policy(&self, policy: Policy) -> Self {
        ProcessSpec {
            policy,
            ..self.clone()
        }
    }
}

/// `λ_•(t | H)`: sum of feature, outcome and treatment rates.
pub fn total_intensity(spec: &ProcessSpec, t: f64, history: &[Event]) -> Result<f64> {
    let f = check_rate("feature", t, spec.feature.intensity.rate(t, history))?;
    let o = check_rate("outcome", t, spec.outcome.intensity.rate(t, history))?;
    let a = spec.policy.rate(t, history)?;
    Ok(f + o + a)
}

fn sample_component_mark(
    kind: EventKind,
    sampler: &dyn MarkSampler,
    t: f64,
    history: &[Event],
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let m = sampler.sample(t, history, rng)?;
    if m.len() != sampler.dim() {
        return Err(Error::MarkDimension {
            kind: kind.as_str(),
            expected: sampler.dim(),
            got: m.len(),
        });
    }
    Ok(m)
}

/// Draw one trajectory on `[0, horizon]` by thinning.
pub fn sample_trajectory(spec: &ProcessSpec, rng: &mut dyn RngCore) -> Result<Trajectory> {
    let horizon = spec.horizon;
    let mut events: Vec<Event> = Vec::new();
    let mut s = 0.0_f64;
    let policy_intensity = match &spec.policy.timing {
        TreatmentTiming::Intensity(f) => Some(f.clone()),
        TreatmentTiming::Epochs { .. } => None,
    };

    while s < horizon {
        let h = events.as_slice();
        let bf = check_bound("feature", s, spec.feature.intensity.bound(s, h))?;
        let bo = check_bound("outcome", s, spec.outcome.intensity.bound(s, h))?;
        let ba = match &policy_intensity {
            Some(f) => check_bound("treatment", s, f.bound(s, h))?,
            None => Bound::forever(0.0),
        };
        let epoch = spec.policy.next_epoch(s).unwrap_or(f64::INFINITY);
        let m = bf.rate + bo.rate + ba.rate;
        let cap = bf.until.min(bo.until).min(ba.until).min(epoch).min(horizon);

        let cand = if m > 0.0 { s + exp_gap(m, rng) } else { f64::INFINITY };
        if cand <= cap {
            let rf = check_rate("feature", cand, spec.feature.intensity.rate(cand, h))?;
            check_under_bound("feature", cand, rf, bf.rate)?;
            let ro = check_rate("outcome", cand, spec.outcome.intensity.rate(cand, h))?;
            check_under_bound("outcome", cand, ro, bo.rate)?;
            let ra = match &policy_intensity {
                Some(f) => {
                    let r = check_rate("treatment", cand, f.rate(cand, h))?;
                    check_under_bound("treatment", cand, r, ba.rate)?;
                    r
                }
                None => 0.0,
            };
            let v = rng.random::<f64>() * m;
            if v < rf + ro + ra {
                let (kind, mark) = if v < rf {
                    let mk = sample_component_mark(EventKind::Feature, spec.feature.marks.as_ref(), cand, h, rng)?;
                    (EventKind::Feature, mk)
                } else if v < rf + ro {
                    let mk = sample_component_mark(EventKind::Outcome, spec.outcome.marks.as_ref(), cand, h, rng)?;
                    (EventKind::Outcome, mk)
                } else {
                    (EventKind::Treatment, spec.policy.sample_mark(cand, h, rng)?)
                };
                let prev = events.last().map_or(f64::NEG_INFINITY, |e| e.time);
                let time = after(prev, cand);
                if time <= horizon {
                    events.push(Event { time, kind, mark });
                }
            }
            s = cand;
        } else {
            s = cap;
            if cap == epoch && epoch <= horizon {
                if let TreatmentTiming::Epochs { rule, .. } = &spec.policy.timing {
                    let h = events.as_slice();
                    let p = spec.policy.epoch_probability(rule.as_ref(), epoch, h)?;
                    if rng.random::<f64>() < p {
                        let mark = spec.policy.sample_mark(epoch, h, rng)?;
                        let prev = events.last().map_or(f64::NEG_INFINITY, |e| e.time);
                        events.push(Event::new(after(prev, epoch), EventKind::Treatment, mark));
                    }
                }
            }
        }
    }
    Trajectory::new(events, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn poisson_spec(feature: f64, outcome: f64, treat: f64, horizon: f64) -> ProcessSpec {
        ProcessSpec::new(
            Component::new(Constant(feature), FixedMark(vec![1.0])),
            Component::new(Constant(outcome), FixedMark(vec![1.0])),
            Policy::from_intensity(Constant(treat), FixedMark(vec![1.0])),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn zero_rates_give_empty_trajectory() {
        let spec = poisson_spec(0.0, 0.0, 0.0, 10.0);
        let mut rng = SeedStream::new(1).rng();
        let traj = sample_trajectory(&spec, &mut rng).unwrap();
        assert!(traj.is_empty());
        assert_eq!(traj.horizon(), 10.0);
    }

    #[test]
    fn total_intensity_sums_components() {
        let spec = poisson_spec(1.0, 2.0, 0.5, 10.0);
        assert_eq!(total_intensity(&spec, 3.0, &[]).unwrap(), 3.5);
        let zero = poisson_spec(0.0, 0.0, 0.0, 10.0);
        assert_eq!(total_intensity(&zero, 3.0, &[]).unwrap(), 0.0);
    }

    struct CountDriven;
    impl IntensityFn for CountDriven {
        fn rate(&self, t: f64, history: &[Event]) -> f64 {
            0.5 + 0.1 * history.len() as f64 + 0.01 * t
        }
        fn bound(&self, _t: f64, history: &[Event]) -> Bound {
            Bound {
                rate: 0.5 + 0.1 * history.len() as f64 + 0.01 * 100.0,
                until: 100.0,
            }
        }
    }

    #[test]
    fn total_intensity_matches_componentwise_evaluation() {
        let spec = ProcessSpec::new(
            Component::new(CountDriven, FixedMark(vec![0.0])),
            Component::new(Constant(0.25), FixedMark(vec![1.0])),
            Policy::from_intensity(CountDriven, FixedMark(vec![1.0])),
            50.0,
        )
        .unwrap();
        let mut rng = SeedStream::new(3).rng();
        let traj = sample_trajectory(&spec, &mut rng).unwrap();
        for t in [0.0, 1.3, 7.7, 20.0, 49.9] {
            let h = traj.before(t);
            let expected = CountDriven.rate(t, h) + 0.25 + CountDriven.rate(t, h);
            assert_eq!(total_intensity(&spec, t, h).unwrap(), expected);
        }
    }

    #[test]
    fn negative_component_rate_is_rejected() {
        let spec = poisson_spec(-1.0, 0.0, 0.0, 10.0);
        assert!(matches!(
            total_intensity(&spec, 0.0, &[]),
            Err(Error::NegativeIntensity { component: "feature", .. })
        ));
    }

    struct Lying;
    impl IntensityFn for Lying {
        fn rate(&self, _t: f64, _h: &[Event]) -> f64 {
            5.0
        }
        fn bound(&self, _t: f64, _h: &[Event]) -> Bound {
            Bound::forever(1.0)
        }
    }

    #[test]
    fn bound_violation_names_component() {
        let spec = ProcessSpec::new(
            Component::silent(1),
            Component::new(Lying, FixedMark(vec![1.0])),
            Policy::never(1),
            10.0,
        )
        .unwrap();
        let mut rng = SeedStream::new(1).rng();
        let err = sample_trajectory(&spec, &mut rng).unwrap_err();
        assert!(matches!(err, Error::BoundViolation { component: "outcome", .. }), "{err}");
    }

    struct Infinite;
    impl IntensityFn for Infinite {
        fn rate(&self, _t: f64, _h: &[Event]) -> f64 {
            f64::INFINITY
        }
        fn bound(&self, _t: f64, _h: &[Event]) -> Bound {
            Bound::forever(f64::INFINITY)
        }
    }

    #[test]
    fn non_finite_intensity_is_rejected() {
        let spec = ProcessSpec::new(
            Component::new(Infinite, FixedMark(vec![1.0])),
            Component::silent(1),
            Policy::never(1),
            10.0,
        )
        .unwrap();
        let mut rng = SeedStream::new(1).rng();
        assert!(matches!(
            sample_trajectory(&spec, &mut rng),
            Err(Error::NonFiniteIntensity { component: "feature", .. })
        ));
    }

    fn outcome_traj() -> Trajectory {
        Trajectory::new(
            vec![
                Event::new(1.0, EventKind::Outcome, vec![2.0]),
                Event::new(3.0, EventKind::Outcome, vec![-1.0]),
            ],
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn outcome_sum_uses_strict_inequality() {
        let traj = outcome_traj();
        assert_eq!(traj.outcome_sum_after(0.0), 1.0);
        assert_eq!(traj.outcome_sum_after(3.0), 0.0);
        assert_eq!(traj.outcome_sum_after(2.0), -1.0);
        assert_eq!(traj.total_outcome(), 1.0);
    }

    #[test]
    fn trajectory_rejects_ties_and_out_of_range() {
        let tie = vec![
            Event::new(1.0, EventKind::Feature, vec![0.0]),
            Event::new(1.0, EventKind::Outcome, vec![0.0]),
        ];
        assert!(Trajectory::new(tie, 5.0).is_err());
        let late = vec![Event::new(6.0, EventKind::Feature, vec![0.0])];
        assert!(Trajectory::new(late, 5.0).is_err());
    }

    #[test]
    fn restriction_operators() {
        let traj = Trajectory::new(
            vec![
                Event::new(0.5, EventKind::Feature, vec![1.0]),
                Event::new(1.0, EventKind::Treatment, vec![1.0]),
                Event::new(2.0, EventKind::Outcome, vec![1.0]),
            ],
            3.0,
        )
        .unwrap();
        assert_eq!(traj.prefix(1.0).len(), 2);
        assert_eq!(traj.before(1.0).len(), 1);
        assert_eq!(traj.window(0.5, 2.0).len(), 2);
        assert_eq!(traj.window(2.0, 1.0).len(), 0);
    }

    #[test]
    fn epoch_policy_fires_only_on_epochs() {
        struct Always;
        impl EpochRule for Always {
            fn probability(&self, _t: f64, _h: &[Event]) -> f64 {
                1.0
            }
        }
        let policy = Policy::new(
            TreatmentTiming::Epochs {
                period: 1.0,
                offset: 0.5,
                rule: Arc::new(Always),
            },
            FixedMark(vec![1.0]),
        );
        let spec = ProcessSpec::new(Component::silent(1), Component::silent(1), policy, 4.0).unwrap();
        let mut rng = SeedStream::new(9).rng();
        let traj = sample_trajectory(&spec, &mut rng).unwrap();
        let times: Vec<f64> = traj.events().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![0.5, 1.5, 2.5, 3.5]);
        assert_eq!(spec.policy.next_epoch(0.5), Some(1.5));
        assert_eq!(spec.policy.next_epoch(0.0), Some(0.5));
    }

    #[test]
    fn piecewise_integral() {
        let pc = PiecewiseConstant::new(vec![0.0, 2.0, 5.0], vec![1.0, 3.0, 0.5]).unwrap();
        assert_eq!(pc.integral(1.0), 1.0);
        assert_eq!(pc.integral(3.0), 2.0 + 3.0);
        assert_eq!(pc.integral(7.0), 2.0 + 9.0 + 1.0);
        assert_eq!(pc.rate(2.0, &[]), 3.0);
        assert_eq!(pc.bound(2.5, &[]).until, 5.0);
    }
}
