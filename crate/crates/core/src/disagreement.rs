//! The augmented process: an observed trajectory plus a target-policy
//! treatment stream sampled against the observed history, and the earliest
//! time at which the two treatment streams disagree.
//!
//! The target intensity never sees its own past draws. Between consecutive
//! observed events the history is frozen, so the target stream is sampled
//! interval by interval with [`Policy::next_treatment`].
//!
//! Ties between an observed and a target treatment are resolved in favour of
//! the target (`TargetTreats`). A treatment on either side exactly at the
//! horizon is reported as `HorizonReached`, which keeps
//! `boundary == HorizonReached ⇔ δ == T − t`.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::process::{after, history_before, Event, EventKind, Policy, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    TargetTreats,
    ObservedTreats,
    HorizonReached,
}

#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub base: Trajectory,
    pub target_treatments: Vec<Event>,
    pub anchor: f64,
    pub delta: f64,
    pub boundary: Boundary,
}

impl AugmentedSample {
    /// Sample the full target stream on `(t, T]` and compute δ.
    pub fn draw(base: Trajectory, target: &Policy, t: f64, rng: &mut dyn RngCore) -> Result<Self> {
        let target_treatments = sample_target_segment(&base, target, t, rng)?;
        let (delta, boundary) = earliest_disagreement(&base, &target_treatments, t);
        Ok(AugmentedSample {
            base,
            target_treatments,
            anchor: t,
            delta,
            boundary,
        })
    }

    pub fn splice(&self) -> Result<Trajectory> {
        splice(&self.base, &self.target_treatments, self.anchor, self.delta)
    }

    /// The augmented history `H̃`: base events with observed treatments
    /// relabelled as [`EventKind::ObservedTreatment`], merged with the target
    /// treatments.
    pub fn augmented_events(&self) -> Vec<Event> {
        let mut out: Vec<Event> = self
            .base
            .events()
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if e.kind == EventKind::Treatment {
                    e.kind = EventKind::ObservedTreatment;
                }
                e
            })
            .chain(self.target_treatments.iter().cloned())
            .collect();
        out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.kind.cmp(&b.kind)));
        out
    }
}

/// Walks the observed trajectory on `(t, until]` and draws target treatments
/// with the history frozen between observed events. Stops after `limit`
/// events.
fn sample_target(
    base: &Trajectory,
    target: &Policy,
    t: f64,
    until: f64,
    limit: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Event>> {
    let horizon = base.horizon();
    let until = until.min(horizon);
    let events = base.events();
    let mut out = Vec::new();
    let mut from = t;
    // First observed event strictly after t.
    let mut next = events.partition_point(|e| e.time <= t);
    while from < until && out.len() < limit {
        let piece_end = events.get(next).map_or(until, |e| e.time.min(until));
        let history = &events[..next];
        match target.next_treatment(from, piece_end, history, rng)? {
            Some(s) => {
                let mark = target.sample_mark(s, history, rng)?;
                out.push(Event::new(s, EventKind::Treatment, mark));
                from = s;
            }
            None => {
                from = piece_end;
                if next < events.len() && events[next].time <= from {
                    next += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Target-policy treatments on `(t, T]` evaluated on the observed history.
pub fn sample_target_segment(
    base: &Trajectory,
    target: &Policy,
    t: f64,
    rng: &mut dyn RngCore,
) -> Result<Vec<Event>> {
    if !(t < base.horizon()) {
        return Err(Error::InvalidParameter(format!(
            "anchor t={t} must lie before the horizon {}",
            base.horizon()
        )));
    }
    sample_target(base, target, t, base.horizon(), usize::MAX, rng)
}

/// Only the first target treatment in `(t, until]`, if any. Sufficient for
/// computing δ when `until` is the first observed treatment after `t`.
pub fn first_target_treatment(
    base: &Trajectory,
    target: &Policy,
    t: f64,
    until: f64,
    rng: &mut dyn RngCore,
) -> Result<Option<Event>> {
    Ok(sample_target(base, target, t, until, 1, rng)?.into_iter().next())
}

/// First observed treatment strictly after `t`.
pub fn first_observed_treatment(base: &Trajectory, t: f64) -> Option<&Event> {
    base.window(t, f64::INFINITY)
        .iter()
        .find(|e| e.kind == EventKind::Treatment)
}

/// `(δ, boundary)` for anchor `t`.
pub fn earliest_disagreement(base: &Trajectory, segment: &[Event], t: f64) -> (f64, Boundary) {
    let (time, boundary) = disagreement_time(base, segment, t);
    (time - t, boundary)
}

/// Absolute time `t + δ` of the first disagreement. Kept separate from δ so
/// that window ends are exact event times rather than `t + (u − t)`.
pub fn disagreement_time(base: &Trajectory, segment: &[Event], t: f64) -> (f64, Boundary) {
    let horizon = base.horizon();
    let obs = first_observed_treatment(base, t).map(|e| e.time);
    let tgt = segment
        .iter()
        .filter(|e| e.time > t && e.kind == EventKind::Treatment)
        .map(|e| e.time)
        .reduce(f64::min);
    let (time, boundary) = match (obs, tgt) {
        (Some(o), Some(a)) if a <= o => (a, Boundary::TargetTreats),
        (Some(o), _) => (o, Boundary::ObservedTreats),
        (None, Some(a)) => (a, Boundary::TargetTreats),
        (None, None) => (horizon, Boundary::HorizonReached),
    };
    if time >= horizon {
        (horizon, Boundary::HorizonReached)
    } else {
        (time, boundary)
    }
}

/// `H_t ∪ H̃^{\a_obs}_{(t, t+δ]}` as a trajectory prefix.
pub fn splice(base: &Trajectory, segment: &[Event], t: f64, delta: f64) -> Result<Trajectory> {
    let (end, boundary) = disagreement_time(base, segment, t);
    if end - t != delta {
        return Err(Error::InconsistentWindow(format!(
            "δ={delta} given, but the inputs disagree first at δ={}",
            end - t
        )));
    }
    let mut out: Vec<Event> = base.prefix(t).to_vec();
    out.extend(
        base.window(t, end)
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Feature | EventKind::Outcome))
            .cloned(),
    );
    if boundary == Boundary::TargetTreats {
        let first = segment
            .iter()
            .filter(|e| e.time > t && e.kind == EventKind::Treatment)
            .min_by(|a, b| a.time.total_cmp(&b.time))
            .expect("TargetTreats implies a target event");
        let prev = out.last().map_or(f64::NEG_INFINITY, |e| e.time);
        let mut ev = first.clone();
        ev.time = after(prev, ev.time);
        out.push(ev);
    }
    Trajectory::new(out, base.horizon())
}

/// The observed history on which the target intensity is evaluated at `s`.
pub fn target_history(base: &Trajectory, s: f64) -> &[Event] {
    history_before(base.events(), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{Constant, FixedMark};
    use crate::rng::SeedStream;
    use crate::stats::{ks_test, ks_two_sample};
    use proptest::prelude::*;

    fn ev(t: f64, kind: EventKind) -> Event {
        Event::new(t, kind, vec![1.0])
    }

    fn traj(events: Vec<Event>, horizon: f64) -> Trajectory {
        Trajectory::new(events, horizon).unwrap()
    }

    #[test]
    fn observed_first() {
        let base = traj(vec![ev(2.0, EventKind::Treatment)], 10.0);
        let seg = vec![ev(3.5, EventKind::Treatment)];
        assert_eq!(earliest_disagreement(&base, &seg, 1.0), (1.0, Boundary::ObservedTreats));
    }

    #[test]
    fn nothing_reaches_horizon() {
        let base = traj(vec![ev(0.5, EventKind::Feature)], 5.0);
        let (d, b) = earliest_disagreement(&base, &[], 0.8);
        assert_eq!(b, Boundary::HorizonReached);
        assert!((d - 4.2).abs() < 1e-12);
    }

    #[test]
    fn target_only() {
        let base = traj(vec![], 5.0);
        let seg = vec![ev(1.3, EventKind::Treatment)];
        let (d, b) = earliest_disagreement(&base, &seg, 1.0);
        assert_eq!(b, Boundary::TargetTreats);
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_treatments_favour_target() {
        let base = traj(vec![ev(2.0, EventKind::Treatment)], 5.0);
        let seg = vec![ev(2.0, EventKind::Treatment)];
        assert_eq!(earliest_disagreement(&base, &seg, 1.0), (1.0, Boundary::TargetTreats));
        let s = splice(&base, &seg, 1.0, 1.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.events()[0].kind, EventKind::Treatment);
    }

    #[test]
    fn treatment_at_horizon_is_horizon_reached() {
        let base = traj(vec![ev(5.0, EventKind::Treatment)], 5.0);
        let seg = vec![ev(5.0, EventKind::Treatment)];
        assert_eq!(earliest_disagreement(&base, &seg, 1.0), (4.0, Boundary::HorizonReached));
    }

    #[test]
    fn splice_with_empty_window_adds_one_treatment() {
        let base = traj(vec![ev(0.5, EventKind::Feature), ev(3.0, EventKind::Outcome)], 5.0);
        let seg = vec![ev(1.5, EventKind::Treatment)];
        let (d, b) = earliest_disagreement(&base, &seg, 1.0);
        assert_eq!(b, Boundary::TargetTreats);
        let s = splice(&base, &seg, 1.0, d).unwrap();
        assert_eq!(s.len(), base.prefix(1.0).len() + 1);
        assert_eq!(s.events().last().unwrap().kind, EventKind::Treatment);
    }

    #[test]
    fn splice_counts_window_events() {
        let base = traj(
            vec![
                ev(0.5, EventKind::Feature),
                ev(1.2, EventKind::Feature),
                ev(1.4, EventKind::Outcome),
                ev(1.6, EventKind::Feature),
                ev(2.5, EventKind::Treatment),
                ev(3.0, EventKind::Feature),
            ],
            5.0,
        );
        let tgt = vec![ev(2.0, EventKind::Treatment)];
        let (d, _) = earliest_disagreement(&base, &tgt, 1.0);
        assert_eq!(splice(&base, &tgt, 1.0, d).unwrap().len(), 1 + 3 + 1);
        let (d, b) = earliest_disagreement(&base, &[], 1.0);
        assert_eq!(b, Boundary::ObservedTreats);
        let s = splice(&base, &[], 1.0, d).unwrap();
        assert_eq!(s.len(), 1 + 3);
        assert!(s.events().iter().all(|e| e.kind != EventKind::Treatment || e.time <= 1.0));
    }

    #[test]
    fn splice_rejects_wrong_delta() {
        let base = traj(vec![ev(2.0, EventKind::Treatment)], 5.0);
        assert!(matches!(splice(&base, &[], 1.0, 0.5), Err(Error::InconsistentWindow(_))));
    }

    #[test]
    fn zero_target_rate_gives_empty_segment() {
        let base = traj(vec![ev(0.5, EventKind::Feature)], 5.0);
        let mut rng = SeedStream::new(0).rng();
        let seg = sample_target_segment(&base, &Policy::never(1), 0.0, &mut rng).unwrap();
        assert!(seg.is_empty());
    }

    #[test]
    fn homogeneous_target_first_event_is_truncated_exponential() {
        let lambda = 0.7;
        let (t, horizon) = (1.0, 4.0);
        let base = traj(vec![ev(0.5, EventKind::Feature), ev(2.0, EventKind::Feature)], horizon);
        let policy = Policy::from_intensity(Constant(lambda), FixedMark(vec![1.0]));
        let root = SeedStream::new(11);
        let mut delays = Vec::new();
        for i in 0..4000 {
            let mut rng = root.index(i).rng();
            let seg = sample_target_segment(&base, &policy, t, &mut rng).unwrap();
            if let Some(e) = seg.first() {
                delays.push(e.time - t);
            }
        }
        let w = horizon - t;
        let norm = 1.0 - (-lambda * w).exp();
        let (_, p) = ks_test(&delays, |x| (1.0 - (-lambda * x).exp()) / norm);
        assert!(p > 0.01, "p = {p}");
        let frac = delays.len() as f64 / 4000.0;
        assert!((frac - norm).abs() < 4.0 * (norm * (1.0 - norm) / 4000.0).sqrt());
    }

    struct FeatureDriven;
    impl crate::process::IntensityFn for FeatureDriven {
        fn rate(&self, _t: f64, h: &[Event]) -> f64 {
            if h.iter().any(|e| e.kind == EventKind::Feature) {
                1.5
            } else {
                0.2
            }
        }
        fn bound(&self, _t: f64, _h: &[Event]) -> crate::process::Bound {
            crate::process::Bound::forever(1.5)
        }
    }

    #[test]
    fn target_equal_to_observed_reproduces_treatment_law() {
        use crate::process::{sample_trajectory, Component, ProcessSpec};
        let policy = Policy::from_intensity(FeatureDriven, FixedMark(vec![1.0]));
        let spec = ProcessSpec::new(
            Component::new(Constant(0.5), FixedMark(vec![0.0])),
            Component::silent(1),
            policy.clone(),
            6.0,
        )
        .unwrap();
        // Observed first treatment time vs target first treatment time on a
        // treatment-free copy of the same feature path.
        let root = SeedStream::new(5);
        let (mut obs, mut tgt) = (Vec::new(), Vec::new());
        for i in 0..3000 {
            let mut rng = root.index(i).rng();
            let tr = sample_trajectory(&spec, &mut rng).unwrap();
            obs.push(
                tr.of_kind(EventKind::Treatment)
                    .next()
                    .map_or(spec.horizon, |e| e.time),
            );
            let mut rng = root.child("other").index(i).rng();
            let tr = sample_trajectory(&spec, &mut rng).unwrap();
            let stripped: Vec<Event> = tr
                .events()
                .iter()
                .filter(|e| e.kind != EventKind::Treatment)
                .cloned()
                .collect();
            let stripped = Trajectory::new(stripped, spec.horizon).unwrap();
            let first = first_target_treatment(&stripped, &policy, 0.0, spec.horizon, &mut rng)
                .unwrap()
                .map_or(spec.horizon, |e| e.time);
            tgt.push(first);
        }
        let (_, p) = ks_two_sample(&obs, &tgt);
        assert!(p > 0.01, "p = {p}");
    }

    fn arb_events(horizon: f64) -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0.0..horizon, 0usize..3), 0..12).prop_map(|v| {
            let mut v: Vec<(f64, usize)> = v;
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.dedup_by(|a, b| a.0 == b.0);
            v.into_iter()
                .map(|(t, k)| {
                    let kind = [EventKind::Feature, EventKind::Outcome, EventKind::Treatment][k];
                    Event::new(t, kind, vec![t])
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn disagreement_invariants(
            base in arb_events(10.0),
            seg_times in prop::collection::vec(0.0..10.0f64, 0..4),
            t in 0.0..9.9f64,
            drop_obs in any::<bool>(),
        ) {
            let base = Trajectory::new(base, 10.0).unwrap();
            let mut seg: Vec<Event> = seg_times
                .iter()
                .filter(|s| **s > t)
                .map(|s| Event::new(*s, EventKind::Treatment, vec![1.0]))
                .collect();
            seg.sort_by(|a, b| a.time.total_cmp(&b.time));
            let (d, b) = earliest_disagreement(&base, &seg, t);
            prop_assert!(d > 0.0 || (d == 0.0 && b != Boundary::HorizonReached) || t == 10.0);
            prop_assert_eq!(b == Boundary::HorizonReached, d == 10.0 - t);

            // Removing treatments never decreases δ.
            let fewer_seg: Vec<Event> = seg.iter().skip(1).cloned().collect();
            let fewer_base = if drop_obs {
                Trajectory::new(
                    base.events().iter().filter(|e| e.kind != EventKind::Treatment).cloned().collect(),
                    10.0,
                ).unwrap()
            } else {
                base.clone()
            };
            let (d2, _) = earliest_disagreement(&fewer_base, &fewer_seg, t);
            prop_assert!(d2 >= d);

            let s = splice(&base, &seg, t, d).unwrap();
            prop_assert!(s.events().iter().all(|e| e.kind != EventKind::ObservedTreatment));
            let (end, _) = disagreement_time(&base, &seg, t);
            prop_assert!(s.events().iter().all(|e| e.time <= end));
            prop_assert!(s.events().windows(2).all(|w| w[0].time < w[1].time));
            // Observed treatments after t never enter the splice.
            prop_assert_eq!(
                s.events().iter().filter(|e| e.kind == EventKind::Treatment && e.time > t).count(),
                usize::from(b == Boundary::TargetTreats)
            );
        }
    }

    #[test]
    fn augmentation_leaves_base_law_unchanged() {
        use crate::process::{sample_trajectory, Component, ProcessSpec};
        let spec = ProcessSpec::new(
            Component::new(Constant(1.0), FixedMark(vec![0.0])),
            Component::new(Constant(0.3), FixedMark(vec![1.0])),
            Policy::from_intensity(FeatureDriven, FixedMark(vec![1.0])),
            5.0,
        )
        .unwrap();
        let target = Policy::from_intensity(Constant(2.0), FixedMark(vec![1.0]));
        let root = SeedStream::new(21);
        let (mut plain, mut augmented) = (Vec::new(), Vec::new());
        for i in 0..2000 {
            let s = root.index(i);
            let tr = sample_trajectory(&spec, &mut s.child("base").rng()).unwrap();
            plain.push(tr.len() as f64);
            let tr = sample_trajectory(&spec, &mut s.child("base").rng()).unwrap();
            let aug = AugmentedSample::draw(tr, &target, 1.0, &mut s.child("target").rng()).unwrap();
            augmented.push(aug.base.len() as f64);
        }
        assert_eq!(plain, augmented);
    }
}
