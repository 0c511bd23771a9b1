//! Off-policy evaluation protocol: labelled test prefixes drawn under the
//! target policy, normalised RMSE, and the estimator × setting × seed grid.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::MlpQ;
use crate::error::{Error, Result};
use crate::estimators::{predict_total, train_estimator, Dataset, EstimatorKind, TrainConfig};
use crate::process::{Event, Policy, Trajectory};
use crate::rng::SeedStream;
use crate::simulators::{
    make_failure_policy, make_tumor_policy, FailureSim, FailureSimParams, Simulator, TumorSim, TumorSimParams,
};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SimulatorConfig {
    Failure(FailureSimParams),
    Tumor(TumorSimParams),
}

/// Treatment policy parameters: an exponential-delay rate for the failure
/// simulator, `(γ, β)` for the tumor simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PolicyParams {
    Rate { rate: f64 },
    Tumor { gamma: f64, beta: f64 },
}

impl PolicyParams {
    pub fn label(&self) -> String {
        match self {
            PolicyParams::Rate { rate } => format!("{rate}"),
            PolicyParams::Tumor { gamma, beta } => format!("{gamma}/{beta}"),
        }
    }
}

impl SimulatorConfig {
    pub fn failure_long() -> Self {
        SimulatorConfig::Failure(FailureSimParams::long())
    }

    pub fn failure_short() -> Self {
        SimulatorConfig::Failure(FailureSimParams::short())
    }

    pub fn tumor() -> Self {
        SimulatorConfig::Tumor(TumorSimParams::default())
    }

    pub fn build(&self) -> Result<Box<dyn Simulator>> {
        Ok(match self {
            SimulatorConfig::Failure(p) => Box::new(FailureSim::new(p.clone())?),
            SimulatorConfig::Tumor(p) => Box::new(TumorSim::new(p.clone())?),
        })
    }

    pub fn policy(&self, params: &PolicyParams) -> Result<Policy> {
        match (self, params) {
            (SimulatorConfig::Failure(p), PolicyParams::Rate { rate }) => make_failure_policy(p, *rate),
            (SimulatorConfig::Tumor(_), PolicyParams::Tumor { gamma, beta }) => Ok(make_tumor_policy(*gamma, *beta)),
            _ => Err(Error::InvalidParameter(format!(
                "policy {} does not fit this simulator",
                params.label()
            ))),
        }
    }

    /// Treatment mark width, which sets the featuriser's mark slots.
    pub fn mark_dim(&self) -> usize {
        match self {
            SimulatorConfig::Failure(_) => 1,
            SimulatorConfig::Tumor(_) => 2,
        }
    }
}

/// Trajectories drawn under the target policy, with one labelled prefix per
/// event: the prefix ending at that event, labelled with the trajectory's
/// outcome.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub records: Vec<(Trajectory, f64)>,
}

impl TestSet {
    /// `(trajectory index, prefix length)` for every labelled point.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.records
            .iter()
            .enumerate()
            .flat_map(|(i, (traj, _))| (1..=traj.len()).map(move |k| (i, k)))
    }

    pub fn n_prefixes(&self) -> usize {
        self.records.iter().map(|(t, _)| t.len()).sum()
    }

    /// `(prefix, t, label)` for a point.
    pub fn point(&self, i: usize, k: usize) -> (&[Event], f64, f64) {
        let (traj, y) = &self.records[i];
        let prefix = &traj.events()[..k];
        (prefix, prefix[k - 1].time, *y)
    }

    pub fn labels(&self) -> Vec<f64> {
        self.points().map(|(i, k)| self.point(i, k).2).collect()
    }
}

pub fn build_test_set(sim: &dyn Simulator, target: &Policy, n: usize, seeds: &SeedStream) -> Result<TestSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("test set size must be positive".into()));
    }
    Ok(TestSet {
        records: Dataset::simulate(sim, target, n, seeds)?.records,
    })
}

/// RMSE divided by the population standard deviation of the labels.
pub fn normalized_rmse(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() || labels.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need equal lengths ≥ 2, got {} predictions and {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let sd = stats::population_sd(labels);
    if !(sd > 0.0) {
        return Err(Error::Numerical("labels are constant; normalised RMSE undefined".into()));
    }
    let mse = preds.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / labels.len() as f64;
    Ok(mse.sqrt() / sd)
}

/// Total-outcome predictions at every test point.
pub fn predict_test_set(q: &MlpQ, test: &TestSet) -> Result<Vec<f64>> {
    let points: Vec<_> = test.points().collect();
    points
        .par_iter()
        .map(|&(i, k)| {
            let (prefix, t, _) = test.point(i, k);
            predict_total(q, prefix, t, test.records[i].0.horizon())
        })
        .collect()
}

pub fn evaluate(q: &MlpQ, test: &TestSet) -> Result<f64> {
    normalized_rmse(&predict_test_set(q, test)?, &test.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub estimator: EstimatorKind,
    pub obs: PolicyParams,
    pub int: PolicyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub estimator: EstimatorKind,
    pub setting_obs: String,
    pub setting_int: String,
    pub seed: u64,
    pub nrmse: f64,
    pub n_test: usize,
    pub n_prefixes: usize,
}

/// Seed-aggregated report for one (estimator, setting) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub estimator: EstimatorKind,
    pub setting_obs: String,
    pub setting_int: String,
    pub nrmse: f64,
    /// Standard error over seeds.
    pub nrmse_se: f64,
    pub n_test: usize,
    pub n_prefixes: usize,
    pub seeds: Vec<u64>,
}

/// Training data for policy `obs` under `seed`.
pub fn training_data(sim_cfg: &SimulatorConfig, obs: &PolicyParams, n: usize, seed: u64) -> Result<Dataset> {
    let sim = sim_cfg.build()?;
    let policy = sim_cfg.policy(obs)?;
    let seeds = SeedStream::new(seed).child("train-data").child(&obs.label());
    Dataset::simulate(sim.as_ref(), &policy, n, &seeds)
}

/// Test set for target policy `int` under `seed`; shared by every estimator
/// evaluated on that (setting, seed).
pub fn test_data(sim_cfg: &SimulatorConfig, int: &PolicyParams, n: usize, seed: u64) -> Result<TestSet> {
    let sim = sim_cfg.build()?;
    let policy = sim_cfg.policy(int)?;
    let seeds = SeedStream::new(seed).child("test-data").child(&int.label());
    build_test_set(sim.as_ref(), &policy, n, &seeds)
}

/// Trains one estimator for one cell and seed and scores it.
pub fn run_cell(sim_cfg: &SimulatorConfig, cell: &GridCell, seed: u64, cfg: &GridConfig) -> Result<ResultRow> {
    let data = training_data(sim_cfg, &cell.obs, cfg.n_train, seed)?;
    let test = test_data(sim_cfg, &cell.int, cfg.n_test, seed)?;
    let target = sim_cfg.policy(&cell.int)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let trained = train_estimator(cell.estimator, &data, &target, &train_cfg)?;
    Ok(ResultRow {
        estimator: cell.estimator,
        setting_obs: cell.obs.label(),
        setting_int: cell.int.label(),
        seed,
        nrmse: evaluate(&trained.q, &test)?,
        n_test: test.records.len(),
        n_prefixes: test.n_prefixes(),
    })
}

/// Every cell × seed, in parallel; rows come back in (cell, seed) order.
pub fn run_grid(sim_cfg: &SimulatorConfig, cells: &[GridCell], cfg: &GridConfig) -> Result<Vec<ResultRow>> {
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let jobs: Vec<(&GridCell, u64)> = cells
        .iter()
        .flat_map(|c| cfg.seeds.iter().map(move |s| (c, *s)))
        .collect();
    jobs.par_iter().map(|(c, s)| run_cell(sim_cfg, c, *s, cfg)).collect()
}

/// Groups rows by (estimator, setting) in first-seen order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<EvalReport> {
    let mut out: Vec<EvalReport> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let pos = out.iter().position(|e| {
            e.estimator == r.estimator && e.setting_obs == r.setting_obs && e.setting_int == r.setting_int
        });
        let i = match pos {
            Some(i) => i,
            None => {
                out.push(EvalReport {
                    estimator: r.estimator,
                    setting_obs: r.setting_obs.clone(),
                    setting_int: r.setting_int.clone(),
                    nrmse: 0.0,
                    nrmse_se: 0.0,
                    n_test: r.n_test,
                    n_prefixes: 0,
                    seeds: Vec::new(),
                });
                values.push(Vec::new());
                out.len() - 1
            }
        };
        out[i].seeds.push(r.seed);
        out[i].n_prefixes += r.n_prefixes;
        values[i].push(r.nrmse);
    }
    for (e, v) in out.iter_mut().zip(&values) {
        e.nrmse = stats::mean(v);
        e.nrmse_se = stats::standard_error(v);
        e.n_prefixes /= v.len();
    }
    out
}

pub const RESULTS_HEADER: &str = "estimator,setting_obs,setting_int,seed,nrmse,n_prefixes";
pub const AGGREGATE_HEADER: &str = "estimator,setting_obs,setting_int,n_seeds,nrmse_mean,nrmse_se,n_test,n_prefixes";

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{}",
            r.estimator.as_str(),
            r.setting_obs,
            r.setting_int,
            r.seed,
            r.nrmse,
            r.n_prefixes
        );
    }
    s
}

/// Aggregate table; `nrmse_se` is the standard error over seeds, not over
/// test points.
pub fn aggregate_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("# nrmse_se: standard error over seeds\n");
    s.push_str(AGGREGATE_HEADER);
    s.push('\n');
    for e in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{},{}",
            e.estimator.as_str(),
            e.setting_obs,
            e.setting_int,
            e.seeds.len(),
            e.nrmse,
            e.nrmse_se,
            e.n_test,
            e.n_prefixes
        );
    }
    s
}
