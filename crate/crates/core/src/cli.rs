//! Config-driven command line: `simulate`, `train`, `evaluate`, `verify`,
//! `graph-check`.
//!
//! One TOML file describes an experiment (see `configs/`). The top-level
//! `seed` drives data, initialisation and label draws, and overrides
//! `train.seed`. Files written to the output directory:
//!
//! | command    | files                                             |
//! |------------|---------------------------------------------------|
//! | simulate   | `dataset.csv`, `manifest.json`                    |
//! | train      | `checkpoint.json`, `diagnostics.csv`              |
//! | evaluate   | `results.csv` (+ `aggregate.csv` for a grid run)  |
//!
//! Each carries the config hash. Stage keys (`data`, `model`) link the stages;
//! a mismatch between them is a hard error.
//!
//! Exit codes: 0 success, 1 runtime or artifact error, 2 config or usage
//! error, 3 verification failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::approximator::{gradient_check, soft_update_law_error};
use crate::artifacts::{
    canonical_hash, content_hash, dataset_to_string, parse_dataset, read_json, read_text, write_json, write_text,
    Checkpoint, DatasetManifest, Model, CHECKPOINT_FORMAT, DATASET_FORMAT,
};
use crate::error::{Error, Result};
use crate::estimators::{
    train_edq_tabular, train_estimator, train_from, EstimatorKind, TabularConfig, TrainConfig, DIAGNOSTICS_HEADER,
};
use crate::evaluation::{
    aggregate, aggregate_csv, evaluate, results_csv, run_grid, test_data, training_data, GridCell, GridConfig,
    PolicyParams, ResultRow, SimulatorConfig,
};
use crate::identifiability::{check_eliminability, confounded_example, figure_one, Graph, GraphSpec};
use crate::oracle::{edq_fixed_point, edq_residual, fixed_point_sweep, identity_sweep, DiscreteProcess};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "edq", version, about = "Earliest-disagreement Q-evaluation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw the training dataset under the observed policy.
    Simulate(Common),
    /// Train the configured estimator (or the tabular EDQ run).
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file (default: `<out>/dataset.csv`); its manifest must sit
        /// next to it as `manifest.json`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Continue from `<out>/checkpoint.json` up to `train.iterations`.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint, or run the configured grid when none is given.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Oracle, identity, gradient and graph checks.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Eliminability verdict for a graph file.
    GraphCheck {
        #[arg(long)]
        graph: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Config

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    FailureLong,
    FailureShort,
    Tumor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSection {
    pub preset: Preset,
    /// Overrides for individual preset parameters.
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_train: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { n_train: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_test: usize,
    pub seeds: Vec<u64>,
    /// Grid cells; empty means every estimator on `(obs, int)`.
    pub cells: Vec<GridCell>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_test: 500,
            seeds: vec![0, 1, 2],
            cells: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSection {
    /// Oracle fixture (JSON), relative to the config file.
    pub fixture: PathBuf,
    /// Largest accepted sup-distance to the exact fixed point.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub updates: Option<usize>,
    #[serde(default)]
    pub step_power: Option<f64>,
    #[serde(default)]
    pub balance_steps: Option<bool>,
    #[serde(default)]
    pub log_every: Option<usize>,
}

fn default_tolerance() -> f64 {
    1e-2
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Edq
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// The experiment file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub simulator: SimulatorSection,
    pub obs: PolicyParams,
    pub int: PolicyParams,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub tabular: Option<TabularSection>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

/// Config with presets expanded, overrides applied and every section
/// validated. Its canonical JSON is what the config hash covers; the output
/// directory is not part of it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub simulator: SimulatorConfig,
    pub obs: PolicyParams,
    pub int: PolicyParams,
    pub estimator: EstimatorKind,
    pub n_train: usize,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub tabular: Option<ResolvedTabular>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedTabular {
    #[serde(skip)]
    pub fixture: PathBuf,
    pub fixture_hash: String,
    pub tolerance: f64,
    pub config: TabularConfig,
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Expands and validates; `base_dir` anchors relative fixture paths.
    pub fn resolve(&self, base_dir: &Path) -> Result<Resolved> {
        let preset = match self.simulator.preset {
            Preset::FailureLong => SimulatorConfig::failure_long(),
            Preset::FailureShort => SimulatorConfig::failure_short(),
            Preset::Tumor => SimulatorConfig::tumor(),
        };
        let mut value = toml::Value::try_from(&preset).map_err(config_err)?;
        if self.simulator.params.contains_key("kind") {
            return Err(Error::Config("simulator.params may not set `kind`; use `preset`".into()));
        }
        merge(&mut value, &toml::Value::Table(self.simulator.params.clone()));
        let simulator: SimulatorConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("simulator.params: {e}")))?;
        simulator.build().map_err(config_err)?;
        simulator.policy(&self.obs).map_err(|e| Error::Config(format!("obs: {e}")))?;
        simulator.policy(&self.int).map_err(|e| Error::Config(format!("int: {e}")))?;

        let mut train = self.train.clone();
        train.seed = self.seed;
        train.features.mark_dim = train.features.mark_dim.max(simulator.mark_dim());
        train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds is empty".into()));
        }
        for c in &self.eval.cells {
            simulator.policy(&c.obs).map_err(|e| Error::Config(format!("eval.cells: {e}")))?;
            simulator.policy(&c.int).map_err(|e| Error::Config(format!("eval.cells: {e}")))?;
        }

        let tabular = match &self.tabular {
            None => None,
            Some(t) => {
                let fixture = base_dir.join(&t.fixture);
                let text = read_text(&fixture)?;
                let d = TabularConfig::default();
                let config = TabularConfig {
                    updates: t.updates.unwrap_or(d.updates),
                    step_power: t.step_power.unwrap_or(d.step_power),
                    balance_steps: t.balance_steps.unwrap_or(d.balance_steps),
                    seed: self.seed,
                    log_every: t.log_every.unwrap_or(d.log_every),
                };
                if config.updates == 0 || config.log_every == 0 {
                    return Err(Error::Config("tabular.updates and tabular.log_every must be positive".into()));
                }
                if !(t.tolerance > 0.0) {
                    return Err(Error::Config("tabular.tolerance must be positive".into()));
                }
                Some(ResolvedTabular {
                    fixture,
                    fixture_hash: content_hash(text.as_bytes()),
                    tolerance: t.tolerance,
                    config,
                })
            }
        };
        Ok(Resolved {
            seed: self.seed,
            simulator,
            obs: self.obs,
            int: self.int,
            estimator: self.estimator,
            n_train: self.data.n_train,
            train,
            eval: self.eval.clone(),
            tabular,
            output_dir: self.output_dir.clone(),
        })
    }
}

impl Resolved {
    pub fn config_hash(&self) -> Result<String> {
        canonical_hash(self)
    }

    /// Identity of the simulated dataset.
    pub fn data_key(&self) -> Result<String> {
        canonical_hash(&serde_json::json!({
            "seed": self.seed,
            "simulator": self.simulator,
            "obs": self.obs,
            "n_train": self.n_train,
        }))
    }

    /// Identity of a trained model, up to its run length so that a resumed
    /// run with more iterations continues the same model.
    pub fn model_key(&self) -> Result<String> {
        if let Some(t) = &self.tabular {
            return canonical_hash(&serde_json::json!({ "tabular": t }));
        }
        let mut train = serde_json::to_value(&self.train).map_err(config_err)?;
        train.as_object_mut().map(|m| m.remove("iterations"));
        canonical_hash(&serde_json::json!({
            "data": self.data_key()?,
            "estimator": self.estimator,
            "int": self.int,
            "train": train,
        }))
    }

    pub fn grid_cells(&self) -> Vec<GridCell> {
        if !self.eval.cells.is_empty() {
            return self.eval.cells.clone();
        }
        [EstimatorKind::Edq, EstimatorKind::Fqe, EstimatorKind::Erm]
            .into_iter()
            .map(|estimator| GridCell {
                estimator,
                obs: self.obs,
                int: self.int,
            })
            .collect()
    }
}

fn load_resolved(common: &Common) -> Result<Resolved> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    let base = common.config.parent().unwrap_or(Path::new("."));
    cfg.resolve(base)
}

// ---------------------------------------------------------------------------
// Commands

/// Outcome of a command that ran to completion; `passed == false` maps to
/// the verification exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub written: Vec<PathBuf>,
    pub report: String,
}

impl Outcome {
    fn ok(written: Vec<PathBuf>, report: String) -> Self {
        Outcome {
            passed: true,
            written,
            report,
        }
    }
}

pub fn cmd_simulate(cfg: &Resolved) -> Result<Outcome> {
    let hash = cfg.config_hash()?;
    let key = cfg.data_key()?;
    let data = training_data(&cfg.simulator, &cfg.obs, cfg.n_train, cfg.seed)?;
    let text = dataset_to_string(&data, &key, &hash);
    let data_path = cfg.output_dir.join("dataset.csv");
    let manifest_path = cfg.output_dir.join("manifest.json");
    write_text(&data_path, &text)?;
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        config_hash: hash,
        data_key: key,
        seed: cfg.seed,
        n: data.len(),
        simulator: cfg.simulator.clone(),
        obs: cfg.obs,
        dataset_hash: content_hash(text.as_bytes()),
    };
    write_json(&manifest_path, &manifest)?;
    let report = format!("simulated {} trajectories under obs {}", data.len(), cfg.obs.label());
    Ok(Outcome::ok(vec![data_path, manifest_path], report))
}

fn mismatch(what: &str, path: &Path, expected: &str, got: &str) -> Error {
    Error::ArtifactMismatch(format!(
        "{what} in {} is {got}, this config expects {expected}",
        path.display()
    ))
}

/// Loads a dataset after checking it against its manifest and the config.
pub fn load_dataset(cfg: &Resolved, path: &Path) -> Result<crate::estimators::Dataset> {
    let manifest_path = path.with_file_name("manifest.json");
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let text = read_text(path)?;
    let key = cfg.data_key()?;
    let actual = content_hash(text.as_bytes());
    if manifest.dataset_hash != actual {
        return Err(Error::ArtifactMismatch(format!(
            "{} hashes to {actual}, but {} records {}",
            path.display(),
            manifest_path.display(),
            manifest.dataset_hash
        )));
    }
    if manifest.data_key != key {
        return Err(mismatch("data key", &manifest_path, &key, &manifest.data_key));
    }
    let (header, data) = parse_dataset(&text, path)?;
    if header.data_key != key {
        return Err(mismatch("data key", path, &key, &header.data_key));
    }
    Ok(data)
}

fn check_model(cfg: &Resolved, ck: &Checkpoint, path: &Path) -> Result<()> {
    if ck.format != CHECKPOINT_FORMAT {
        return Err(mismatch("format", path, CHECKPOINT_FORMAT, &ck.format));
    }
    let key = cfg.model_key()?;
    if ck.model_key != key {
        return Err(mismatch("model key", path, &key, &ck.model_key));
    }
    Ok(())
}

fn load_fixture(t: &ResolvedTabular) -> Result<DiscreteProcess> {
    let p: DiscreteProcess = read_json(&t.fixture)?;
    p.validate()?;
    Ok(p)
}

fn train_tabular(cfg: &Resolved, t: &ResolvedTabular) -> Result<Outcome> {
    let hash = cfg.config_hash()?;
    let proc = load_fixture(t)?;
    let exact = edq_fixed_point(&proc)?;
    let (table, trace) = train_edq_tabular(&proc, &t.config, Some(&exact))?;
    let sup = table.max_abs_diff(&exact)?;
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        config_hash: hash.clone(),
        data_key: String::new(),
        model_key: cfg.model_key()?,
        model: Model::Tabular {
            table,
            updates: t.config.updates,
            sup_distance: sup,
        },
    };
    let mut diag = format!("# config={hash} model={}\nupdate,sup_distance\n", ck.model_key);
    for (u, d) in &trace {
        diag.push_str(&format!("{u},{d:.6e}\n"));
    }
    let ck_path = cfg.output_dir.join("checkpoint.json");
    let diag_path = cfg.output_dir.join("diagnostics.csv");
    write_json(&ck_path, &ck)?;
    write_text(&diag_path, &diag)?;
    let passed = sup <= t.tolerance;
    let report = format!(
        "tabular EDQ: {} updates, sup-distance to fixed point {sup:.3e} (tolerance {:.0e}): {}",
        t.config.updates,
        t.tolerance,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(Outcome {
        passed,
        written: vec![ck_path, diag_path],
        report,
    })
}

pub fn cmd_train(cfg: &Resolved, dataset: Option<&Path>, resume: bool) -> Result<Outcome> {
    if let Some(t) = &cfg.tabular {
        if resume {
            return Err(Error::Config("tabular runs cannot be resumed".into()));
        }
        return train_tabular(cfg, t);
    }
    let hash = cfg.config_hash()?;
    let data_path = dataset
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("dataset.csv"));
    let data = load_dataset(cfg, &data_path)?;
    let target = cfg.simulator.policy(&cfg.int)?;
    let ck_path = cfg.output_dir.join("checkpoint.json");
    let trained = if resume {
        let ck: Checkpoint = read_json(&ck_path)?;
        check_model(cfg, &ck, &ck_path)?;
        match ck.model {
            Model::Mlp(state) => train_from(*state, &data, Some(&target), &cfg.train)?,
            Model::Tabular { .. } => return Err(mismatch("model", &ck_path, "mlp", "tabular")),
        }
    } else {
        train_estimator(cfg.estimator, &data, &target, &cfg.train)?
    };
    let model_key = cfg.model_key()?;
    let mut diag = format!("# config={hash} model={model_key}\n{DIAGNOSTICS_HEADER}\n");
    for r in &trained.diagnostics {
        diag.push_str(&r.csv());
        diag.push('\n');
    }
    let last = trained.diagnostics.last().map(|r| r.loss).unwrap_or(f64::NAN);
    let report = format!(
        "trained {} for {} iterations on {} trajectories; final loss {last:.4e}",
        cfg.estimator.as_str(),
        trained.iterations_done,
        data.len()
    );
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        config_hash: hash,
        data_key: cfg.data_key()?,
        model_key,
        model: Model::Mlp(Box::new(trained)),
    };
    let diag_path = cfg.output_dir.join("diagnostics.csv");
    write_json(&ck_path, &ck)?;
    write_text(&diag_path, &diag)?;
    Ok(Outcome::ok(vec![ck_path, diag_path], report))
}

pub fn cmd_evaluate(cfg: &Resolved, checkpoint: Option<&Path>) -> Result<Outcome> {
    let hash = cfg.config_hash()?;
    let results_path = cfg.output_dir.join("results.csv");
    let Some(path) = checkpoint else {
        let grid = GridConfig {
            n_train: cfg.n_train,
            n_test: cfg.eval.n_test,
            seeds: cfg.eval.seeds.clone(),
            train: cfg.train.clone(),
        };
        let rows = run_grid(&cfg.simulator, &cfg.grid_cells(), &grid)?;
        let reports = aggregate(&rows);
        let agg_path = cfg.output_dir.join("aggregate.csv");
        write_text(&results_path, &format!("# config={hash}\n{}", results_csv(&rows)))?;
        let agg = aggregate_csv(&reports);
        write_text(&agg_path, &format!("# config={hash}\n{agg}"))?;
        return Ok(Outcome::ok(vec![results_path, agg_path], agg));
    };
    let ck: Checkpoint = read_json(path)?;
    check_model(cfg, &ck, path)?;
    let header = format!("# config={hash} model={}\n", ck.model_key);
    match ck.model {
        Model::Mlp(trained) => {
            let test = test_data(&cfg.simulator, &cfg.int, cfg.eval.n_test, cfg.seed)?;
            let row = ResultRow {
                estimator: trained.estimator,
                setting_obs: cfg.obs.label(),
                setting_int: cfg.int.label(),
                seed: cfg.seed,
                nrmse: evaluate(&trained.q, &test)?,
                n_test: test.records.len(),
                n_prefixes: test.n_prefixes(),
            };
            let csv = results_csv(std::slice::from_ref(&row));
            write_text(&results_path, &format!("{header}{csv}"))?;
            Ok(Outcome::ok(vec![results_path], csv))
        }
        Model::Tabular { table, .. } => {
            let t = cfg
                .tabular
                .as_ref()
                .ok_or_else(|| Error::Config("tabular checkpoint needs a [tabular] section".into()))?;
            let proc = load_fixture(t)?;
            let exact = edq_fixed_point(&proc)?;
            let sup = table.max_abs_diff(&exact)?;
            let residual = edq_residual(&proc, &table)?;
            let csv = format!("metric,value\nsup_distance,{sup:.6e}\nresidual,{residual:.6e}\n");
            write_text(&results_path, &format!("{header}{csv}"))?;
            Ok(Outcome {
                passed: sup <= t.tolerance,
                written: vec![results_path],
                report: csv,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn bundled_fixture(text: &str) -> Result<DiscreteProcess> {
    let p: DiscreteProcess = serde_json::from_str(text).map_err(|e| Error::Numerical(format!("fixture: {e}")))?;
    p.validate()?;
    Ok(p)
}

/// The exact checks behind `verify`. Every check is deterministic given
/// `seed`.
pub fn verify_checks(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let id = identity_sweep(100, seed)?;
    out.push(check(
        "discrete identity",
        id.max_error < 1e-9,
        format!("{} instances, {} (history, depth) pairs, max |lhs-rhs| {:.2e}", id.instances, id.checks, id.max_error),
    ));
    let fp = fixed_point_sweep(100, seed)?;
    out.push(check(
        "fixed point = target expectation",
        fp.max_error < 1e-9,
        format!("{} instances, {} histories, max error {:.2e}", fp.instances, fp.checks, fp.max_error),
    ));
    for (name, text) in [
        ("fixture oracle_t2", include_str!("../fixtures/oracle_t2.json")),
        ("fixture oracle_hand", include_str!("../fixtures/oracle_hand.json")),
    ] {
        let p = bundled_fixture(text)?;
        let q = edq_fixed_point(&p)?;
        let r = edq_residual(&p, &q)?;
        out.push(check(name, r < 1e-12, format!("fixed-point residual {r:.2e}")));
    }
    let g = gradient_check(100, seed)?;
    out.push(check("gradient", g < 1e-5, format!("100 cases, max relative error {g:.2e}")));
    let start: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
    let theta: Vec<f64> = (0..50).map(|i| (i as f64 * 0.11).cos()).collect();
    let mut worst: f64 = 0.0;
    for n in [1, 10, 50, 100] {
        worst = worst.max(soft_update_law_error(&start, &theta, 0.05, n)?);
    }
    out.push(check("soft update law", worst < 1e-12, format!("max relative error {worst:.2e}")));
    let fig = check_eliminability(&Graph::from_spec(&figure_one())?);
    out.push(check("figure-1 graph eliminable", fig.eliminable, format!("eliminable: {}", fig.eliminable)));
    let conf = check_eliminability(&Graph::from_spec(&confounded_example())?);
    let witnesses: Vec<String> = conf
        .checks
        .iter()
        .flat_map(|c| [&c.first.witness, &c.second.witness])
        .flatten()
        .cloned()
        .collect();
    out.push(check(
        "confounded graph not eliminable",
        !conf.eliminable && !witnesses.is_empty(),
        format!("eliminable: {}; witnesses {}", conf.eliminable, witnesses.join("; ")),
    ));
    Ok(out)
}

pub fn cmd_verify(seed: u64) -> Result<Outcome> {
    let checks = verify_checks(seed)?;
    let mut report = String::new();
    for c in &checks {
        report.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    Ok(Outcome {
        passed: checks.iter().all(|c| c.passed),
        written: Vec::new(),
        report,
    })
}

pub fn load_graph(path: &Path) -> Result<GraphSpec> {
    toml::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_graph_check(path: &Path) -> Result<Outcome> {
    let g = Graph::from_spec(&load_graph(path)?)?;
    Ok(Outcome::ok(Vec::new(), check_eliminability(&g).to_string()))
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownNode(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        // A second call within one process fails harmlessly; the pool size
        // never affects results.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate(c) => cmd_simulate(&load_resolved(c)?),
        Command::Train { common, dataset, resume } => cmd_train(&load_resolved(common)?, dataset.as_deref(), *resume),
        Command::Evaluate { common, checkpoint } => cmd_evaluate(&load_resolved(common)?, checkpoint.as_deref()),
        Command::Verify { seed } => cmd_verify(seed.unwrap_or(0)),
        Command::GraphCheck { graph } => cmd_graph_check(graph),
    }
}

/// Parses `args` (including the program name), runs, prints, and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{}", out.report);
            if !out.report.ends_with('\n') {
                println!();
            }
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            if out.passed {
                EXIT_OK
            } else {
                EXIT_VERIFY
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::TabularQ;

    const MINIMAL: &str = r#"
        [simulator]
        preset = "failure-short"
        [obs]
        rate = 2.0
        [int]
        rate = 0.2
    "#;

    fn resolved(text: &str) -> Result<Resolved> {
        ExperimentConfig::from_toml(text)?.resolve(Path::new("."))
    }

    #[test]
    fn minimal_config_resolves() {
        let r = resolved(MINIMAL).unwrap();
        assert_eq!(r.simulator, SimulatorConfig::failure_short());
        assert_eq!(r.estimator, EstimatorKind::Edq);
        assert_eq!(r.grid_cells().len(), 3);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for extra in ["bogus = 1", "[train]\nitrations = 3", "[data]\nn = 3", "[simulator.params]\nnope = 1"] {
            let e = resolved(&format!("{extra}\n{MINIMAL}")).unwrap_err();
            assert_eq!(exit_code(&e), EXIT_CONFIG, "{extra}: {e}");
        }
        let e = resolved(&MINIMAL.replace("rate = 0.2", "gamma = 1.0\nbeta = 0.5")).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        let e = resolved(&format!("[train]\nlr = -1.0\n{MINIMAL}")).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
    }

    #[test]
    fn params_override_individual_fields() {
        let r = resolved(&format!("[simulator.params]\nhorizon = 7.5\n{MINIMAL}")).unwrap();
        let SimulatorConfig::Failure(p) = &r.simulator else { panic!() };
        let mut expected = crate::simulators::FailureSimParams::short();
        expected.horizon = 7.5;
        assert_eq!(*p, expected);
    }

    #[test]
    fn stage_keys_track_their_inputs() {
        let base = resolved(MINIMAL).unwrap();
        let with = |extra: &str| resolved(&format!("{extra}\n{MINIMAL}")).unwrap();

        let lr = with("[train]\nlr = 0.01");
        assert_eq!(lr.data_key().unwrap(), base.data_key().unwrap());
        assert_ne!(lr.model_key().unwrap(), base.model_key().unwrap());
        assert_ne!(lr.config_hash().unwrap(), base.config_hash().unwrap());

        let iters = with("[train]\niterations = 9");
        assert_eq!(iters.model_key().unwrap(), base.model_key().unwrap());
        assert_ne!(iters.config_hash().unwrap(), base.config_hash().unwrap());

        let n = with("[data]\nn_train = 5");
        assert_ne!(n.data_key().unwrap(), base.data_key().unwrap());
        assert_ne!(n.model_key().unwrap(), base.model_key().unwrap());

        let out = with("output_dir = \"elsewhere\"");
        assert_eq!(out.config_hash().unwrap(), base.config_hash().unwrap());
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(run(["edq", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["edq", "simulate"]), EXIT_CONFIG);
        assert_eq!(run(["edq", "simulate", "--config", "/nonexistent/x.toml"]), EXIT_RUNTIME);
    }

    #[test]
    fn verify_passes() {
        let checks = verify_checks(0).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(checks.len(), 8);
    }

    #[test]
    fn tabular_checkpoints_round_trip() {
        let m = Model::Tabular {
            table: TabularQ::new(),
            updates: 3,
            sup_distance: 0.5,
        };
        let s = serde_json::to_string(&m).unwrap();
        let back: Model = serde_json::from_str(&s).unwrap();
        assert!(matches!(back, Model::Tabular { updates: 3, .. }));
    }
}
