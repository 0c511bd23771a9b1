//! On-disk artifacts: the line-delimited dataset format, its manifest,
//! checkpoints, and the content hashes tying them together.
//!
//! Dataset files look like
//!
//! ```text
//! # edq-dataset v1 horizon=10 n=2 data=3f1c… config=9a0b…
//! 0,0.41,feature,1.3
//! 0,2.5,treatment,0.8
//! 0,OUTCOME,1.7
//! 1,OUTCOME,0
//! ```
//!
//! Event rows are `traj_id,time,kind,mark...`; each trajectory ends with a
//! `traj_id,OUTCOME,y` row (also for trajectories without events). Numbers are
//! written in shortest round-trip form, so parsing recovers every bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approximator::TabularQ;
use crate::error::{Error, Result};
use crate::estimators::{Dataset, TrainedQ};
use crate::evaluation::{PolicyParams, SimulatorConfig};
use crate::process::{Event, EventKind, Trajectory};

pub const DATASET_FORMAT: &str = "edq-dataset v1";
pub const CHECKPOINT_FORMAT: &str = "edq-checkpoint v1";

/// Git-style content hash: sha256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of a value's canonical JSON (object keys sorted).
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Config(format!("hashing: {e}")))?;
    let text = serde_json::to_string(&v).map_err(|e| Error::Config(format!("hashing: {e}")))?;
    Ok(content_hash(text.as_bytes()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("serialising: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub horizon: String,
    pub n: usize,
    pub data_key: String,
    pub config_hash: String,
}

pub fn dataset_to_string(data: &Dataset, data_key: &str, config_hash: &str) -> String {
    let mut s = format!(
        "# {DATASET_FORMAT} horizon={} n={} data={data_key} config={config_hash}\n",
        data.horizon,
        data.len()
    );
    for (i, (traj, y)) in data.records.iter().enumerate() {
        for e in traj.events() {
            let _ = write!(s, "{i},{},{}", e.time, e.kind);
            for m in &e.mark {
                let _ = write!(s, ",{m}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "{i},OUTCOME,{y}");
    }
    s
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<(DatasetHeader, Dataset)> {
    let err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields = first
        .strip_prefix("# ")
        .and_then(|r| r.strip_prefix(DATASET_FORMAT))
        .ok_or_else(|| err(1, format!("expected `# {DATASET_FORMAT}` header")))?;
    let get = |key: &str| -> Result<String> {
        fields
            .split_whitespace()
            .find_map(|f| f.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .map(str::to_owned)
            .ok_or_else(|| err(1, format!("header lacks `{key}=`")))
    };
    let header = DatasetHeader {
        horizon: get("horizon")?,
        n: get("n")?.parse().map_err(|e| err(1, format!("n: {e}")))?,
        data_key: get("data")?,
        config_hash: get("config")?,
    };
    let horizon: f64 = header.horizon.parse().map_err(|e| err(1, format!("horizon: {e}")))?;

    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>().map_err(|e| err(line, format!("`{s}`: {e}")))
    };
    let mut records = Vec::with_capacity(header.n);
    let mut events: Vec<Event> = Vec::new();
    for (idx, line) in lines {
        let ln = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id: usize = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| err(ln, format!("traj_id: {e}")))?;
        if id != records.len() {
            return Err(err(ln, format!("traj_id {id} out of order, expected {}", records.len())));
        }
        let second = parts.next().ok_or_else(|| err(ln, "missing time".into()))?;
        if second == "OUTCOME" {
            let y = num(parts.next().ok_or_else(|| err(ln, "missing outcome".into()))?, ln)?;
            if parts.next().is_some() {
                return Err(err(ln, "trailing fields after outcome".into()));
            }
            let traj = Trajectory::new(std::mem::take(&mut events), horizon).map_err(|e| err(ln, e.to_string()))?;
            records.push((traj, y));
            continue;
        }
        let time = num(second, ln)?;
        let kind_str = parts.next().ok_or_else(|| err(ln, "missing kind".into()))?;
        let kind = EventKind::parse(kind_str).ok_or_else(|| err(ln, format!("unknown kind `{kind_str}`")))?;
        let mark = parts.map(|m| num(m, ln)).collect::<Result<Vec<_>>>()?;
        events.push(Event::new(time, kind, mark));
    }
    if !events.is_empty() {
        return Err(err(text.lines().count(), format!("trajectory {} has no OUTCOME row", records.len())));
    }
    if records.len() != header.n {
        return Err(err(1, format!("header says n={}, file has {}", header.n, records.len())));
    }
    let data = Dataset::new(records, horizon).map_err(|e| err(1, e.to_string()))?;
    Ok((header, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub config_hash: String,
    pub data_key: String,
    pub seed: u64,
    pub n: usize,
    pub simulator: SimulatorConfig,
    pub obs: PolicyParams,
    /// [`content_hash`] of the dataset file.
    pub dataset_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Model {
    Mlp(Box<TrainedQ>),
    Tabular {
        table: TabularQ,
        updates: usize,
        sup_distance: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    /// Empty for tabular runs, which read no dataset.
    pub data_key: String,
    pub model_key: String,
    pub model: Model,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn toy() -> Dataset {
        let e = |t: f64, k: EventKind, m: Vec<f64>| Event::new(t, k, m);
        let a = Trajectory::new(
            vec![
                e(0.1 + 0.2, EventKind::Feature, vec![1.0 / 3.0]),
                e(2.5, EventKind::Treatment, vec![0.8, -1e-300]),
                e(3.0, EventKind::Outcome, vec![]),
            ],
            10.0,
        )
        .unwrap();
        Dataset::new(vec![(a, 1.7), (Trajectory::empty(10.0).unwrap(), 0.0)], 10.0).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let data = toy();
        let text = dataset_to_string(&data, "dk", "ch");
        let (h, back) = parse_dataset(&text, Path::new("x")).unwrap();
        assert_eq!(h.n, 2);
        assert_eq!(h.data_key, "dk");
        assert_eq!(h.config_hash, "ch");
        assert_eq!(back.records, data.records);
        assert_eq!(dataset_to_string(&back, "dk", "ch"), text);
    }

    #[test]
    fn simulated_round_trip() {
        let cfg = SimulatorConfig::failure_short();
        let sim = cfg.build().unwrap();
        let pol = cfg.policy(&PolicyParams::Rate { rate: 2.0 }).unwrap();
        let data = Dataset::simulate(sim.as_ref(), &pol, 20, &SeedStream::new(1)).unwrap();
        let text = dataset_to_string(&data, "a", "b");
        let (_, back) = parse_dataset(&text, Path::new("x")).unwrap();
        assert_eq!(back.records, data.records);
    }

    #[test]
    fn documented_example_parses() {
        let text = "# edq-dataset v1 horizon=12 n=2 data=e5dc9e5d config=16f4b593\n\
                    0,0,feature,10\n\
                    0,1,feature,7.333726064269228\n\
                    0,2.3101850936631614,treatment,4.616919283413948\n\
                    0,5.450036831244522,outcome,5.450036831244522\n\
                    0,OUTCOME,5.450036831244522\n\
                    1,OUTCOME,0\n";
        let (h, data) = parse_dataset(text, Path::new("x")).unwrap();
        assert_eq!((h.n, h.horizon.as_str()), (2, "12"));
        assert_eq!(data.records[0].0.len(), 4);
        assert!(data.records[1].0.is_empty());
        assert_eq!(dataset_to_string(&data, "e5dc9e5d", "16f4b593"), text);
    }

    #[test]
    fn malformed_files_report_lines() {
        let p = Path::new("d.csv");
        let cases = [
            ("", 1),
            ("# edq-dataset v1 horizon=1 n=1 data=a config=b\n0,0.5,feature\n", 2),
            ("# edq-dataset v1 horizon=1 n=1 data=a config=b\n0,0.5,bogus,1\n0,OUTCOME,1\n", 2),
            ("# edq-dataset v1 horizon=1 n=1 data=a config=b\n1,OUTCOME,1\n", 2),
            ("# edq-dataset v1 horizon=1 n=1 data=a config=b\n0,2.0,feature,1\n0,OUTCOME,1\n", 3),
            ("# edq-dataset v1 horizon=1 n=2 data=a config=b\n0,OUTCOME,1\n", 1),
        ];
        for (text, line) in cases {
            match parse_dataset(text, p) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn hashes() {
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
        #[derive(Serialize)]
        struct A {
            b: u8,
            a: u8,
        }
        #[derive(Serialize)]
        struct B {
            a: u8,
            b: u8,
        }
        assert_eq!(canonical_hash(&A { b: 1, a: 2 }).unwrap(), canonical_hash(&B { a: 2, b: 1 }).unwrap());
    }
}
