//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! consumed by some section; leftovers are reported as unknown.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::aggregator::AggregatorConfig;
use crate::codec::read_text;
use crate::detector::EvtConfig;
use crate::embedding::WalkConfig;
use crate::error::{Error, Result};
use crate::impact::ImpactConfig;
use crate::simulator::ScenarioConfig;

#[derive(Debug, Default)]
pub struct KvConfig {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
    used: RefCell<BTreeSet<String>>,
}

impl KvConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            let k = k.trim().to_string();
            if entries
                .insert(k.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
            used: RefCell::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        let (_, v) = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    /// Parses `key` into `slot` when present.
    pub fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some((line, v)) = self.entries.get(key) {
            self.used.borrow_mut().insert(key.to_string());
            *slot = v.parse().map_err(|_| Error::Parse {
                path: self.path.clone(),
                line: *line,
                msg: format!("bad value `{v}` for `{key}`"),
            })?;
        }
        Ok(())
    }

    /// Errors on keys no section consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        if let Some((k, (line, _))) = self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: *line,
                msg: format!("unknown key `{k}`"),
            });
        }
        Ok(())
    }
}

pub fn apply_evt(kv: &KvConfig, c: &mut EvtConfig) -> Result<()> {
    kv.set("risk_q", &mut c.risk_q)?;
    kv.set("peak_frac", &mut c.peak_frac)?;
    kv.set("calib_n", &mut c.calib_n)
}

pub fn apply_impact(kv: &KvConfig, c: &mut ImpactConfig) -> Result<()> {
    kv.set("alpha", &mut c.alpha)?;
    kv.set("lookback", &mut c.lookback)?;
    kv.set("kpi_grace", &mut c.kpi_grace)?;
    kv.set("kpi_risk_q", &mut c.kpi_risk_q)?;
    kv.set("kpi_peak_frac", &mut c.kpi_peak_frac)
}

pub fn apply_walk(kv: &KvConfig, c: &mut WalkConfig) -> Result<()> {
    kv.set("walk_length", &mut c.walk_length)?;
    kv.set("walks_per_start", &mut c.walks_per_start)?;
    kv.set("window", &mut c.window)?;
    kv.set("dim", &mut c.dim)?;
    kv.set("epochs", &mut c.epochs)?;
    kv.set("negatives", &mut c.negatives)?;
    kv.set("learning_rate", &mut c.learning_rate)?;
    kv.set("seed", &mut c.seed)?;
    kv.set("workers", &mut c.workers)
}

pub fn apply_aggregator(kv: &KvConfig, c: &mut AggregatorConfig) -> Result<()> {
    kv.set("lambda", &mut c.lambda)?;
    kv.set("tau", &mut c.tau)
}

pub fn apply_scenario(kv: &KvConfig, c: &mut ScenarioConfig) -> Result<()> {
    kv.set("seed", &mut c.seed)?;
    kv.set("zones", &mut c.zones)?;
    if let Some(v) = kv.get_str("layers") {
        let parts: Vec<usize> = v
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad layers `{v}`")))?;
        c.layers = parts
            .try_into()
            .map_err(|_| Error::Config(format!("layers needs three sizes, got `{v}`")))?;
    }
    kv.set("dep_prob", &mut c.dep_prob)?;
    kv.set("placement", &mut c.placement)?;
    kv.set("noise_rate", &mut c.noise_rate)?;
    kv.set("noise_types", &mut c.noise_types)?;
    kv.set("shared_noise", &mut c.shared_noise)?;
    kv.set("n_failures", &mut c.n_failures)?;
    kv.set("n_classes", &mut c.n_classes)?;
    kv.set("types_per_class", &mut c.types_per_class)?;
    kv.set("failure_overlap", &mut c.failure_overlap)?;
    kv.set("silent_prob", &mut c.silent_prob)?;
    kv.set("attenuation", &mut c.attenuation)?;
    kv.set("max_hops", &mut c.max_hops)?;
    kv.set(
        "incidents_per_failure_node",
        &mut c.incidents_per_failure_node,
    )?;
    kv.set("burst_minutes", &mut c.burst_minutes)?;
    kv.set("n_ramp", &mut c.n_ramp)?;
    kv.set("ramp_minutes", &mut c.ramp_minutes)?;
    kv.set("ramp_peak", &mut c.ramp_peak)?;
    kv.set("kpi_lag_max", &mut c.kpi_lag_max)?;
    kv.set("kpi_height", &mut c.kpi_height)?;
    kv.set("warmup_minutes", &mut c.warmup_minutes)?;
    kv.set("failure_gap", &mut c.failure_gap)?;
    kv.set("duration_minutes", &mut c.duration_minutes)
}
