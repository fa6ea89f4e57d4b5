//! Report assembly. Everything except `wall_time` is a pure function of the
//! suite, corpus spec, options and seed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::checks::Outcome;
use crate::seeding::hex_digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    #[serde(rename = "inputs-digest")]
    pub inputs_digest: String,
    pub values: BTreeMap<String, f64>,
    /// Smallest exact-constant slack, if any assertion ran.
    pub slack: Option<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flags: BTreeMap<String, bool>,
}

impl TrialRecord {
    /// Flattens an outcome: slacks become `slack.<name>`, deficits `deficit.<name>`.
    pub fn from_outcome(index: usize, inputs: &str, o: Outcome) -> Self {
        let mut values = o.values.clone();
        values.extend(o.slacks.iter().map(|(k, v)| (format!("slack.{k}"), *v)));
        values.extend(o.deficits.iter().map(|(k, v)| (format!("deficit.{k}"), *v)));
        Self {
            index,
            inputs_digest: hex_digest(inputs.as_bytes()),
            values,
            slack: o.min_slack(),
            pass: o.violations() == 0,
            skipped: o.skipped,
            flags: o.flags,
        }
    }

    fn deficits(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().filter_map(|(k, v)| k.strip_prefix("deficit.").map(|n| (n, *v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeficitStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl DeficitStats {
    fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        Some(Self {
            count: xs.len(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: crate::numeric::compensated_sum(xs.iter().copied()) / xs.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub violations: usize,
    pub skipped: usize,
    pub deficit_min: Option<f64>,
    pub deficit_max: Option<f64>,
    pub deficit_mean: Option<f64>,
    /// Largest constant any trial demanded (the deficit maximum).
    pub empirical_constant: Option<f64>,
    /// Per-statement deficit statistics.
    pub table: BTreeMap<String, DeficitStats>,
    pub warnings: Vec<String>,
    /// Suite-specific aggregates.
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub corpus: Value,
    pub seed: u64,
    pub options: Value,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    pub version: String,
    pub wall_time: f64,
}

impl Report {
    pub fn new(suite: &str, corpus: Value, seed: u64, options: Value, trials: Vec<TrialRecord>) -> Self {
        let mut summary = Summary {
            trials: trials.len(),
            violations: trials.iter().filter(|t| !t.pass).count(),
            skipped: trials.iter().filter(|t| !t.skipped.is_empty()).count(),
            ..Default::default()
        };
        let mut by_name: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for t in &trials {
            for (k, v) in t.deficits() {
                by_name.entry(k.to_string()).or_default().push(v);
            }
        }
        let all: Vec<f64> = by_name.values().flatten().copied().collect();
        if let Some(s) = DeficitStats::of(&all) {
            summary.deficit_min = Some(s.min);
            summary.deficit_max = Some(s.max);
            summary.deficit_mean = Some(s.mean);
            summary.empirical_constant = Some(s.max);
        }
        summary.table = by_name.iter().filter_map(|(k, v)| DeficitStats::of(v).map(|s| (k.clone(), s))).collect();
        if trials.is_empty() {
            summary.warnings.push("empty corpus: no trials ran".into());
        }
        Self {
            suite: suite.into(),
            corpus,
            seed,
            options,
            trials,
            summary,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time: 0.0,
        }
    }

    /// Adds a suite-level exact check that is not tied to one trial.
    pub fn add_global_check(&mut self, name: &str, pass: bool, detail: Value) {
        if !pass {
            self.summary.violations += 1;
        }
        self.summary.extra.insert(name.into(), serde_json::json!({ "pass": pass, "detail": detail }));
    }

    pub fn extra(&mut self, name: &str, v: Value) {
        self.summary.extra.insert(name.into(), v);
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.summary.warnings.push(w.into());
    }

    pub fn passed(&self) -> bool {
        self.summary.violations == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with `wall_time` zeroed; equal for reruns with the same inputs.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.wall_time = 0.0;
        r.to_json()
    }

    pub fn digest(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }
}
