//! Plan-file parsing. The format is flat `section.key = value` text:
//!
//! ```text
//! # replication settings
//! plan.repetitions = 500
//! plan.alpha = 0.05
//! plan.seed = 42
//! plan.jobs = 4
//!
//! # cell grid (cross product)
//! scenario.grid = S1U,S1B
//! scenario.hypothesis = null,alt
//! scenario.n = 500,1000
//! scenario.p = 10
//! method.grid = gcm-lm,clf,clf-cv,mmd-l,mmd-l-cv
//! ```
//!
//! Lines starting with `#` and blank lines are ignored.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::synth::{Hypothesis, Scenario, ScenarioConfig, Support};

use super::{ExperimentPlan, MethodSpec};

/// Parses a scenario id such as `S1U` or `s2b`.
pub fn parse_scenario_id(s: &str) -> Result<(Scenario, Support)> {
    let t = s.trim().to_uppercase();
    let scenario = match t.get(..2) {
        Some("S1") => Scenario::S1,
        Some("S2") => Scenario::S2,
        Some("S3") => Scenario::S3,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "unknown scenario id '{s}' (expected S1U, S1B, ..., S3B)"
            )))
        }
    };
    let support = match t.get(2..) {
        Some("U") => Support::Unbounded,
        Some("B") => Support::Bounded,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "scenario id '{s}' must end in U or B"
            )))
        }
    };
    Ok((scenario, support))
}

fn parse_hypothesis(s: &str) -> Result<Hypothesis> {
    match s.trim().to_lowercase().as_str() {
        "null" => Ok(Hypothesis::Null),
        "alt" | "alternative" => Ok(Hypothesis::Alt),
        other => Err(Error::InvalidConfig(format!(
            "unknown hypothesis '{other}' (expected null or alt)"
        ))),
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses plan text into an [`ExperimentPlan`].
pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected 'section.key = value'", no + 1))
        })?;
        entries.insert(key.trim().to_lowercase(), value.trim().to_string());
    }

    let known_prefix =
        |k: &str| k.starts_with("plan.") || k.starts_with("scenario.") || k.starts_with("method.");
    if let Some(bad) = entries.keys().find(|k| !known_prefix(k)) {
        return Err(Error::InvalidConfig(format!("unknown plan key '{bad}'")));
    }

    let get = |k: &str| entries.get(k).map(String::as_str);
    let required = |k: &str| -> Result<&str> {
        get(k).ok_or_else(|| Error::InvalidConfig(format!("missing required plan key '{k}'")))
    };
    let parse_num = |k: &str, v: &str| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|e| Error::InvalidConfig(format!("{k} = {v}: {e}")))
    };

    let ids = split_list(required("scenario.grid")?);
    let ns: Vec<usize> = split_list(required("scenario.n")?)
        .iter()
        .map(|v| parse_num("scenario.n", v).map(|x| x as usize))
        .collect::<Result<Vec<_>>>()?;
    let hypotheses: Vec<Hypothesis> = match get("scenario.hypothesis") {
        Some(v) => split_list(v)
            .iter()
            .map(|h| parse_hypothesis(h))
            .collect::<Result<Vec<_>>>()?,
        None => vec![Hypothesis::Null, Hypothesis::Alt],
    };
    let p = match get("scenario.p") {
        Some(v) => parse_num("scenario.p", v)? as usize,
        None => 10,
    };

    let methods: Vec<MethodSpec> = split_list(required("method.grid")?)
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<_>>>()?;

    let mut scenarios = Vec::new();
    for id in &ids {
        let (scenario, support) = parse_scenario_id(id)?;
        for &hypothesis in &hypotheses {
            for &n in &ns {
                scenarios.push(ScenarioConfig::with_dim(
                    scenario, support, hypothesis, n, p,
                )?);
            }
        }
    }

    let mut plan = ExperimentPlan::new(scenarios, methods);
    if let Some(v) = get("plan.repetitions") {
        plan.repetitions = parse_num("plan.repetitions", v)? as usize;
    }
    if let Some(v) = get("plan.alpha") {
        plan.alpha = parse_num("plan.alpha", v)?;
    }
    if let Some(v) = get("plan.seed") {
        plan.base_seed = parse_num("plan.seed", v)? as u64;
    }
    if let Some(v) = get("plan.jobs") {
        plan.parallelism = parse_num("plan.jobs", v)? as usize;
    }
    Ok(plan)
}
