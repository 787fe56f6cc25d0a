//! Scenario files: JSON schema, validation and canonical serialization.
//!
//! A scenario is one UTF-8 JSON document with the top-level keys `name`,
//! `symbols`, `hypotheses`, `actions`, `environment`, `agents` and `run`.
//! Probability vectors are objects keyed by symbol or hypothesis id so every
//! entry can be checked against its declaration. Validation errors carry the
//! key path of the offending field.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learning::{Agent, CatalogEntry, Environment, Episode};
use crate::model::{
    Ground, Hypothesis, HypothesisSpace, Observation, WorldModel, NORMALIZATION_TOL,
};
use crate::profile::InferenceProfile;

/// Prefix that selects a scenario shipped with the crate instead of a file.
pub const BUNDLED_PREFIX: &str = "bundled:";

const BUNDLED: &[(&str, &str)] = &[
    (
        "ai_regulation",
        include_str!("../scenarios/ai_regulation.json"),
    ),
    (
        "horizon_switch",
        include_str!("../scenarios/horizon_switch.json"),
    ),
    ("toy_pair", include_str!("../scenarios/toy_pair.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

// ---------------------------------------------------------------------------
// On-disk schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub symbols: Vec<String>,
    pub hypotheses: Vec<HypothesisFile>,
    pub actions: Vec<String>,
    pub environment: EnvironmentFile,
    pub agents: Vec<AgentFile>,
    pub run: RunFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisFile {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub outcome_streams: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentFile {
    pub regimes: BTreeMap<String, BTreeMap<String, f64>>,
    pub active_regime: String,
    pub bundle_size: usize,
    pub catalog: BTreeMap<String, CatalogEntry>,
    #[serde(default)]
    pub interventions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub id: String,
    pub exposure: usize,
    /// RNG sub-stream; defaults to the agent's position plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<u64>,
    pub profile: InferenceProfile,
    pub model: ModelFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub prior: BTreeMap<String, f64>,
    pub smoothing: f64,
    /// Missing entries count as zero.
    #[serde(default)]
    pub emission_counts: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub steps: usize,
    pub seed: u64,
    pub delta: f64,
    /// Symbols of the probe observation used by alignment and attribution;
    /// defaults to one ground per symbol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<String>>,
    /// Candidate symbols for observation design; defaults to the alphabet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_candidates: Option<Vec<String>>,
    /// Steps of post-intervention evidence each agent forecasts over.
    #[serde(default = "default_horizon")]
    pub intervention_horizon: usize,
}

fn default_horizon() -> usize {
    1
}

// ---------------------------------------------------------------------------
// Validated scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub steps: usize,
    pub seed: u64,
    pub delta: f64,
    pub probe: Option<Vec<String>>,
    pub observation_candidates: Option<Vec<String>>,
    pub intervention_horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub space: Arc<HypothesisSpace>,
    pub environment: Environment,
    pub agents: Vec<Agent>,
    pub run: RunSettings,
}

impl Scenario {
    /// Loads a scenario file, or a bundled scenario when `path` starts with
    /// `bundled:`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = path.to_string_lossy();
        if let Some(name) = text.strip_prefix(BUNDLED_PREFIX) {
            let src =
                bundled_source(name).ok_or_else(|| Error::unknown("bundled scenario", name))?;
            return Self::from_json(src, &text);
        }
        let src = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&src, &text)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        Self::load(format!("{BUNDLED_PREFIX}{name}"))
    }

    pub fn from_json(src: &str, origin: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(src).map_err(|source| Error::Parse {
            what: origin.to_string(),
            source,
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let hypotheses = file
            .hypotheses
            .iter()
            .map(|h| Hypothesis {
                id: h.id.clone(),
                label: h.label.clone(),
                outcome_streams: h.outcome_streams.clone(),
            })
            .collect();
        let space = Arc::new(HypothesisSpace::new(
            file.symbols.clone(),
            file.actions.clone(),
            hypotheses,
        )?);

        let environment = build_environment(&space, &file.environment)?;

        if file.agents.is_empty() {
            return Err(Error::validation("agents", "no agents declared"));
        }
        let mut agents = Vec::with_capacity(file.agents.len());
        for (i, af) in file.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            if agents.iter().any(|a: &Agent| a.id == af.id) {
                return Err(Error::validation(
                    format!("{path}.id"),
                    format!("duplicate agent id `{}`", af.id),
                ));
            }
            if af.exposure == 0 || af.exposure > environment.bundle_size() {
                return Err(Error::validation(
                    format!("{path}.exposure"),
                    format!(
                        "exposure {} outside 1..={}",
                        af.exposure,
                        environment.bundle_size()
                    ),
                ));
            }
            af.profile
                .validate()
                .map_err(|e| Error::validation(format!("{path}.profile"), contract_message(e)))?;
            let model = build_model(&space, &af.model, &format!("{path}.model"))?;
            let agent = Agent::new(
                af.id.clone(),
                model,
                af.profile,
                af.exposure,
                af.stream.unwrap_or(i as u64 + 1),
            )
            .map_err(|e| Error::validation(&path, contract_message(e)))?;
            agents.push(agent);
        }

        let run = &file.run;
        if run.steps == 0 {
            return Err(Error::validation("run.steps", "must be >= 1"));
        }
        if !(run.delta >= 0.0) || !run.delta.is_finite() {
            return Err(Error::validation(
                "run.delta",
                format!("must be finite and >= 0, got {}", run.delta),
            ));
        }
        if run.intervention_horizon == 0 {
            return Err(Error::validation(
                "run.intervention_horizon",
                "must be >= 1",
            ));
        }
        for (key, list) in [
            ("probe", &run.probe),
            ("observation_candidates", &run.observation_candidates),
        ] {
            if let Some(list) = list {
                if list.is_empty() {
                    return Err(Error::validation(format!("run.{key}"), "list is empty"));
                }
                for (j, s) in list.iter().enumerate() {
                    if !space.symbols().contains(s) {
                        return Err(Error::validation(
                            format!("run.{key}[{j}]"),
                            format!("references undeclared symbol `{s}`"),
                        ));
                    }
                }
            }
        }

        Ok(Scenario {
            name: file.name,
            space,
            environment,
            agents,
            run: RunSettings {
                steps: run.steps,
                seed: run.seed,
                delta: run.delta,
                probe: run.probe.clone(),
                observation_candidates: run.observation_candidates.clone(),
                intervention_horizon: run.intervention_horizon,
            },
        })
    }

    /// Inverse of [`Scenario::from_file`].
    pub fn to_file(&self) -> ScenarioFile {
        let symbols = self.space.symbols();
        let hyps = self.space.hypotheses();
        let env = &self.environment;
        ScenarioFile {
            name: self.name.clone(),
            symbols: symbols.to_vec(),
            hypotheses: hyps
                .iter()
                .map(|h| HypothesisFile {
                    id: h.id.clone(),
                    label: h.label.clone(),
                    outcome_streams: h.outcome_streams.clone(),
                })
                .collect(),
            actions: self.space.actions().to_vec(),
            environment: EnvironmentFile {
                regimes: env
                    .regimes()
                    .iter()
                    .map(|(id, dist)| {
                        (
                            id.clone(),
                            symbols.iter().cloned().zip(dist.iter().copied()).collect(),
                        )
                    })
                    .collect(),
                active_regime: env.active_regime().to_string(),
                bundle_size: env.bundle_size(),
                catalog: symbols
                    .iter()
                    .cloned()
                    .zip(env.catalog().iter().copied())
                    .collect(),
                interventions: env.interventions().clone(),
            },
            agents: self
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| AgentFile {
                    id: a.id.clone(),
                    exposure: a.exposure,
                    stream: (a.stream != i as u64 + 1).then_some(a.stream),
                    profile: a.profile,
                    model: ModelFile {
                        prior: hyps
                            .iter()
                            .map(|h| h.id.clone())
                            .zip(a.model.prior().iter().copied())
                            .collect(),
                        smoothing: a.model.smoothing(),
                        emission_counts: hyps
                            .iter()
                            .zip(a.model.counts())
                            .filter(|(_, row)| row.iter().any(|c| *c != 0.0))
                            .map(|(h, row)| {
                                let entries = symbols
                                    .iter()
                                    .zip(row)
                                    .filter(|(_, c)| **c != 0.0)
                                    .map(|(s, c)| (s.clone(), *c))
                                    .collect();
                                (h.id.clone(), entries)
                            })
                            .collect(),
                    },
                })
                .collect(),
            run: RunFile {
                steps: self.run.steps,
                seed: self.run.seed,
                delta: self.run.delta,
                probe: self.run.probe.clone(),
                observation_candidates: self.run.observation_candidates.clone(),
                intervention_horizon: self.run.intervention_horizon,
            },
        }
    }

    /// Canonical pretty-printed JSON, LF line endings, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn agent(&self, id: &str) -> Result<&Agent> {
        self.agents
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::unknown("agent", id))
    }

    pub fn agent_index(&self, id: &str) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| Error::unknown("agent", id))
    }

    /// The probe observation, materialized through the catalog.
    pub fn probe(&self, step: u64) -> Result<Observation> {
        let symbols: Vec<String> = match &self.run.probe {
            Some(p) => p.clone(),
            None => self.space.symbols().to_vec(),
        };
        let grounds = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| self.environment.ground(format!("probe.{i}"), s))
            .collect::<Result<Vec<Ground>>>()?;
        Observation::new(step, grounds)
    }

    pub fn observation_candidates(&self) -> Vec<String> {
        self.run
            .observation_candidates
            .clone()
            .unwrap_or_else(|| self.space.symbols().to_vec())
    }

    /// A fresh episode over this scenario's environment and agents.
    pub fn episode(&self, seed: u64) -> Result<Episode> {
        Episode::new(self.environment.clone(), self.agents.clone(), seed)
    }

    /// Agents after `steps` steps of learning under `seed`.
    pub fn trained_agents(&self, steps: usize, seed: u64) -> Result<Vec<Agent>> {
        let mut ep = self.episode(seed)?;
        for _ in 0..steps {
            ep.step()?;
        }
        Ok(ep.into_agents())
    }
}

fn contract_message(e: Error) -> String {
    match e {
        Error::Contract(m) => m,
        other => other.to_string(),
    }
}

fn build_environment(space: &HypothesisSpace, file: &EnvironmentFile) -> Result<Environment> {
    let symbols = space.symbols();
    let mut regimes = BTreeMap::new();
    for (id, dist) in &file.regimes {
        let path = format!("environment.regimes.{id}");
        for key in dist.keys() {
            if !symbols.contains(key) {
                return Err(Error::validation(
                    format!("{path}.{key}"),
                    format!("references undeclared symbol `{key}`"),
                ));
            }
        }
        let mut vec = Vec::with_capacity(symbols.len());
        for s in symbols {
            let p = *dist.get(s).ok_or_else(|| {
                Error::validation(format!("{path}.{s}"), "missing probability for symbol")
            })?;
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::validation(
                    format!("{path}.{s}"),
                    format!("invalid probability {p}"),
                ));
            }
            vec.push(p);
        }
        let sum: f64 = vec.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::validation(
                &path,
                format!("regime `{id}` sums to {sum}, expected 1"),
            ));
        }
        regimes.insert(id.clone(), vec);
    }
    if !regimes.contains_key(&file.active_regime) {
        return Err(Error::validation(
            "environment.active_regime",
            format!("references undeclared regime `{}`", file.active_regime),
        ));
    }
    if file.bundle_size == 0 {
        return Err(Error::validation("environment.bundle_size", "must be >= 1"));
    }
    for key in file.catalog.keys() {
        if !symbols.contains(key) {
            return Err(Error::validation(
                format!("environment.catalog.{key}"),
                format!("references undeclared symbol `{key}`"),
            ));
        }
    }
    let mut catalog = Vec::with_capacity(symbols.len());
    for s in symbols {
        let entry = *file.catalog.get(s).ok_or_else(|| {
            Error::validation(format!("environment.catalog.{s}"), "missing catalog entry")
        })?;
        if !(entry.description_cost >= 0.0) || !entry.description_cost.is_finite() {
            return Err(Error::validation(
                format!("environment.catalog.{s}.description_cost"),
                format!("must be finite and >= 0, got {}", entry.description_cost),
            ));
        }
        if !entry.compatibility.is_finite() {
            return Err(Error::validation(
                format!("environment.catalog.{s}.compatibility"),
                "must be finite",
            ));
        }
        catalog.push(entry);
    }
    for (id, regime) in &file.interventions {
        if !regimes.contains_key(regime) {
            return Err(Error::validation(
                format!("environment.interventions.{id}"),
                format!("references undeclared regime `{regime}`"),
            ));
        }
    }
    Environment::new(
        symbols.to_vec(),
        regimes,
        file.active_regime.clone(),
        file.bundle_size,
        catalog,
        file.interventions.clone(),
    )
    .map_err(|e| Error::validation("environment", contract_message(e)))
}

fn build_model(space: &Arc<HypothesisSpace>, file: &ModelFile, path: &str) -> Result<WorldModel> {
    let ids: Vec<&str> = space.hypotheses().iter().map(|h| h.id.as_str()).collect();
    for key in file.prior.keys() {
        if !ids.contains(&key.as_str()) {
            return Err(Error::validation(
                format!("{path}.prior.{key}"),
                format!("references undeclared hypothesis `{key}`"),
            ));
        }
    }
    let mut prior = Vec::with_capacity(ids.len());
    for id in &ids {
        let p = *file.prior.get(*id).ok_or_else(|| {
            Error::validation(format!("{path}.prior.{id}"), "missing prior probability")
        })?;
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::validation(
                format!("{path}.prior.{id}"),
                format!("invalid probability {p}"),
            ));
        }
        prior.push(p);
    }
    let sum: f64 = prior.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::validation(
            format!("{path}.prior"),
            format!("prior sums to {sum}, expected 1"),
        ));
    }
    let mut counts = vec![vec![0.0; space.num_symbols()]; ids.len()];
    for (h, row) in &file.emission_counts {
        let hi = space.hypothesis_index(h).map_err(|_| {
            Error::validation(
                format!("{path}.emission_counts.{h}"),
                format!("references undeclared hypothesis `{h}`"),
            )
        })?;
        for (s, c) in row {
            let si = space.symbol_index(s).map_err(|_| {
                Error::validation(
                    format!("{path}.emission_counts.{h}.{s}"),
                    format!("references undeclared symbol `{s}`"),
                )
            })?;
            if !(*c >= 0.0) || !c.is_finite() {
                return Err(Error::validation(
                    format!("{path}.emission_counts.{h}.{s}"),
                    format!("invalid count {c}"),
                ));
            }
            counts[hi][si] = *c;
        }
    }
    if !(file.smoothing > 0.0) || !file.smoothing.is_finite() {
        return Err(Error::validation(
            format!("{path}.smoothing"),
            format!("must be > 0, got {}", file.smoothing),
        ));
    }
    WorldModel::new(space.clone(), prior, counts, file.smoothing)
        .map_err(|e| Error::validation(path, contract_message(e)))
}
