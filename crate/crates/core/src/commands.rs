//! The work behind each CLI subcommand, kept free of argument parsing so it
//! can be driven directly from tests.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::DivergenceReport;
use crate::error::{Error, Result};
use crate::identifiability::{
    align_profiles, annotate_observation_conclusions, component_subsets, design_intervention,
    design_observation, DiscriminationResult,
};
use crate::learning::Agent;
use crate::profile::{Component, InferenceProfile};
use crate::report::{simulate, to_pretty_json, RunOutput, RunReport};
use crate::scenario::Scenario;

/// Shared settings resolved from flags and scenario defaults.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub seed: u64,
    pub steps: usize,
}

impl RunArgs {
    pub fn resolve(scenario: &Scenario, seed: Option<u64>, steps: Option<usize>) -> Self {
        Self {
            seed: seed.unwrap_or(scenario.run.seed),
            steps: steps.unwrap_or(scenario.run.steps),
        }
    }
}

pub fn trace_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("trace_seed{seed}.jsonl"))
}

pub fn summary_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("summary_seed{seed}.csv"))
}

pub fn report_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("report_seed{seed}.json"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Runs one seed and writes trace, summary and report under `out`.
pub fn simulate_to_dir(
    scenario: &Scenario,
    steps: usize,
    seed: u64,
    out: &Path,
) -> Result<RunReport> {
    if steps == 0 {
        return Err(Error::validation(
            "--steps",
            "simulate needs at least one step",
        ));
    }
    let RunOutput {
        report,
        trace_jsonl,
        summary_csv,
    } = simulate(scenario, steps, seed)?;
    ensure_dir(out)?;
    write(&trace_path(out, seed), &trace_jsonl)?;
    write(&summary_path(out, seed), &summary_csv)?;
    write(&report_path(out, seed), &to_pretty_json(&report))?;
    Ok(report)
}

/// Runs every seed in `seeds` in parallel; each seed writes its own files.
pub fn simulate_batch(
    scenario: &Scenario,
    steps: usize,
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<RunReport>> {
    ensure_dir(out)?;
    seeds
        .par_iter()
        .map(|&seed| simulate_to_dir(scenario, steps, seed, out))
        .collect()
}

/// Parses `a..b` (exclusive) or `a..=b` (inclusive).
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::validation(
            "--seeds",
            format!("expected `a..b` or `a..=b`, got `{text}`"),
        )
    };
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive {
        (lo..=hi).collect()
    } else {
        (lo..hi).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Parses a comma-separated component list such as `R,E,S,D`.
pub fn parse_components(text: &str) -> Result<Vec<Component>> {
    let comps = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Component>>>()
        .map_err(|e| Error::validation("--components", e.to_string()))?;
    if comps.is_empty() {
        return Err(Error::validation("--components", "no components given"));
    }
    Ok(comps)
}

/// Resolves the agent pair to analyze: explicit ids, or the first two agents.
pub fn select_pair(scenario: &Scenario, agents: Option<&str>) -> Result<(usize, usize)> {
    match agents {
        Some(text) => {
            let ids: Vec<&str> = text.split(',').map(str::trim).collect();
            if ids.len() != 2 {
                return Err(Error::validation(
                    "--agents",
                    "expected exactly two agent ids",
                ));
            }
            let a = scenario
                .agent_index(ids[0])
                .map_err(|e| Error::validation("--agents", e.to_string()))?;
            let b = scenario
                .agent_index(ids[1])
                .map_err(|e| Error::validation("--agents", e.to_string()))?;
            Ok((a, b))
        }
        None if scenario.agents.len() >= 2 => Ok((0, 1)),
        None => Err(Error::validation(
            "agents",
            "this command needs at least two agents",
        )),
    }
}

fn trained_pair(
    scenario: &Scenario,
    args: &RunArgs,
    pair: (usize, usize),
) -> Result<(Agent, Agent)> {
    let agents = scenario.trained_agents(args.steps, args.seed)?;
    Ok((agents[pair.0].clone(), agents[pair.1].clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignRow {
    pub components: String,
    pub profile_b_aligned: InferenceProfile,
    pub conclusion_a: String,
    pub conclusion_b: String,
    pub residual: DivergenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub trained_steps: usize,
    pub agents: [String; 2],
    pub rows: Vec<AlignRow>,
}

fn component_label(components: &[Component]) -> String {
    components
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Aligns agent B's profile to agent A's on the given components (or on
/// every non-empty subset when `sweep` is set) after `args.steps` steps of
/// training, evaluated on the scenario's probe observation.
pub fn align(
    scenario: &Scenario,
    args: &RunArgs,
    pair: (usize, usize),
    components: &[Component],
    sweep: bool,
) -> Result<AlignReport> {
    let (a, b) = trained_pair(scenario, args, pair)?;
    let probe = scenario.probe(args.steps as u64)?;
    let subsets = if sweep {
        component_subsets()
    } else {
        vec![components.to_vec()]
    };
    let rows = subsets
        .iter()
        .map(|subset| {
            let r = align_profiles(&a, &b, &probe, subset)?;
            Ok(AlignRow {
                components: component_label(&r.synchronized_components),
                profile_b_aligned: r.profile_b_aligned,
                conclusion_a: r.outcome_a.conclusion,
                conclusion_b: r.outcome_b.conclusion,
                residual: r.residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignReport {
        scenario: scenario.name.clone(),
        scenario_hash: scenario.content_hash(),
        seed: args.seed,
        trained_steps: args.steps,
        agents: [a.id, b.id],
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminationMode {
    Observation,
    Intervention,
}

impl std::str::FromStr for DiscriminationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observation" => Ok(Self::Observation),
            "intervention" => Ok(Self::Intervention),
            other => Err(Error::validation(
                "--mode",
                format!("unknown mode `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminateReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub trained_steps: usize,
    pub agents: [String; 2],
    pub mode: DiscriminationMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub result: DiscriminationResult,
}

/// Designs the most discriminating observation or intervention for the
/// pair after `args.steps` steps of training.
pub fn discriminate(
    scenario: &Scenario,
    args: &RunArgs,
    pair: (usize, usize),
    mode: DiscriminationMode,
    delta: Option<f64>,
    horizon: Option<usize>,
) -> Result<DiscriminateReport> {
    let delta = delta.unwrap_or(scenario.run.delta);
    if !(delta >= 0.0) {
        return Err(Error::validation(
            "--delta",
            format!("must be >= 0, got {delta}"),
        ));
    }
    let (a, b) = trained_pair(scenario, args, pair)?;
    let (result, horizon) = match mode {
        DiscriminationMode::Observation => {
            let mut r = design_observation(
                &a.model,
                &a.state,
                &b.model,
                &b.state,
                &scenario.observation_candidates(),
                delta,
            )?;
            annotate_observation_conclusions(
                &mut r,
                &scenario.environment,
                (&a, &b),
                args.steps as u64,
            )?;
            (r, None)
        }
        DiscriminationMode::Intervention => {
            let ids: Vec<String> = scenario
                .environment
                .interventions()
                .keys()
                .cloned()
                .collect();
            if ids.is_empty() {
                return Err(Error::validation(
                    "environment.interventions",
                    "no interventions declared",
                ));
            }
            let m = horizon.unwrap_or(scenario.run.intervention_horizon);
            if m == 0 {
                return Err(Error::validation("--horizon", "must be >= 1"));
            }
            (
                design_intervention(&scenario.environment, (&a, &b), &ids, m, delta)?,
                Some(m),
            )
        }
    };
    Ok(DiscriminateReport {
        scenario: scenario.name.clone(),
        scenario_hash: scenario.content_hash(),
        seed: args.seed,
        trained_steps: args.steps,
        agents: [a.id, b.id],
        mode,
        horizon,
        result,
    })
}

/// Writes `report` as pretty JSON to `out/name` when `out` is given and
/// returns the text either way.
pub fn emit<T: Serialize>(report: &T, out: Option<&Path>, name: &str) -> Result<String> {
    let text = to_pretty_json(report);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write(&dir.join(name), &text)?;
    }
    Ok(text)
}
