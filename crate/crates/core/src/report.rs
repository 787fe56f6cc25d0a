//! End-to-end simulation driver and its serialized outputs: a JSON-lines
//! trace (one record per step), a CSV summary (one row per step and agent
//! pair) and a pretty-printed run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::engine::{compare, DivergenceReport, InferenceOutcome};
use crate::error::{Error, Result};
use crate::identifiability::{
    annotate_observation_conclusions, attribute_divergence, design_intervention,
    design_observation, Attribution, DiscriminationResult,
};
use crate::learning::{model_distance, Agent, StepRecord};
use crate::profile::{
    externalizability_score, project_to_bases, BasisCoordinates, GateDecision, InferenceProfile,
    TraceStats,
};
use crate::scenario::Scenario;

pub const SUMMARY_HEADER: &str =
    "step,pair,conclusions_differ,posterior_tv,value_gap,model_distance";

/// Significant digits kept when numbers are written out.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal that reads back as `round_sig(x)`.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        return "0".into();
    }
    format!("{r}")
}

/// Applies [`round_sig`] to every non-integer number in a JSON tree.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(round_sig)
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded numbers and a trailing LF.
pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}

fn to_line_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("record serializes");
    round_json(&mut v);
    serde_json::to_string(&v).expect("record serializes")
}

/// `sum_i w_i x_i` for the grounds an outcome was computed on.
pub fn weighted_externalizability(
    outcome: &InferenceOutcome,
    exposed: &crate::model::Observation,
    profile: &InferenceProfile,
) -> Result<f64> {
    let mut total = 0.0;
    for (g, w) in exposed.grounds().iter().zip(&outcome.weights) {
        total += w * externalizability_score(g.description_cost, profile.alpha)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergencePoint {
    pub step: u64,
    pub conclusions_differ: bool,
    pub posterior_tv: f64,
    pub value_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub pair: String,
    pub agents: [String; 2],
    pub divergence: Vec<DivergencePoint>,
    pub model_distance: Vec<f64>,
    pub final_divergence: DivergenceReport,
    pub initial_attribution: Attribution,
    pub final_attribution: Attribution,
    pub observation_design: DiscriminationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervention_design: Option<DiscriminationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    pub id: String,
    pub profile: InferenceProfile,
    pub stats: TraceStats,
    pub bases: BasisCoordinates,
    pub final_conclusion: String,
    /// Final pseudo-count table, hypothesis id to symbol id to count.
    pub final_counts: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub steps: usize,
    pub agents: Vec<AgentReport>,
    pub pairs: Vec<PairReport>,
}

#[derive(Serialize)]
struct TraceAgent<'a> {
    id: &'a str,
    exposed: Vec<&'a str>,
    weights: &'a [f64],
    weighted_externalizability: f64,
    posterior: &'a [f64],
    entropy: f64,
    action_values: &'a BTreeMap<String, f64>,
    conclusion: &'a str,
    delta_eta: f64,
    decision: GateDecision,
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    step: u64,
    bundle: Vec<&'a str>,
    agents: Vec<TraceAgent<'a>>,
}

/// Everything one `simulate` run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace_jsonl: String,
    pub summary_csv: String,
}

pub fn pair_label(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

/// All unordered agent pairs `(i, j)` with `i < j`.
pub fn agent_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

#[derive(Default, Clone)]
struct Accumulator {
    externalizability: f64,
    entropy: f64,
}

/// Runs `steps` steps of `scenario` under `seed` and assembles the outputs.
pub fn simulate(scenario: &Scenario, steps: usize, seed: u64) -> Result<RunOutput> {
    if steps == 0 {
        return Err(Error::contract("simulate needs at least one step"));
    }
    let n = scenario.agents.len();
    let pairs = agent_pairs(n);
    let ln_h = (scenario.space.num_hypotheses() as f64).ln();

    let mut episode = scenario.episode(seed)?;
    let mut trace = String::new();
    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    let mut acc = vec![Accumulator::default(); n];
    let mut divergence: Vec<Vec<DivergencePoint>> = vec![Vec::with_capacity(steps); pairs.len()];
    let mut distances: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); pairs.len()];
    let mut last: Option<StepRecord> = None;

    for _ in 0..steps {
        let record = episode.step()?;
        let agents = episode.agents();

        let mut x_bar = Vec::with_capacity(n);
        for ((agent, rec), a) in agents.iter().zip(&record.agents).zip(acc.iter_mut()) {
            let x = weighted_externalizability(&rec.outcome, &rec.exposed, &agent.profile)?;
            a.externalizability += x;
            a.entropy += rec.outcome.entropy;
            x_bar.push(x);
        }

        let line = TraceRecord {
            step: record.step,
            bundle: record.bundle.symbols().collect(),
            agents: agents
                .iter()
                .zip(&record.agents)
                .zip(&x_bar)
                .map(|((agent, rec), x)| TraceAgent {
                    id: &agent.id,
                    exposed: rec.exposed.symbols().collect(),
                    weights: &rec.outcome.weights,
                    weighted_externalizability: *x,
                    posterior: &rec.outcome.posterior.posterior,
                    entropy: rec.outcome.entropy,
                    action_values: &rec.outcome.action_values,
                    conclusion: &rec.outcome.conclusion,
                    delta_eta: rec.delta_eta,
                    decision: rec.decision,
                })
                .collect(),
        };
        trace.push_str(&to_line_json(&line));
        trace.push('\n');

        for (pi, &(i, j)) in pairs.iter().enumerate() {
            let d = compare(&record.agents[i].outcome, &record.agents[j].outcome)?;
            let md = model_distance(&agents[i].model, &agents[j].model)?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                record.step,
                pair_label(&agents[i].id, &agents[j].id),
                d.conclusions_differ,
                fmt_num(d.posterior_tv),
                fmt_num(d.value_gap),
                fmt_num(md)
            );
            divergence[pi].push(DivergencePoint {
                step: record.step,
                conclusions_differ: d.conclusions_differ,
                posterior_tv: d.posterior_tv,
                value_gap: d.value_gap,
            });
            distances[pi].push(md);
        }
        last = Some(record);
    }

    let last = last.expect("at least one step ran");
    let final_agents = episode.into_agents();
    let t = steps as f64;

    let agent_reports = final_agents
        .iter()
        .zip(&acc)
        .zip(&last.agents)
        .map(|((agent, a), rec)| {
            let normalized_entropy = if ln_h > 0.0 {
                (a.entropy / t / ln_h).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let stats = TraceStats {
                mean_externalizability: (a.externalizability / t).clamp(0.0, 1.0),
                normalized_entropy,
                hold_rate: agent.hold_rate(),
            };
            Ok(AgentReport {
                id: agent.id.clone(),
                profile: agent.profile,
                stats,
                bases: project_to_bases(&agent.profile, &stats)?,
                final_conclusion: rec.outcome.conclusion.clone(),
                final_counts: count_table(agent),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let probe0 = scenario.probe(0)?;
    let probe_t = scenario.probe(steps as u64)?;
    let mut pair_reports = Vec::with_capacity(pairs.len());
    for (pi, &(i, j)) in pairs.iter().enumerate() {
        let (a, b) = (&final_agents[i], &final_agents[j]);
        let initial_attribution =
            attribute_divergence(&scenario.agents[i], &scenario.agents[j], &probe0)?;
        let final_attribution = attribute_divergence(a, b, &probe_t)?;
        let mut observation_design = design_observation(
            &a.model,
            &a.state,
            &b.model,
            &b.state,
            &scenario.observation_candidates(),
            scenario.run.delta,
        )?;
        annotate_observation_conclusions(
            &mut observation_design,
            &scenario.environment,
            (a, b),
            steps as u64,
        )?;
        let interventions: Vec<String> = scenario
            .environment
            .interventions()
            .keys()
            .cloned()
            .collect();
        let intervention_design = if interventions.is_empty() {
            None
        } else {
            Some(design_intervention(
                &scenario.environment,
                (a, b),
                &interventions,
                scenario.run.intervention_horizon,
                scenario.run.delta,
            )?)
        };
        pair_reports.push(PairReport {
            pair: pair_label(&a.id, &b.id),
            agents: [a.id.clone(), b.id.clone()],
            final_divergence: compare(&last.agents[i].outcome, &last.agents[j].outcome)?,
            divergence: std::mem::take(&mut divergence[pi]),
            model_distance: std::mem::take(&mut distances[pi]),
            initial_attribution,
            final_attribution,
            observation_design,
            intervention_design,
        });
    }

    Ok(RunOutput {
        report: RunReport {
            scenario: scenario.name.clone(),
            scenario_hash: scenario.content_hash(),
            seed,
            steps,
            agents: agent_reports,
            pairs: pair_reports,
        },
        trace_jsonl: trace,
        summary_csv: csv,
    })
}

fn count_table(agent: &Agent) -> BTreeMap<String, BTreeMap<String, f64>> {
    let space = agent.model.space();
    space
        .hypotheses()
        .iter()
        .zip(agent.model.counts())
        .map(|(h, row)| {
            (
                h.id.clone(),
                space
                    .symbols()
                    .iter()
                    .cloned()
                    .zip(row.iter().copied())
                    .collect(),
            )
        })
        .collect()
}
