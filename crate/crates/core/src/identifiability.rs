//! Procedures that turn a disagreement into something testable: profile
//! alignment, discriminative observation and intervention design, and a
//! counterfactual attribution of which level a disagreement lives on.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::engine::{compare, decide, infer, DivergenceReport, InferenceOutcome};
use crate::error::{Error, Result};
use crate::learning::{Agent, Environment};
use crate::model::{
    normalize_log, predictive_at, predictive_vector, total_variation, LatentState, Observation,
    WorldModel,
};
use crate::profile::{temper, Component, InferenceProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub synchronized_components: Vec<Component>,
    pub profile_b_aligned: InferenceProfile,
    pub outcome_a: InferenceOutcome,
    pub outcome_b: InferenceOutcome,
    pub residual: DivergenceReport,
}

/// Copies the named components of `a`'s profile into a copy of `b`'s,
/// re-infers both on `obs` and reports what divergence is left.
pub fn align_profiles(
    agent_a: &Agent,
    agent_b: &Agent,
    obs: &Observation,
    components: &[Component],
) -> Result<AlignmentResult> {
    if components.is_empty() {
        return Err(Error::contract("alignment needs at least one component"));
    }
    let synced: Vec<Component> = components
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut aligned = agent_b.profile;
    for c in &synced {
        c.copy_into(&agent_a.profile, &mut aligned);
    }
    let outcome_a = infer(&agent_a.model, obs, &agent_a.profile)?;
    let outcome_b = infer(&agent_b.model, obs, &aligned)?;
    let residual = compare(&outcome_a, &outcome_b)?;
    Ok(AlignmentResult {
        synchronized_components: synced,
        profile_b_aligned: aligned,
        outcome_a,
        outcome_b,
        residual,
    })
}

/// All 15 non-empty component subsets, in bitmask order (R = bit 0).
pub fn component_subsets() -> Vec<Vec<Component>> {
    (1u8..16)
        .map(|mask| {
            Component::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| *c)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub id: String,
    pub score: f64,
    /// Whether the two agents would reach different conclusions on this
    /// candidate, when the caller has the profiles to tell.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conclusions_differ: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminationResult {
    pub best_candidate: String,
    pub score: f64,
    pub delta: f64,
    pub passes: bool,
    /// Every candidate, highest score first, ties by id.
    pub ranking: Vec<RankedCandidate>,
}

fn rank(scored: Vec<(String, f64)>, delta: f64) -> Result<DiscriminationResult> {
    if !(delta >= 0.0) {
        return Err(Error::contract(format!("delta must be >= 0, got {delta}")));
    }
    let mut ranking: Vec<RankedCandidate> = scored
        .into_iter()
        .map(|(id, score)| RankedCandidate {
            id,
            score,
            conclusions_differ: None,
        })
        .collect();
    ranking.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.id.cmp(&b.id),
        other => other,
    });
    let head = ranking
        .first()
        .ok_or_else(|| Error::contract("no candidates to rank"))?;
    Ok(DiscriminationResult {
        best_candidate: head.id.clone(),
        score: head.score,
        delta,
        passes: head.score > delta,
        ranking,
    })
}

/// Scores each candidate symbol by the gap between the two models'
/// predictive probabilities for it. For a binary event the gap on the event
/// and on its complement coincide, so the absolute difference is the score.
pub fn design_observation(
    model_a: &WorldModel,
    state_a: &LatentState,
    model_b: &WorldModel,
    state_b: &LatentState,
    candidates: &[String],
    delta: f64,
) -> Result<DiscriminationResult> {
    if candidates.is_empty() {
        return Err(Error::contract("no observation candidates"));
    }
    if model_a.space().symbols() != model_b.space().symbols() {
        return Err(Error::contract("models use different alphabets"));
    }
    for (m, st) in [(model_a, state_a), (model_b, state_b)] {
        if st.posterior.len() != m.space().num_hypotheses() {
            return Err(Error::contract("state does not match its model"));
        }
    }
    let scored = candidates
        .iter()
        .map(|c| {
            let s = model_a.space().symbol_index(c)?;
            let pa = predictive_at(model_a, &state_a.posterior, s);
            let pb = predictive_at(model_b, &state_b.posterior, s);
            Ok((c.clone(), (pa - pb).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    rank(scored, delta)
}

/// The agent's posterior after assimilating the expected evidence of
/// `grounds` draws from `regime`, i.e.
/// `log post'(h) = log post(h) + grounds * sum_s q(s) log p(s|h)`.
pub fn forecast_posterior(
    model: &WorldModel,
    posterior: &[f64],
    regime: &[f64],
    grounds: f64,
) -> Vec<f64> {
    let logs: Vec<f64> = posterior
        .iter()
        .enumerate()
        .map(|(h, p)| {
            let row = model.emission_row(h);
            let expected: f64 = regime.iter().zip(&row).map(|(q, e)| q * e.ln()).sum();
            p.ln() + grounds * expected
        })
        .collect();
    normalize_log(&logs)
}

/// What `agent` expects to observe after `horizon` steps under `regime`.
pub fn intervention_forecast(
    agent: &Agent,
    regime: &[f64],
    horizon: usize,
    bundle_size: usize,
) -> Vec<f64> {
    let post = forecast_posterior(
        &agent.model,
        &agent.state.posterior,
        regime,
        (horizon * bundle_size) as f64,
    );
    predictive_vector(&agent.model, &post)
}

/// Scores each intervention by the total-variation distance between the two
/// agents' forecasts of the symbol stream once the intervention forces its
/// regime. Forecasts are analytic, so the ranking involves no sampling.
pub fn design_intervention(
    env: &Environment,
    agents: (&Agent, &Agent),
    interventions: &[String],
    horizon: usize,
    delta: f64,
) -> Result<DiscriminationResult> {
    if interventions.is_empty() {
        return Err(Error::contract("no interventions to evaluate"));
    }
    if horizon == 0 {
        return Err(Error::contract("intervention horizon must be >= 1"));
    }
    let (a, b) = agents;
    for ag in [a, b] {
        if ag.model.space().symbols() != env.symbols() {
            return Err(Error::contract(format!(
                "agent `{}` uses a different alphabet than the environment",
                ag.id
            )));
        }
    }
    let mut scored = Vec::with_capacity(interventions.len());
    let mut differ = Vec::with_capacity(interventions.len());
    for id in interventions {
        let forced = env.intervene(id)?;
        let regime = forced.active_distribution();
        let fa = intervention_forecast(a, regime, horizon, env.bundle_size());
        let fb = intervention_forecast(b, regime, horizon, env.bundle_size());
        scored.push((id.clone(), total_variation(&fa, &fb)));
        differ.push((
            id.clone(),
            forecast_conclusion(a, regime, horizon, env.bundle_size())?
                != forecast_conclusion(b, regime, horizon, env.bundle_size())?,
        ));
    }
    let mut result = rank(scored, delta)?;
    for entry in &mut result.ranking {
        entry.conclusions_differ = differ
            .iter()
            .find(|(id, _)| *id == entry.id)
            .map(|(_, d)| *d);
    }
    Ok(result)
}

/// The action `agent` would pick once it has assimilated the forecast.
fn forecast_conclusion(
    agent: &Agent,
    regime: &[f64],
    horizon: usize,
    bundle_size: usize,
) -> Result<String> {
    let post = forecast_posterior(
        &agent.model,
        &agent.state.posterior,
        regime,
        (horizon * bundle_size) as f64,
    );
    let tempered = temper(&post, agent.profile.temperature)?;
    Ok(decide(agent.model.space(), &tempered, agent.profile.gamma)?.1)
}

/// Fills in, for observation candidates, whether the two agents would
/// conclude differently after seeing that single ground.
pub fn annotate_observation_conclusions(
    result: &mut DiscriminationResult,
    env: &Environment,
    agents: (&Agent, &Agent),
    step: u64,
) -> Result<()> {
    for entry in &mut result.ranking {
        let obs = Observation::new(step, vec![env.ground(&entry.id, &entry.id)?])?;
        let ya = infer(&agents.0.model, &obs, &agents.0.profile)?.conclusion;
        let yb = infer(&agents.1.model, &obs, &agents.1.profile)?.conclusion;
        entry.conclusions_differ = Some(ya != yb);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AttributionLabel {
    ThetaLevel,
    WLevel,
    Both,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribution {
    pub label: AttributionLabel,
    /// Conclusions indexed `[model][profile]`, with 0 = agent A, 1 = agent B.
    pub cells: [[String; 2]; 2],
}

/// Evaluates all four (model, profile) pairings on `obs`. Swapping profiles
/// under a fixed model exposes profile-level divergence; swapping models
/// under a fixed profile exposes model-level divergence.
pub fn attribute_divergence(
    agent_a: &Agent,
    agent_b: &Agent,
    obs: &Observation,
) -> Result<Attribution> {
    let models = [&agent_a.model, &agent_b.model];
    let profiles = [&agent_a.profile, &agent_b.profile];
    let mut cells: [[String; 2]; 2] = Default::default();
    for (mi, m) in models.iter().enumerate() {
        for (pi, p) in profiles.iter().enumerate() {
            cells[mi][pi] = infer(m, obs, p)?.conclusion;
        }
    }
    let theta_swap = cells[0][0] != cells[0][1] || cells[1][0] != cells[1][1];
    let model_swap = cells[0][0] != cells[1][0] || cells[0][1] != cells[1][1];
    let label = match (theta_swap, model_swap) {
        (true, true) => AttributionLabel::Both,
        (true, false) => AttributionLabel::ThetaLevel,
        (false, true) => AttributionLabel::WLevel,
        (false, false) => AttributionLabel::None,
    };
    Ok(Attribution { label, cells })
}
