//! Profile-biased exposure and gated model updates over repeated steps.
//!
//! Every step the environment emits one shared bundle. Each agent then
//! subsamples it according to its own reference weights, infers on what it
//! saw, and credits soft counts to its world model when its posterior moved
//! by more than its stabilization threshold.
//!
//! Randomness comes from explicit ChaCha streams: stream 0 drives the
//! environment, and each agent draws its exposures from its own stream, so
//! the shared bundle sequence does not depend on how many agents take part.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{infer, InferenceOutcome};
use crate::error::{Error, Result};
use crate::model::{
    check_distribution, total_variation, Ground, LatentState, Observation, WorldModel,
};
use crate::profile::{
    reference_weights, stabilization_gate, temper, GateDecision, InferenceProfile,
};

pub type SimRng = ChaCha8Rng;

/// RNG for sub-stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const ENVIRONMENT_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub description_cost: f64,
    pub compatibility: f64,
}

/// Regime-switching source of evidence bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    symbols: Vec<String>,
    /// Emission distribution of each regime, in alphabet order.
    regimes: BTreeMap<String, Vec<f64>>,
    active_regime: String,
    bundle_size: usize,
    /// Materialization of each symbol as a ground, in alphabet order.
    catalog: Vec<CatalogEntry>,
    /// Intervention id to the regime it forces.
    interventions: BTreeMap<String, String>,
}

impl Environment {
    pub fn new(
        symbols: Vec<String>,
        regimes: BTreeMap<String, Vec<f64>>,
        active_regime: String,
        bundle_size: usize,
        catalog: Vec<CatalogEntry>,
        interventions: BTreeMap<String, String>,
    ) -> Result<Self> {
        for (id, dist) in &regimes {
            if dist.len() != symbols.len() {
                return Err(Error::contract(format!(
                    "regime `{id}` has {} entries for {} symbols",
                    dist.len(),
                    symbols.len()
                )));
            }
            check_distribution(dist, &format!("regime `{id}`"))?;
        }
        if !regimes.contains_key(&active_regime) {
            return Err(Error::unknown("regime", active_regime));
        }
        if bundle_size == 0 {
            return Err(Error::contract("bundle size must be >= 1"));
        }
        if catalog.len() != symbols.len() {
            return Err(Error::contract("catalog must describe every symbol"));
        }
        for entry in &catalog {
            Ground::new("", "", entry.description_cost, entry.compatibility)?;
        }
        for regime in interventions.values() {
            if !regimes.contains_key(regime) {
                return Err(Error::unknown("regime", regime.clone()));
            }
        }
        Ok(Self {
            symbols,
            regimes,
            active_regime,
            bundle_size,
            catalog,
            interventions,
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn regimes(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.regimes
    }

    pub fn active_regime(&self) -> &str {
        &self.active_regime
    }

    pub fn active_distribution(&self) -> &[f64] {
        &self.regimes[&self.active_regime]
    }

    pub fn bundle_size(&self) -> usize {
        self.bundle_size
    }

    pub fn catalog(&self) -> &[CatalogEntry] {
        &self.catalog
    }

    pub fn interventions(&self) -> &BTreeMap<String, String> {
        &self.interventions
    }

    /// The environment after `do(intervention)`: same everything, with the
    /// active regime forced.
    pub fn intervene(&self, intervention: &str) -> Result<Environment> {
        let regime = self
            .interventions
            .get(intervention)
            .ok_or_else(|| Error::unknown("intervention", intervention))?;
        Ok(Environment {
            active_regime: regime.clone(),
            ..self.clone()
        })
    }

    /// Materializes `symbol` as a ground with its catalog cost and offset.
    pub fn ground(&self, id: impl Into<String>, symbol: &str) -> Result<Ground> {
        let s = self
            .symbols
            .iter()
            .position(|x| x == symbol)
            .ok_or_else(|| Error::unknown("symbol", symbol))?;
        let entry = self.catalog[s];
        Ground::new(id, symbol, entry.description_cost, entry.compatibility)
    }
}

/// One line of an agent's update log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub delta_eta: f64,
    pub decision: GateDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub model: WorldModel,
    pub profile: InferenceProfile,
    /// Grounds seen per step (`k`).
    pub exposure: usize,
    /// RNG sub-stream used for this agent's exposures.
    pub stream: u64,
    /// Latest tempered posterior.
    pub state: LatentState,
    pub update_log: Vec<UpdateRecord>,
}

impl Agent {
    pub fn new(
        id: impl Into<String>,
        model: WorldModel,
        profile: InferenceProfile,
        exposure: usize,
        stream: u64,
    ) -> Result<Self> {
        profile.validate()?;
        if exposure == 0 {
            return Err(Error::contract("exposure must be >= 1"));
        }
        let state = LatentState {
            posterior: temper(model.prior(), profile.temperature)?,
            step: 0,
        };
        Ok(Self {
            id: id.into(),
            model,
            profile,
            exposure,
            stream,
            state,
            update_log: Vec::new(),
        })
    }

    pub fn hold_rate(&self) -> f64 {
        if self.update_log.is_empty() {
            return 0.0;
        }
        let holds = self
            .update_log
            .iter()
            .filter(|r| r.decision == GateDecision::Hold)
            .count();
        holds as f64 / self.update_log.len() as f64
    }
}

/// Draws `bundle_size` symbols i.i.d. from the active regime.
pub fn emit_bundle(env: &Environment, step: u64, rng: &mut SimRng) -> Result<Observation> {
    let dist = WeightedIndex::new(env.active_distribution())
        .map_err(|e| Error::contract(format!("active regime is not sampleable: {e}")))?;
    let grounds = (0..env.bundle_size)
        .map(|i| {
            let s = dist.sample(rng);
            env.ground(format!("t{step}.{i}"), &env.symbols[s])
        })
        .collect::<Result<Vec<_>>>()?;
    Observation::new(step, grounds)
}

/// Picks `k` grounds without replacement, each draw proportional to the
/// agent's reference weights over what is left. Selected grounds keep their
/// bundle order.
pub fn expose(
    bundle: &Observation,
    agent: &Agent,
    k: usize,
    rng: &mut SimRng,
) -> Result<Observation> {
    let n = bundle.len();
    if k == 0 || k > n {
        return Err(Error::contract(format!("exposure {k} outside 1..={n}")));
    }
    if k == n {
        return Ok(bundle.clone());
    }
    let mut weights = reference_weights(bundle.grounds(), &agent.profile)?;
    let mut taken = vec![false; n];
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                if taken[i] || *w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if u < *w {
                    break;
                }
                u -= w;
            }
            pick
        } else {
            None
        };
        // All remaining weight underflowed: fall back to a uniform draw.
        let i = match pick {
            Some(i) => i,
            None => {
                let left: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                left[rng.gen_range(0..left.len())]
            }
        };
        taken[i] = true;
        weights[i] = 0.0;
    }
    let grounds = bundle
        .grounds()
        .iter()
        .zip(&taken)
        .filter(|(_, t)| **t)
        .map(|(g, _)| g.clone())
        .collect();
    Observation::new(bundle.step(), grounds)
}

/// Gated soft-count update. The proposed change is the total-variation
/// distance between the previous and the new tempered posterior; when it
/// clears `tau`, every exposed ground credits its symbol to each hypothesis
/// in proportion to that hypothesis' posterior mass.
pub fn update_model(
    mut agent: Agent,
    exposed: &Observation,
    outcome: &InferenceOutcome,
    prev_posterior: &[f64],
) -> Result<Agent> {
    let post = &outcome.posterior.posterior;
    if post.len() != prev_posterior.len() || post.len() != agent.model.space().num_hypotheses() {
        return Err(Error::contract(
            "posterior sizes do not match the agent's model",
        ));
    }
    let delta_eta = total_variation(prev_posterior, post);
    let decision = stabilization_gate(delta_eta, agent.profile.tau)?;
    if decision == GateDecision::Update {
        let space = agent.model.space().clone();
        for symbol in exposed.symbols() {
            agent.model.add_counts(space.symbol_index(symbol)?, post);
        }
    }
    agent.update_log.push(UpdateRecord {
        step: exposed.step(),
        delta_eta,
        decision,
    });
    Ok(agent)
}

/// `sum_{h,s} |p_A(s|h) - p_B(s|h)|` over smoothed emission probabilities.
pub fn model_distance(a: &WorldModel, b: &WorldModel) -> Result<f64> {
    if a.space() != b.space() {
        return Err(Error::contract("models belong to different scenarios"));
    }
    let mut total = 0.0;
    for h in 0..a.space().num_hypotheses() {
        for (x, y) in a.emission_row(h).iter().zip(b.emission_row(h)) {
            total += (x - y).abs();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub exposed: Observation,
    pub outcome: InferenceOutcome,
    pub delta_eta: f64,
    pub decision: GateDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub bundle: Observation,
    pub agents: Vec<AgentStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub initial_agents: Vec<Agent>,
    pub final_agents: Vec<Agent>,
}

/// A running episode, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct Episode {
    env: Environment,
    agents: Vec<Agent>,
    env_rng: SimRng,
    agent_rngs: Vec<SimRng>,
    step: u64,
}

impl Episode {
    pub fn new(env: Environment, agents: Vec<Agent>, seed: u64) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::contract("an episode needs at least one agent"));
        }
        for a in &agents {
            if a.model.space().symbols() != env.symbols() {
                return Err(Error::contract(format!(
                    "agent `{}` uses a different alphabet than the environment",
                    a.id
                )));
            }
            if a.exposure > env.bundle_size() {
                return Err(Error::contract(format!(
                    "agent `{}` exposure {} exceeds bundle size {}",
                    a.id,
                    a.exposure,
                    env.bundle_size()
                )));
            }
        }
        let agent_rngs = agents.iter().map(|a| stream_rng(seed, a.stream)).collect();
        Ok(Self {
            env,
            agents,
            env_rng: stream_rng(seed, ENVIRONMENT_STREAM),
            agent_rngs,
            step: 0,
        })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    /// Index of the last completed step (0 before the first).
    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn into_agents(self) -> Vec<Agent> {
        self.agents
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        self.step += 1;
        let t = self.step;
        let bundle = emit_bundle(&self.env, t, &mut self.env_rng)?;
        let mut records = Vec::with_capacity(self.agents.len());
        for (slot, rng) in self.agents.iter_mut().zip(&mut self.agent_rngs) {
            let exposed = expose(&bundle, slot, slot.exposure, rng)?;
            let outcome = infer(&slot.model, &exposed, &slot.profile)?;
            let prev = slot.state.posterior.clone();
            let mut agent = update_model(slot.clone(), &exposed, &outcome, &prev)?;
            agent.state = outcome.posterior.clone();
            let last = *agent
                .update_log
                .last()
                .expect("update_model appends a record");
            *slot = agent;
            records.push(AgentStep {
                exposed,
                outcome,
                delta_eta: last.delta_eta,
                decision: last.decision,
            });
        }
        Ok(StepRecord {
            step: t,
            bundle,
            agents: records,
        })
    }
}

/// Runs `steps` steps and keeps the full trace.
pub fn run_episode(
    env: Environment,
    agents: Vec<Agent>,
    steps: usize,
    seed: u64,
) -> Result<SimulationTrace> {
    if steps == 0 {
        return Err(Error::contract("an episode needs at least one step"));
    }
    let initial_agents = agents.clone();
    let mut episode = Episode::new(env, agents, seed)?;
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        records.push(episode.step()?);
    }
    Ok(SimulationTrace {
        seed,
        steps: records,
        initial_agents,
        final_agents: episode.into_agents(),
    })
}
