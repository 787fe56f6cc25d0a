//! Hypothesis space, evidence and the smoothed categorical world model.
//!
//! A [`WorldModel`] holds a prior over hypotheses and, per hypothesis, a
//! table of nonnegative pseudo-counts over the evidence alphabet. Emission
//! probabilities are the smoothed count ratios, so every symbol keeps
//! strictly positive mass under every hypothesis. All posterior arithmetic
//! runs in log space.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Sum-to-one slack accepted for every probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub id: String,
    pub label: String,
    /// Per-action utility stream, one entry per future step.
    pub outcome_streams: BTreeMap<String, Vec<f64>>,
}

/// The declared identifiers of one scenario: evidence alphabet, actions and
/// hypotheses with their outcome streams.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSpace {
    symbols: Vec<String>,
    actions: Vec<String>,
    hypotheses: Vec<Hypothesis>,
    horizon: usize,
}

impl HypothesisSpace {
    pub fn new(
        symbols: Vec<String>,
        actions: Vec<String>,
        hypotheses: Vec<Hypothesis>,
    ) -> Result<Self> {
        check_unique(&symbols, "symbols")?;
        check_unique(&actions, "actions")?;
        if symbols.is_empty() {
            return Err(Error::validation("symbols", "alphabet is empty"));
        }
        if actions.is_empty() {
            return Err(Error::validation("actions", "no actions declared"));
        }
        if hypotheses.is_empty() {
            return Err(Error::validation("hypotheses", "no hypotheses declared"));
        }
        let ids: Vec<String> = hypotheses.iter().map(|h| h.id.clone()).collect();
        check_unique(&ids, "hypotheses")?;

        let mut horizon = None;
        for (hi, h) in hypotheses.iter().enumerate() {
            for action in h.outcome_streams.keys() {
                if !actions.contains(action) {
                    return Err(Error::validation(
                        format!("hypotheses[{hi}].outcome_streams.{action}"),
                        format!("references undeclared action `{action}`"),
                    ));
                }
            }
            for action in &actions {
                let path = format!("hypotheses[{hi}].outcome_streams.{action}");
                let stream = h
                    .outcome_streams
                    .get(action)
                    .ok_or_else(|| Error::validation(&path, "missing outcome stream"))?;
                if stream.is_empty() {
                    return Err(Error::validation(&path, "outcome stream is empty"));
                }
                if stream.iter().any(|u| !u.is_finite()) {
                    return Err(Error::validation(&path, "non-finite utility"));
                }
                match horizon {
                    None => horizon = Some(stream.len()),
                    Some(len) if len != stream.len() => {
                        return Err(Error::validation(
                            &path,
                            format!("stream length {} differs from {len}", stream.len()),
                        ))
                    }
                    Some(_) => {}
                }
            }
        }

        Ok(Self {
            symbols,
            actions,
            hypotheses,
            horizon: horizon.unwrap_or(1),
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    /// Common length of every outcome stream.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_index(&self, symbol: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| Error::unknown("symbol", symbol))
    }

    pub fn hypothesis_index(&self, id: &str) -> Result<usize> {
        self.hypotheses
            .iter()
            .position(|h| h.id == id)
            .ok_or_else(|| Error::unknown("hypothesis", id))
    }

    pub fn action_index(&self, id: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == id)
            .ok_or_else(|| Error::unknown("action", id))
    }
}

fn check_unique(ids: &[String], path: &str) -> Result<()> {
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) {
            return Err(Error::validation(
                format!("{path}[{i}]"),
                format!("duplicate id `{id}`"),
            ));
        }
    }
    Ok(())
}

/// One unit of evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Ground {
    pub id: String,
    pub symbol: String,
    /// Description length (nats) needed to make this ground auditable.
    pub description_cost: f64,
    /// Content-based logit offset added to the reference policy.
    pub compatibility: f64,
}

impl Ground {
    pub fn new(
        id: impl Into<String>,
        symbol: impl Into<String>,
        description_cost: f64,
        compatibility: f64,
    ) -> Result<Self> {
        if !(description_cost >= 0.0) || !description_cost.is_finite() {
            return Err(Error::contract(format!(
                "description cost must be finite and >= 0, got {description_cost}"
            )));
        }
        if !compatibility.is_finite() {
            return Err(Error::contract("compatibility must be finite"));
        }
        Ok(Self {
            id: id.into(),
            symbol: symbol.into(),
            description_cost,
            compatibility,
        })
    }
}

/// A timestamped, non-empty bundle of grounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    step: u64,
    grounds: Vec<Ground>,
}

impl Observation {
    pub fn new(step: u64, grounds: Vec<Ground>) -> Result<Self> {
        if grounds.is_empty() {
            return Err(Error::contract(
                "observation must contain at least one ground",
            ));
        }
        Ok(Self { step, grounds })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn grounds(&self) -> &[Ground] {
        &self.grounds
    }

    pub fn len(&self) -> usize {
        self.grounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grounds.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.grounds.iter().map(|g| g.symbol.as_str())
    }
}

/// Prior plus smoothed per-hypothesis emission counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    space: Arc<HypothesisSpace>,
    prior: Vec<f64>,
    counts: Vec<Vec<f64>>,
    smoothing: f64,
}

impl WorldModel {
    pub fn new(
        space: Arc<HypothesisSpace>,
        prior: Vec<f64>,
        counts: Vec<Vec<f64>>,
        smoothing: f64,
    ) -> Result<Self> {
        if prior.len() != space.num_hypotheses() {
            return Err(Error::contract(format!(
                "prior has {} entries for {} hypotheses",
                prior.len(),
                space.num_hypotheses()
            )));
        }
        check_distribution(&prior, "prior")?;
        if counts.len() != space.num_hypotheses()
            || counts.iter().any(|row| row.len() != space.num_symbols())
        {
            return Err(Error::contract(
                "emission count table must be |hypotheses| x |symbols|",
            ));
        }
        if counts
            .iter()
            .flatten()
            .any(|c| !(*c >= 0.0) || !c.is_finite())
        {
            return Err(Error::contract("emission counts must be finite and >= 0"));
        }
        if !(smoothing > 0.0) || !smoothing.is_finite() {
            return Err(Error::contract(format!(
                "smoothing must be finite and > 0, got {smoothing}"
            )));
        }
        Ok(Self {
            space,
            prior,
            counts,
            smoothing,
        })
    }

    /// Uniform prior, zero counts.
    pub fn uninformed(space: Arc<HypothesisSpace>, smoothing: f64) -> Result<Self> {
        let nh = space.num_hypotheses();
        let ns = space.num_symbols();
        Self::new(
            space,
            vec![1.0 / nh as f64; nh],
            vec![vec![0.0; ns]; nh],
            smoothing,
        )
    }

    pub fn space(&self) -> &Arc<HypothesisSpace> {
        &self.space
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn counts(&self) -> &[Vec<f64>] {
        &self.counts
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn emission_prob(&self, hypothesis: &str, symbol: &str) -> Result<f64> {
        let h = self.space.hypothesis_index(hypothesis)?;
        let s = self.space.symbol_index(symbol)?;
        Ok(self.emission_prob_at(h, s))
    }

    /// Index form of [`WorldModel::emission_prob`]. Panics on out-of-range
    /// indices.
    pub fn emission_prob_at(&self, h: usize, s: usize) -> f64 {
        let row = &self.counts[h];
        let total: f64 = row.iter().sum::<f64>() + self.smoothing * row.len() as f64;
        (row[s] + self.smoothing) / total
    }

    /// Smoothed emission distribution of hypothesis `h` over the alphabet.
    pub fn emission_row(&self, h: usize) -> Vec<f64> {
        let row = &self.counts[h];
        let total: f64 = row.iter().sum::<f64>() + self.smoothing * row.len() as f64;
        row.iter().map(|c| (c + self.smoothing) / total).collect()
    }

    /// Adds `mass[h]` pseudo-counts to symbol `s` of each hypothesis row.
    pub(crate) fn add_counts(&mut self, s: usize, mass: &[f64]) {
        for (row, m) in self.counts.iter_mut().zip(mass) {
            row[s] += m;
        }
    }
}

/// Posterior over hypotheses at a given step.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub posterior: Vec<f64>,
    pub step: u64,
}

impl LatentState {
    pub fn new(posterior: Vec<f64>, step: u64) -> Result<Self> {
        check_distribution(&posterior, "posterior")?;
        Ok(Self { posterior, step })
    }

    /// The model's prior as a state at `step`.
    pub fn from_prior(model: &WorldModel, step: u64) -> Self {
        Self {
            posterior: model.prior.clone(),
            step,
        }
    }
}

/// Posterior under weight-scaled log-likelihood:
/// `log post(h) = log prior(h) + N * sum_i w_i log p(s_i | h) + const`.
///
/// With `w_i = 1/N` this is ordinary Bayes over the bundle; concentrating the
/// weight on one ground makes that ground count `N` times.
pub fn weighted_posterior(
    model: &WorldModel,
    obs: &Observation,
    weights: &[f64],
) -> Result<LatentState> {
    if weights.len() != obs.len() {
        return Err(Error::contract(format!(
            "{} weights for {} grounds",
            weights.len(),
            obs.len()
        )));
    }
    check_distribution(weights, "weights")?;
    let symbols = obs
        .symbols()
        .map(|s| model.space.symbol_index(s))
        .collect::<Result<Vec<_>>>()?;

    let n = obs.len() as f64;
    let log_post: Vec<f64> = (0..model.space.num_hypotheses())
        .map(|h| {
            let loglik: f64 = symbols
                .iter()
                .zip(weights)
                .map(|(&s, &w)| w * model.emission_prob_at(h, s).ln())
                .sum();
            model.prior[h].ln() + n * loglik
        })
        .collect();

    Ok(LatentState {
        posterior: normalize_log(&log_post),
        step: obs.step(),
    })
}

/// Posterior-mixture probability of observing `symbol` next.
pub fn predictive_distribution(
    model: &WorldModel,
    state: &LatentState,
    symbol: &str,
) -> Result<f64> {
    let s = model.space.symbol_index(symbol)?;
    if state.posterior.len() != model.space.num_hypotheses() {
        return Err(Error::contract(
            "state does not match the model's hypotheses",
        ));
    }
    Ok(predictive_at(model, &state.posterior, s))
}

pub(crate) fn predictive_at(model: &WorldModel, posterior: &[f64], s: usize) -> f64 {
    posterior
        .iter()
        .enumerate()
        .map(|(h, p)| p * model.emission_prob_at(h, s))
        .sum()
}

/// Full predictive distribution over the alphabet.
pub fn predictive_vector(model: &WorldModel, posterior: &[f64]) -> Vec<f64> {
    (0..model.space.num_symbols())
        .map(|s| predictive_at(model, posterior, s))
        .collect()
}

/// Exponentiates and normalizes log-weights with max-subtraction. Entries of
/// `-inf` map to exactly zero.
pub fn normalize_log(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::contract(format!("{what} is empty")));
    }
    if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::contract(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::contract(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Total-variation distance `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn space(num_h: usize, num_s: usize) -> Arc<HypothesisSpace> {
        let symbols = (0..num_s).map(|s| format!("s{s}")).collect();
        let hypotheses = (0..num_h)
            .map(|h| Hypothesis {
                id: format!("h{h}"),
                label: format!("hypothesis {h}"),
                outcome_streams: [("a".to_string(), vec![h as f64])].into_iter().collect(),
            })
            .collect();
        Arc::new(HypothesisSpace::new(symbols, vec!["a".into()], hypotheses).unwrap())
    }

    pub fn ground(symbol: &str) -> Ground {
        Ground::new(symbol, symbol, 0.0, 0.0).unwrap()
    }

    pub fn obs(symbols: &[&str]) -> Observation {
        Observation::new(0, symbols.iter().map(|s| ground(s)).collect()).unwrap()
    }
}
