//! The inference pipeline `y = Infer(W, o; theta)` and the divergence report
//! between two conclusions drawn from the same observation.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    total_variation, weighted_posterior, HypothesisSpace, LatentState, Observation, WorldModel,
};
use crate::profile::{
    discounted_value, hypothesis_entropy, reference_weights, temper, InferenceProfile,
};

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    /// Tempered posterior.
    pub posterior: LatentState,
    pub conclusion: String,
    /// Discounted expected utility of each action under the tempered posterior.
    pub action_values: BTreeMap<String, f64>,
    /// Entropy (nats) of the tempered posterior.
    pub entropy: f64,
    /// Reference weights over the observation's grounds.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub conclusions_differ: bool,
    pub posterior_tv: f64,
    pub value_gap: f64,
}

/// Runs the fixed pipeline: reference weights, weighted posterior,
/// tempering, discounted action values, argmax.
pub fn infer(
    model: &WorldModel,
    obs: &Observation,
    profile: &InferenceProfile,
) -> Result<InferenceOutcome> {
    profile.validate()?;
    let weights = reference_weights(obs.grounds(), profile)?;
    let raw = weighted_posterior(model, obs, &weights)?;
    let tempered = temper(&raw.posterior, profile.temperature)?;

    let (action_values, conclusion) = decide(model.space(), &tempered, profile.gamma)?;
    let entropy = hypothesis_entropy(&tempered);

    Ok(InferenceOutcome {
        posterior: LatentState {
            posterior: tempered,
            step: obs.step(),
        },
        conclusion,
        action_values,
        entropy,
        weights,
    })
}

/// Discounted expected utility of every action under `posterior`, and the
/// chosen action.
pub fn decide(
    space: &HypothesisSpace,
    posterior: &[f64],
    gamma: f64,
) -> Result<(BTreeMap<String, f64>, String)> {
    if posterior.len() != space.num_hypotheses() {
        return Err(Error::contract(
            "posterior does not match the hypothesis space",
        ));
    }
    let mut action_values = BTreeMap::new();
    for action in space.actions() {
        let mut value = 0.0;
        for (h, p) in space.hypotheses().iter().zip(posterior) {
            value += p * discounted_value(&h.outcome_streams[action], gamma)?;
        }
        action_values.insert(action.clone(), value);
    }
    let conclusion = argmax_action(&action_values);
    Ok((action_values, conclusion))
}

/// Largest value; ties go to the lexicographically smallest id.
fn argmax_action(values: &BTreeMap<String, f64>) -> String {
    let mut best: Option<(&String, f64)> = None;
    // BTreeMap iterates in id order, so a strict comparison keeps the
    // smallest id among ties.
    for (id, &v) in values {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((id, v)),
        }
    }
    best.map(|(id, _)| id.clone()).unwrap_or_default()
}

pub fn compare(a: &InferenceOutcome, b: &InferenceOutcome) -> Result<DivergenceReport> {
    if a.posterior.posterior.len() != b.posterior.posterior.len() {
        return Err(Error::contract("outcomes cover different hypothesis sets"));
    }
    if !a.action_values.keys().eq(b.action_values.keys()) {
        return Err(Error::contract("outcomes cover different action sets"));
    }
    let value_gap = a
        .action_values
        .values()
        .zip(b.action_values.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(DivergenceReport {
        conclusions_differ: a.conclusion != b.conclusion,
        posterior_tv: total_variation(&a.posterior.posterior, &b.posterior.posterior),
        value_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ground, Hypothesis};
    use std::sync::Arc;

    fn two_by_two() -> (WorldModel, Observation) {
        let hyp = |id: &str, a: Vec<f64>, b: Vec<f64>| Hypothesis {
            id: id.into(),
            label: id.into(),
            outcome_streams: [("a".to_string(), a), ("b".to_string(), b)]
                .into_iter()
                .collect(),
        };
        let space = Arc::new(
            HypothesisSpace::new(
                vec!["x".into(), "y".into()],
                vec!["a".into(), "b".into()],
                vec![
                    hyp("h0", vec![1.0, 0.0], vec![0.0, 2.0]),
                    hyp("h1", vec![0.0, 1.0], vec![1.0, 0.0]),
                ],
            )
            .unwrap(),
        );
        let model = WorldModel::new(
            space,
            vec![0.5, 0.5],
            vec![vec![3.0, 1.0], vec![1.0, 3.0]],
            1.0,
        )
        .unwrap();
        let obs = Observation::new(
            1,
            vec![
                Ground::new("g0", "x", 0.0, 0.0).unwrap(),
                Ground::new("g1", "y", 1.0, 0.0).unwrap(),
            ],
        )
        .unwrap();
        (model, obs)
    }

    #[test]
    fn end_to_end_matches_hand_oracle() {
        let (model, obs) = two_by_two();
        let profile = InferenceProfile::new(1.0, 2.0, 0.5, 0.0, 0.5).unwrap();
        let out = infer(&model, &obs, &profile).unwrap();

        // (1) weights: logits 2*1 and 2*e^-1.
        let l0 = 2.0f64;
        let l1 = 2.0 * (-1.0f64).exp();
        let w0 = l0.exp() / (l0.exp() + l1.exp());
        let w1 = 1.0 - w0;
        assert!((out.weights[0] - w0).abs() < 1e-12);
        // (2) posterior: p(x|h0)=4/6, p(y|h0)=2/6, p(x|h1)=2/6, p(y|h1)=4/6.
        let s0 = 0.5 * ((4.0f64 / 6.0).ln() * 2.0 * w0 + (2.0f64 / 6.0).ln() * 2.0 * w1).exp();
        let s1 = 0.5 * ((2.0f64 / 6.0).ln() * 2.0 * w0 + (4.0f64 / 6.0).ln() * 2.0 * w1).exp();
        let p0 = s0 / (s0 + s1);
        // (3) temper with T = 0.5 squares the posterior.
        let t0 = p0 * p0 / (p0 * p0 + (1.0 - p0) * (1.0 - p0));
        assert!((out.posterior.posterior[0] - t0).abs() < 1e-12);
        // (4) values with gamma = 0.5: h0 a=1, b=1; h1 a=0.5, b=1.
        let va = t0 * 1.0 + (1.0 - t0) * 0.5;
        let vb = t0 * 1.0 + (1.0 - t0) * 1.0;
        assert!((out.action_values["a"] - va).abs() < 1e-12);
        assert!((out.action_values["b"] - vb).abs() < 1e-12);
        // (5) argmax.
        assert_eq!(out.conclusion, if va > vb { "a" } else { "b" });
        assert_eq!(out.posterior.step, 1);
    }

    #[test]
    fn uninformative_evidence_falls_back_to_prior_mean() {
        let (model, obs) = two_by_two();
        let flat = WorldModel::new(
            model.space().clone(),
            vec![0.5, 0.5],
            vec![vec![1.0, 1.0]; 2],
            1.0,
        )
        .unwrap();
        let profile = InferenceProfile::new(1.0, 2.0, 0.3, 0.0, 1.0).unwrap();
        let out = infer(&flat, &obs, &profile).unwrap();
        assert!((out.posterior.posterior[0] - 0.5).abs() < 1e-12);
        // Prior means: a = (1 + 1)/2 = 1, b = (2 + 1)/2 = 1.5.
        assert_eq!(out.conclusion, "b");
        assert!((out.entropy - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_smallest_action_id() {
        let values: BTreeMap<String, f64> = [
            ("zeta".to_string(), 1.0),
            ("alpha".to_string(), 1.0),
            ("mid".to_string(), 0.5),
        ]
        .into_iter()
        .collect();
        assert_eq!(argmax_action(&values), "alpha");
    }

    #[test]
    fn compare_reflexive_and_disjoint() {
        let (model, obs) = two_by_two();
        let profile = InferenceProfile::new(1.0, 0.0, 1.0, 0.0, 0.9).unwrap();
        let out = infer(&model, &obs, &profile).unwrap();
        let r = compare(&out, &out).unwrap();
        assert_eq!(
            (r.conclusions_differ, r.posterior_tv, r.value_gap),
            (false, 0.0, 0.0)
        );

        let mut a = out.clone();
        let mut b = out.clone();
        a.posterior.posterior = vec![1.0, 0.0];
        b.posterior.posterior = vec![0.0, 1.0];
        assert_eq!(compare(&a, &b).unwrap().posterior_tv, 1.0);
        b.action_values.insert("c".into(), 0.0);
        assert!(compare(&a, &b).is_err());
    }
}
