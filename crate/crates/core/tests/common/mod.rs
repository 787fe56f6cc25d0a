//! Random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use profilesim::{Ground, Hypothesis, HypothesisSpace, InferenceProfile, Observation, WorldModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_space(rng: &mut ChaCha8Rng, max_h: usize, max_s: usize) -> Arc<HypothesisSpace> {
    let nh = rng.gen_range(1..=max_h);
    let ns = rng.gen_range(2..=max_s);
    let na = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=5);
    let symbols: Vec<String> = (0..ns).map(|s| format!("s{s:02}")).collect();
    let actions: Vec<String> = (0..na).map(|a| format!("a{a}")).collect();
    let hypotheses = (0..nh)
        .map(|h| Hypothesis {
            id: format!("h{h}"),
            label: format!("hypothesis {h}"),
            outcome_streams: actions
                .iter()
                .map(|a| {
                    (
                        a.clone(),
                        (0..horizon).map(|_| rng.gen_range(-5.0..5.0)).collect(),
                    )
                })
                .collect(),
        })
        .collect();
    Arc::new(HypothesisSpace::new(symbols, actions, hypotheses).unwrap())
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

pub fn random_model(rng: &mut ChaCha8Rng, space: &Arc<HypothesisSpace>) -> WorldModel {
    let prior = random_distribution(rng, space.num_hypotheses());
    let counts = (0..space.num_hypotheses())
        .map(|_| {
            (0..space.num_symbols())
                .map(|_| rng.gen_range(0.0..20.0))
                .collect()
        })
        .collect();
    let smoothing = rng.gen_range(0.1..2.0);
    WorldModel::new(space.clone(), prior, counts, smoothing).unwrap()
}

pub fn random_profile(rng: &mut ChaCha8Rng) -> InferenceProfile {
    let tau = if rng.gen_bool(0.1) {
        f64::INFINITY
    } else {
        rng.gen_range(0.0..0.5)
    };
    InferenceProfile::new(
        rng.gen_range(0.1..3.0),
        rng.gen_range(-2.0..6.0),
        rng.gen_range(0.1..4.0),
        tau,
        rng.gen_range(0.0..=1.0),
    )
    .unwrap()
}

pub fn random_observation(
    rng: &mut ChaCha8Rng,
    space: &HypothesisSpace,
    max_len: usize,
) -> Observation {
    let n = rng.gen_range(1..=max_len);
    let grounds = (0..n)
        .map(|i| {
            let s = &space.symbols()[rng.gen_range(0..space.num_symbols())];
            Ground::new(
                format!("g{i}"),
                s,
                rng.gen_range(0.0..4.0),
                rng.gen_range(-1.0..1.0),
            )
            .unwrap()
        })
        .collect();
    Observation::new(rng.gen_range(0..100), grounds).unwrap()
}
