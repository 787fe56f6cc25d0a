//! The four inference-profile operators: reference weighting (R),
//! exploration by tempering (E), stabilization gating (S) and horizon
//! discounting (D), plus the projection of a profile onto the three bases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_distribution, Ground};

/// Operational settings of one inference agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceProfile {
    /// Externalizability decay per nat of description cost.
    pub alpha: f64,
    /// Reference sharpness toward externalizable grounds.
    pub beta_r: f64,
    /// Exploration temperature applied to the posterior.
    pub temperature: f64,
    /// Stabilization threshold; `+inf` freezes the model.
    #[serde(with = "serde_tau")]
    pub tau: f64,
    /// Horizon discount.
    pub gamma: f64,
}

impl InferenceProfile {
    pub fn new(alpha: f64, beta_r: f64, temperature: f64, tau: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta_r,
            temperature,
            tau,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::contract(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !self.beta_r.is_finite() {
            return Err(Error::contract("beta_r must be finite"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::contract(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::contract(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::contract(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `tau` may be infinite, which JSON numbers cannot carry; it is written as
/// the string `"inf"` in that case.
mod serde_tau {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
        if tau.is_infinite() && *tau > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*tau)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct TauVisitor;
        impl Visitor<'_> for TauVisitor {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(TauVisitor)
    }
}

/// `exp(-alpha * c)`: 1 for free-to-share grounds, falling toward 0 as the
/// description cost grows.
pub fn externalizability_score(cost: f64, alpha: f64) -> Result<f64> {
    if !(cost >= 0.0) {
        return Err(Error::contract(format!(
            "description cost must be >= 0, got {cost}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::contract(format!("alpha must be > 0, got {alpha}")));
    }
    Ok((-alpha * cost).exp())
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    crate::model::normalize_log(logits)
}

/// Reference weights `w_i ∝ exp(beta_r * x_i + u_i)`.
pub fn reference_weights(grounds: &[Ground], profile: &InferenceProfile) -> Result<Vec<f64>> {
    if grounds.is_empty() {
        return Err(Error::contract(
            "reference weights need at least one ground",
        ));
    }
    let logits = grounds
        .iter()
        .map(|g| {
            externalizability_score(g.description_cost, profile.alpha)
                .map(|x| profile.beta_r * x + g.compatibility)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&logits))
}

/// Tempered distribution `p_h^(1/T)`, renormalized. Computed relative to the
/// largest entry, so tiny temperatures approach the argmax indicator and
/// exact ties keep equal shares.
pub fn temper(dist: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::contract(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if dist.iter().any(|p| !(*p >= 0.0)) || !dist.iter().any(|p| *p > 0.0) {
        return Err(Error::contract(
            "temper needs a nonnegative vector with positive mass",
        ));
    }
    if temperature == 1.0 {
        let total: f64 = dist.iter().sum();
        return Ok(dist.iter().map(|p| p / total).collect());
    }
    let logs: Vec<f64> = dist.iter().map(|p| p.ln() / temperature).collect();
    Ok(crate::model::normalize_log(&logs))
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn hypothesis_entropy(dist: &[f64]) -> f64 {
    -dist
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Update,
    Hold,
}

/// Update only when the proposed change strictly exceeds `tau`.
pub fn stabilization_gate(delta_eta: f64, tau: f64) -> Result<GateDecision> {
    if !(delta_eta >= 0.0) {
        return Err(Error::contract(format!(
            "delta_eta must be >= 0, got {delta_eta}"
        )));
    }
    Ok(if delta_eta > tau {
        GateDecision::Update
    } else {
        GateDecision::Hold
    })
}

/// `sum_t gamma^t * stream[t]`, with `gamma^0 = 1` even for `gamma = 0`.
pub fn discounted_value(stream: &[f64], gamma: f64) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::contract("utility stream is empty"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::contract(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for u in stream {
        total += weight * u;
        weight *= gamma;
    }
    Ok(total)
}

/// The four components of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    R,
    E,
    S,
    D,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::R, Component::E, Component::S, Component::D];

    /// Copies this component's parameters from `source` into `target`.
    pub fn copy_into(self, source: &InferenceProfile, target: &mut InferenceProfile) {
        match self {
            Component::R => {
                target.alpha = source.alpha;
                target.beta_r = source.beta_r;
            }
            Component::E => target.temperature = source.temperature,
            Component::S => target.tau = source.tau,
            Component::D => target.gamma = source.gamma,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Component::R => "R",
            Component::E => "E",
            Component::S => "S",
            Component::D => "D",
        };
        f.write_str(c)
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "R" | "r" => Ok(Component::R),
            "E" | "e" => Ok(Component::E),
            "S" | "s" => Ok(Component::S),
            "D" | "d" => Ok(Component::D),
            other => Err(Error::unknown("profile component", other)),
        }
    }
}

/// Run statistics consumed by [`project_to_bases`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    /// Per-step `sum_i w_i x_i`, averaged over steps.
    pub mean_externalizability: f64,
    /// Mean hypothesis entropy divided by `ln |H|`.
    pub normalized_entropy: f64,
    /// Fraction of steps whose update was held.
    pub hold_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisCoordinates {
    pub externalization: f64,
    pub order: f64,
    pub abstraction: f64,
}

/// Externalization is the mean weighted externalizability, order averages
/// the hold rate with the entropy deficit, abstraction is `gamma`.
pub fn project_to_bases(
    profile: &InferenceProfile,
    stats: &TraceStats,
) -> Result<BasisCoordinates> {
    let unit = 0.0..=1.0;
    for (name, v) in [
        ("mean_externalizability", stats.mean_externalizability),
        ("normalized_entropy", stats.normalized_entropy),
        ("hold_rate", stats.hold_rate),
    ] {
        if !unit.contains(&v) {
            return Err(Error::contract(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    if !unit.contains(&profile.gamma) {
        return Err(Error::contract("gamma must lie in [0, 1]"));
    }
    Ok(BasisCoordinates {
        externalization: stats.mean_externalizability,
        order: (stats.hold_rate + (1.0 - stats.normalized_entropy)) / 2.0,
        abstraction: profile.gamma,
    })
}

/// Checks a probability vector; exposed for callers building distributions
/// by hand.
pub fn validate_distribution(dist: &[f64]) -> Result<()> {
    check_distribution(dist, "distribution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn profile(beta_r: f64) -> InferenceProfile {
        InferenceProfile::new(1.0, beta_r, 1.0, 0.0, 0.9).unwrap()
    }

    fn ground_with_x(x: f64, u: f64) -> Ground {
        // alpha = 1, so cost = -ln x.
        Ground::new("g", "s", -x.ln(), u).unwrap()
    }

    #[test]
    fn externalizability_examples() {
        assert!((externalizability_score(0.0, 1.0).unwrap() - 1.0).abs() < TOL);
        assert!((externalizability_score(1.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < TOL);
        assert!((externalizability_score(2.0, 0.5).unwrap() - 0.367879441171).abs() < TOL);
        assert!(externalizability_score(-1.0, 1.0).is_err());
        assert!(externalizability_score(1.0, 0.0).is_err());
    }

    #[test]
    fn reference_weight_examples() {
        let same = [ground_with_x(1.0, 0.0), ground_with_x(1.0, 0.0)];
        for beta in [-2.0, 0.0, 5.0] {
            let w = reference_weights(&same, &profile(beta)).unwrap();
            assert!((w[0] - 0.5).abs() < TOL && (w[1] - 0.5).abs() < TOL);
        }
        // x = (1, 0): use a huge cost for the second ground.
        let hetero = [
            Ground::new("a", "s", 0.0, 0.0).unwrap(),
            Ground::new("b", "s", f64::MAX, 0.0).unwrap(),
        ];
        let w = reference_weights(&hetero, &profile(0.0)).unwrap();
        assert!((w[0] - 0.5).abs() < TOL);
        let w = reference_weights(&hetero, &profile(3f64.ln())).unwrap();
        assert!((w[0] - 0.75).abs() < TOL && (w[1] - 0.25).abs() < TOL);
        assert!(reference_weights(&[], &profile(1.0)).is_err());
    }

    #[test]
    fn temper_examples() {
        let u = temper(&[0.25; 4], 3.7).unwrap();
        assert!(u.iter().all(|p| (p - 0.25).abs() < TOL));
        let t = temper(&[0.9, 0.1], 2.0).unwrap();
        assert!((t[0] - 0.75).abs() < TOL && (t[1] - 0.25).abs() < TOL);
        let cold = temper(&[0.8, 0.2], 1e-6).unwrap();
        assert!((cold[0] - 1.0).abs() < TOL && cold[1].abs() < TOL);
        let tie = temper(&[0.4, 0.4, 0.2], 1e-6).unwrap();
        assert!((tie[0] - 0.5).abs() < TOL && (tie[1] - 0.5).abs() < TOL);
        let same = temper(&[0.3, 0.7], 1.0).unwrap();
        assert_eq!(same, vec![0.3, 0.7]);
        assert!(temper(&[0.5, 0.5], 0.0).is_err());
        assert!(temper(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(hypothesis_entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((hypothesis_entropy(&[0.25; 4]) - 4f64.ln()).abs() < TOL);
        assert!((hypothesis_entropy(&[0.5, 0.25, 0.25]) - 1.039720770839918).abs() < TOL);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(stabilization_gate(0.3, 0.2).unwrap(), GateDecision::Update);
        assert_eq!(stabilization_gate(0.1, 0.2).unwrap(), GateDecision::Hold);
        assert_eq!(stabilization_gate(0.2, 0.2).unwrap(), GateDecision::Hold);
        assert_eq!(
            stabilization_gate(1e-300, 0.0).unwrap(),
            GateDecision::Update
        );
        assert_eq!(stabilization_gate(0.0, 0.0).unwrap(), GateDecision::Hold);
        assert_eq!(
            stabilization_gate(1e300, f64::INFINITY).unwrap(),
            GateDecision::Hold
        );
        assert!(stabilization_gate(-0.1, 0.0).is_err());
    }

    #[test]
    fn discount_examples() {
        assert!((discounted_value(&[1.0, 1.0, 1.0], 0.0).unwrap() - 1.0).abs() < TOL);
        assert!((discounted_value(&[1.0, 1.0, 1.0], 1.0).unwrap() - 3.0).abs() < TOL);
        assert!((discounted_value(&[0.0, 0.0, 10.0], 0.5).unwrap() - 2.5).abs() < TOL);
        assert!(discounted_value(&[], 0.5).is_err());
        assert!(discounted_value(&[1.0], 1.5).is_err());
    }

    #[test]
    fn projection_corners() {
        let p1 = InferenceProfile::new(1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let b = project_to_bases(
            &p1,
            &TraceStats {
                mean_externalizability: 1.0,
                normalized_entropy: 0.0,
                hold_rate: 1.0,
            },
        )
        .unwrap();
        assert_eq!((b.externalization, b.order, b.abstraction), (1.0, 1.0, 1.0));
        let p0 = InferenceProfile { gamma: 0.0, ..p1 };
        let b = project_to_bases(
            &p0,
            &TraceStats {
                mean_externalizability: 0.42,
                normalized_entropy: 1.0,
                hold_rate: 0.0,
            },
        )
        .unwrap();
        assert_eq!(
            (b.externalization, b.order, b.abstraction),
            (0.42, 0.0, 0.0)
        );
        assert!(project_to_bases(
            &p0,
            &TraceStats {
                mean_externalizability: 1.2,
                normalized_entropy: 0.0,
                hold_rate: 0.0
            },
        )
        .is_err());
    }

    #[test]
    fn profile_bounds() {
        assert!(InferenceProfile::new(0.0, 1.0, 1.0, 0.0, 0.5).is_err());
        assert!(InferenceProfile::new(1.0, 1.0, 0.0, 0.0, 0.5).is_err());
        assert!(InferenceProfile::new(1.0, 1.0, 1.0, -0.1, 0.5).is_err());
        assert!(InferenceProfile::new(1.0, 1.0, 1.0, 0.0, 1.01).is_err());
        assert!(InferenceProfile::new(1.0, 1.0, 1.0, f64::INFINITY, 0.5).is_ok());
    }

    #[test]
    fn infinite_tau_round_trips_through_json() {
        let p = InferenceProfile::new(1.0, 2.0, 1.0, f64::INFINITY, 0.5).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"tau\":\"inf\""), "{json}");
        let back: InferenceProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let finite: InferenceProfile =
            serde_json::from_str(r#"{"alpha":1,"beta_r":0,"temperature":1,"tau":0,"gamma":1}"#)
                .unwrap();
        assert_eq!(finite.tau, 0.0);
    }

    #[test]
    fn component_parsing() {
        assert_eq!("D".parse::<Component>().unwrap(), Component::D);
        assert!("Q".parse::<Component>().is_err());
    }

    proptest! {
        #[test]
        fn max_x_weight_increases_with_beta(xs in proptest::collection::vec(0.01f64..1.0, 2..6), b in 0.0f64..20.0, db in 0.01f64..5.0) {
            let grounds: Vec<Ground> = xs.iter().map(|&x| ground_with_x(x, 0.0)).collect();
            let imax = xs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let distinct = xs.iter().all(|&x| x == xs[imax] || (xs[imax] - x) > 1e-3);
            let unique = xs.iter().filter(|&&x| x == xs[imax]).count() == 1;
            prop_assume!(distinct && unique);
            let lo = reference_weights(&grounds, &profile(b)).unwrap()[imax];
            let hi = reference_weights(&grounds, &profile(b + db)).unwrap()[imax];
            prop_assert!(hi > lo);
        }

        #[test]
        fn gate_update_set_is_half_open(delta in 1e-6f64..10.0, tau in 0.0f64..20.0) {
            let d = stabilization_gate(delta, tau).unwrap();
            prop_assert_eq!(d == GateDecision::Update, tau < delta);
        }

        #[test]
        fn discount_linear_and_monotone(
            a in proptest::collection::vec(0.0f64..10.0, 1..8),
            g1 in 0.0f64..1.0,
            g2 in 0.0f64..1.0,
            k in -3.0f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().rev().cloned().collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| k * x + y).collect();
            let lhs = discounted_value(&sum, g1).unwrap();
            let rhs = k * discounted_value(&a, g1).unwrap() + discounted_value(&b, g1).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(discounted_value(&a, lo).unwrap() <= discounted_value(&a, hi).unwrap() + 1e-12);
        }
    }
}
