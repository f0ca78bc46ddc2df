//! Recovery of genuine frequencies from poisoned aggregates.
//!
//! The poisoned aggregate mixes genuine and malicious frequencies as
//! `f_Z = (f_X + eta f_Y) / (1 + eta)` with `eta = m / n`. Recovery inverts
//! the mixture with an estimate of `f_Y` built from the protocol's expected
//! malicious-frequency sum, then projects the result onto the probability
//! simplex.

mod detection;
mod refine;

use serde::{Deserialize, Serialize};

use crate::domain::FrequencyVector;
use crate::error::{Error, Result};
use crate::ldp::{PerturbParams, Protocol};
use crate::scalar::Scalar;

pub use detection::detection_baseline;
pub use refine::{default_tolerance, refine, Refinement};

/// What the server knows about the attack.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knowledge {
    #[default]
    None,
    /// Attacker-selected items.
    Targets(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig<T> {
    /// Assumed ratio of malicious to genuine users.
    pub eta: T,
    #[serde(default)]
    pub knowledge: Knowledge,
    /// Use `q * d` (rather than `q * |non-targets|`) for the non-target
    /// malicious sum under partial knowledge.
    #[serde(default = "default_true")]
    pub full_domain_partial: bool,
    /// Refinement tolerance; `None` means `1e-12 * d`.
    #[serde(default)]
    pub tolerance: Option<T>,
}

fn default_true() -> bool {
    true
}

impl<T: Scalar> RecoveryConfig<T> {
    pub fn new(eta: T) -> Self {
        Self {
            eta,
            knowledge: Knowledge::None,
            full_domain_partial: true,
            tolerance: None,
        }
    }

    pub fn with_targets(mut self, targets: Vec<usize>) -> Self {
        self.knowledge = Knowledge::Targets(targets);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= T::zero() && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be >= 0, got {}", self.eta)));
        }
        if let Some(tol) = self.tolerance {
            if !(tol >= T::zero()) {
                return Err(Error::invalid(format!("tolerance must be >= 0, got {tol}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RecoveryResult<T> {
    pub recovered: FrequencyVector<T>,
    pub estimated_genuine: FrequencyVector<T>,
    pub malicious_estimate: FrequencyVector<T>,
    pub zeroed: Vec<usize>,
    pub iterations: usize,
}

/// `(1 + eta) f_Z - eta f_Y`.
pub fn genuine_estimator<T: Scalar>(
    poisoned: &FrequencyVector<T>,
    malicious: &FrequencyVector<T>,
    eta: T,
) -> Result<FrequencyVector<T>> {
    poisoned.same_domain(malicious)?;
    if !(eta >= T::zero()) {
        return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
    }
    let one = T::one();
    Ok(poisoned.map(|v, z| (one + eta) * z - eta * malicious[v]))
}

/// Expected sum over all items of the malicious frequencies of crafted
/// reports with singleton support: `(1 - q d) / (p - q)`.
///
/// For GRR, `p + (d - 1) q = 1` makes this exactly 1.
pub fn learned_malicious_sum<T: Scalar>(params: &PerturbParams<T>) -> T {
    match params.protocol() {
        Protocol::Grr => T::one(),
        Protocol::Oue | Protocol::Olh => {
            let d = T::of_count(params.domain().size());
            (T::one() - params.q() * d) / (params.p() - params.q())
        }
    }
}

/// Spread `sum_fy` uniformly over the items with positive poisoned
/// frequency; items with `f_Z <= 0` get zero.
pub fn estimate_malicious_none<T: Scalar>(
    poisoned: &FrequencyVector<T>,
    sum_fy: T,
) -> Result<FrequencyVector<T>> {
    let positive = poisoned.iter().filter(|&&z| z > T::zero()).count();
    if positive == 0 {
        return Err(Error::AllNonPositive);
    }
    let share = sum_fy / T::of_count(positive);
    Ok(poisoned.map(|_, z| if z > T::zero() { share } else { T::zero() }))
}

/// Malicious frequencies when the attacker-selected items are known.
///
/// Non-targets receive the expected sum of items the attacker never samples,
/// `-q d / (p - q)` (or `-q |non-targets| / (p - q)` when `full_domain`
/// is off), spread uniformly; targets share the remainder of `sum_fy`.
pub fn estimate_malicious_partial<T: Scalar>(
    params: &PerturbParams<T>,
    sum_fy: T,
    targets: &[usize],
    full_domain: bool,
) -> Result<FrequencyVector<T>> {
    let domain = params.domain();
    crate::attack::check_targets(domain, targets)?;
    let mut is_target = vec![false; domain.size()];
    for &t in targets {
        is_target[t] = true;
    }
    let n_targets = is_target.iter().filter(|&&t| t).count();
    let n_rest = domain.size() - n_targets;
    if n_rest == 0 {
        let share = sum_fy / T::of_count(n_targets);
        return Ok(FrequencyVector::new(domain, vec![share; domain.size()])?);
    }
    let (p, q) = (params.p(), params.q());
    let scale = if full_domain {
        domain.size()
    } else {
        n_rest
    };
    let rest_sum = -(q * T::of_count(scale)) / (p - q);
    let rest_share = rest_sum / T::of_count(n_rest);
    let target_share = (sum_fy - rest_sum) / T::of_count(n_targets);
    let entries = is_target
        .iter()
        .map(|&t| if t { target_share } else { rest_share })
        .collect();
    FrequencyVector::new(domain, entries)
}

/// Full recovery pipeline: learn the malicious sum, estimate `f_Y` from the
/// configured knowledge, invert the mixture and refine onto the simplex.
pub fn ldprecover<T: Scalar>(
    poisoned: &FrequencyVector<T>,
    params: &PerturbParams<T>,
    config: &RecoveryConfig<T>,
) -> Result<RecoveryResult<T>> {
    config.validate()?;
    if poisoned.domain() != params.domain() {
        return Err(Error::DomainMismatch {
            expected: params.domain().size(),
            found: poisoned.len(),
        });
    }
    let sum_fy = learned_malicious_sum(params);
    let malicious = match &config.knowledge {
        Knowledge::None => estimate_malicious_none(poisoned, sum_fy)?,
        Knowledge::Targets(targets) => {
            estimate_malicious_partial(params, sum_fy, targets, config.full_domain_partial)?
        }
    };
    let estimated = genuine_estimator(poisoned, &malicious, config.eta)?;
    let tolerance = config
        .tolerance
        .unwrap_or_else(|| default_tolerance(poisoned.len()));
    let Refinement {
        recovered,
        zeroed,
        iterations,
    } = refine(&estimated, tolerance)?;
    Ok(RecoveryResult {
        recovered,
        estimated_genuine: estimated,
        malicious_estimate: malicious,
        zeroed,
        iterations,
    })
}
