use crate::domain::FrequencyVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output of the simplex refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement<T> {
    pub recovered: FrequencyVector<T>,
    /// Items forced to zero, in the order they were removed.
    pub zeroed: Vec<usize>,
    /// Rounds that moved at least one item into the zeroed set.
    pub iterations: usize,
}

/// Default termination tolerance: `1e-12 * d`.
pub fn default_tolerance<T: Scalar>(d: usize) -> T {
    T::of(1e-12) * T::of_count(d)
}

/// Euclidean projection of `estimate` onto the probability simplex.
///
/// Stationarity gives `f'(v) = f(v) - (sum_{active} f - 1) / |active|` on the
/// active set. Items that come out below `-tolerance` are pinned to zero and
/// the shift is recomputed until the active set is stable.
pub fn refine<T: Scalar>(estimate: &FrequencyVector<T>, tolerance: T) -> Result<Refinement<T>> {
    if let Some(v) = estimate.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(v));
    }
    if !(tolerance >= T::zero()) {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {tolerance}")));
    }
    let input = estimate.as_slice();
    let d = input.len();
    let mut active = vec![true; d];
    let mut n_active = d;
    let mut zeroed = Vec::new();
    let mut iterations = 0;
    let mut out = vec![T::zero(); d];
    loop {
        if n_active == 0 {
            return Err(Error::RefinementDegenerate);
        }
        let total: T = (0..d).filter(|&v| active[v]).map(|v| input[v]).sum();
        let shift = (total - T::one()) / T::of_count(n_active);
        let mut moved = false;
        for v in 0..d {
            if !active[v] {
                continue;
            }
            out[v] = input[v] - shift;
            if out[v] < -tolerance {
                active[v] = false;
                n_active -= 1;
                out[v] = T::zero();
                zeroed.push(v);
                moved = true;
            }
        }
        if !moved {
            break;
        }
        iterations += 1;
    }
    for x in out.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    Ok(Refinement {
        recovered: FrequencyVector::new(estimate.domain(), out)?,
        zeroed,
        iterations,
    })
}
