use crate::domain::FrequencyVector;
use crate::error::Result;
use crate::scalar::Scalar;

/// `(1/d) * sum_v (truth[v] - estimate[v])^2`.
pub fn mse<T: Scalar>(truth: &FrequencyVector<T>, estimate: &FrequencyVector<T>) -> Result<T> {
    truth.same_domain(estimate)?;
    let total: T = truth
        .iter()
        .zip(estimate.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(total / T::of_count(truth.len()))
}

/// Total change of the target frequencies relative to the genuine aggregate,
/// `sum_t (estimate[t] - genuine[t])`. Positive means the attack gained.
pub fn frequency_gain<T: Scalar>(
    genuine: &FrequencyVector<T>,
    estimate: &FrequencyVector<T>,
    targets: &[usize],
) -> Result<T> {
    genuine.same_domain(estimate)?;
    crate::attack::check_targets(genuine.domain(), targets)?;
    Ok(targets.iter().map(|&t| estimate[t] - genuine[t]).sum())
}
