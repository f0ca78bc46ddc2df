use crate::attack::{check_targets, PoisonedReportSet};
use crate::domain::FrequencyVector;
use crate::error::{Error, Result};
use crate::ldp::{self, PerturbParams, Report};
use crate::scalar::Scalar;

/// Drop every report that supports a target item and aggregate the rest,
/// normalized by the number of surviving reports.
///
/// Genuine users whose perturbed report lands on a target are dropped too;
/// that is the baseline's known failure mode.
pub fn detection_baseline<T: Scalar>(
    reports: &PoisonedReportSet,
    targets: &[usize],
    params: &PerturbParams<T>,
) -> Result<FrequencyVector<T>> {
    check_targets(params.domain(), targets)?;
    let survivors: Vec<Report> = reports
        .all()
        .filter(|r| !targets.iter().any(|&t| params.supports(r, t)))
        .cloned()
        .collect();
    if survivors.is_empty() {
        return Err(Error::AllReportsDropped);
    }
    Ok(ldp::aggregate(params, &survivors)?.frequencies())
}
