//! Test-side oracles, written independently of the library code paths.
#![allow(dead_code)]

use ldp_recover::ldp::{olh_hash, Report};
use ldp_recover::Params;

/// Closest point of the probability simplex to `y`, by trying every
/// support set: on support `S` the KKT point is `y_S - (sum y_S - 1)/|S|`.
pub fn simplex_cls_exhaustive(y: &[f64]) -> Vec<f64> {
    let d = y.len();
    assert!(d <= 20, "exhaustive oracle is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let members: Vec<usize> = (0..d).filter(|&i| mask >> i & 1 == 1).collect();
        let shift = (members.iter().map(|&i| y[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut x = vec![0.0; d];
        let mut feasible = true;
        for &i in &members {
            x[i] = y[i] - shift;
            if x[i] < -1e-12 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let cost: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, x));
        }
    }
    best.expect("the simplex is nonempty").1
}

/// Support counts by protocol definition, one item at a time.
pub fn direct_counts(params: &Params, reports: &[Report]) -> Vec<u64> {
    let d = params.domain().size();
    let mut counts = vec![0u64; d];
    for report in reports {
        for (v, count) in counts.iter_mut().enumerate() {
            let hit = match report {
                Report::Grr(x) => *x == v,
                Report::Oue(bits) => bits.get(v),
                Report::Olh(r) => {
                    olh_hash(r.seed, v, params.hash_range().unwrap()) == r.value
                }
            };
            *count += hit as u64;
        }
    }
    counts
}

/// `(count - N q) / (p - q) / N` for every item.
pub fn frequencies_from_counts(params: &Params, counts: &[u64], total: usize) -> Vec<f64> {
    let (p, q, n) = (params.p(), params.q(), total as f64);
    counts
        .iter()
        .map(|&c| (c as f64 - n * q) / (p - q) / n)
        .collect()
}

pub fn histogram(values: &[usize], d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d];
    for &v in values {
        h[v] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Pearson chi-square statistic and its upper-tail p-value.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    (stat, p)
}

/// Variance of one item's frequency estimate from `n` genuine reports.
pub fn frequency_variance(params: &Params, f: f64, n: usize) -> f64 {
    let (p, q, n) = (params.p(), params.q(), n as f64);
    q * (1.0 - q) / (n * (p - q) * (p - q)) + f * (1.0 - p - q) / (n * (p - q))
}
