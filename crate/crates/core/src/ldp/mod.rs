//! Pure LDP frequency oracles.
//!
//! Every protocol is a triple of perturbation, support and aggregation. The
//! aggregator counts, for each item, the reports whose support contains it
//! and debiases that count with `(C(v) - N q) / (p - q)`.

mod hash;
mod report;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, FrequencyVector, ItemDomain, RngSeed};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use hash::olh_hash;
pub use report::{BitVector, OlhReport, Report};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Grr,
    Oue,
    Olh,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Grr, Protocol::Oue, Protocol::Olh];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Grr => "GRR",
            Protocol::Oue => "OUE",
            Protocol::Olh => "OLH",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grr" => Ok(Protocol::Grr),
            "oue" => Ok(Protocol::Oue),
            "olh" => Ok(Protocol::Olh),
            other => Err(Error::invalid(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Perturbation probabilities of a protocol instance over a domain.
///
/// `p` is the probability that a report supports the user's own item and `q`
/// the probability that it supports any other fixed item.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbParams<T> {
    protocol: Protocol,
    domain: ItemDomain,
    epsilon: T,
    p: T,
    q: T,
    hash_range: Option<u32>,
}

impl<T: Scalar> PerturbParams<T> {
    /// Parameters at privacy budget `epsilon`; OLH uses `g = ceil(e^eps + 1)`.
    pub fn new(protocol: Protocol, domain: ItemDomain, epsilon: T) -> Result<Self> {
        check_epsilon(epsilon)?;
        let e = epsilon.exp();
        let one = T::one();
        let d = T::of_count(domain.size());
        let params = match protocol {
            Protocol::Grr => {
                let denom = d - one + e;
                Self {
                    protocol,
                    domain,
                    epsilon,
                    p: e / denom,
                    q: one / denom,
                    hash_range: None,
                }
            }
            Protocol::Oue => Self {
                protocol,
                domain,
                epsilon,
                p: T::of(0.5),
                q: one / (e + one),
                hash_range: None,
            },
            Protocol::Olh => {
                let g = (e + one).ceil().to_u32().ok_or_else(|| {
                    Error::invalid(format!("hash range overflows for epsilon {epsilon}"))
                })?;
                return Self::olh_with_range(domain, epsilon, g);
            }
        };
        params.validate()?;
        Ok(params)
    }

    pub fn olh_with_range(domain: ItemDomain, epsilon: T, g: u32) -> Result<Self> {
        check_epsilon(epsilon)?;
        if g < 2 {
            return Err(Error::invalid(format!("OLH hash range must be >= 2, got {g}")));
        }
        let e = epsilon.exp();
        let gt = T::of(f64::from(g));
        let params = Self {
            protocol: Protocol::Olh,
            domain,
            epsilon,
            p: e / (e + gt - T::one()),
            q: T::one() / gt,
            hash_range: Some(g),
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !(T::zero() < self.q && self.q < self.p && self.p < T::one()) {
            return Err(Error::invalid(format!(
                "need 0 < q < p < 1, got p={}, q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn domain(&self) -> ItemDomain {
        self.domain
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn q(&self) -> T {
        self.q
    }

    /// OLH hash range `g`; `None` for GRR and OUE.
    pub fn hash_range(&self) -> Option<u32> {
        self.hash_range
    }

    fn range(&self) -> u32 {
        self.hash_range.expect("OLH parameters carry a hash range")
    }

    /// Perturb one user's item.
    pub fn perturb<R: Rng + ?Sized>(&self, item: usize, rng: &mut R) -> Result<Report> {
        self.domain.check(item)?;
        Ok(match self.protocol {
            Protocol::Grr => Report::Grr(grr_respond(
                item,
                self.domain.size(),
                threshold(self.p),
                rng,
            )),
            Protocol::Oue => {
                let d = self.domain.size();
                let keep = threshold(self.p);
                let flip = threshold(self.q);
                let mut bits = BitVector::zeros(d);
                {
                    let words = bits.words_mut();
                    for v in 0..d {
                        let t = if v == item { keep } else { flip };
                        if rng.next_u64() < t {
                            words[v / 64] |= 1 << (v % 64);
                        }
                    }
                }
                Report::Oue(bits)
            }
            Protocol::Olh => {
                let g = self.range();
                let seed = rng.next_u64();
                let hashed = olh_hash(seed, item, g) as usize;
                let value = grr_respond(hashed, g as usize, threshold(self.p), rng) as u32;
                Report::Olh(OlhReport { seed, value })
            }
        })
    }

    /// Whether `report` supports `item`. Reports of another protocol support
    /// nothing.
    pub fn supports(&self, report: &Report, item: usize) -> bool {
        match (self.protocol, report) {
            (Protocol::Grr, Report::Grr(idx)) => *idx == item,
            (Protocol::Oue, Report::Oue(bits)) => bits.get(item),
            (Protocol::Olh, Report::Olh(r)) => {
                item < self.domain.size() && olh_hash(r.seed, item, self.range()) == r.value
            }
            _ => false,
        }
    }

    pub fn check_report(&self, report: &Report) -> Result<()> {
        let d = self.domain.size();
        match (self.protocol, report) {
            (Protocol::Grr, Report::Grr(idx)) if *idx < d => Ok(()),
            (Protocol::Oue, Report::Oue(bits)) if bits.len() == d => Ok(()),
            (Protocol::Olh, Report::Olh(r)) if r.value < self.range() => Ok(()),
            _ => Err(Error::MalformedReport(format!(
                "{report:?} is not a {} report over {d} items",
                self.protocol
            ))),
        }
    }

    /// Add the support indicator of `report` into `counts`.
    fn accumulate(&self, report: &Report, counts: &mut [u64]) {
        match report {
            Report::Grr(idx) => counts[*idx] += 1,
            Report::Oue(bits) => bits.iter_ones().for_each(|v| counts[v] += 1),
            Report::Olh(r) => {
                let g = self.range();
                for (v, c) in counts.iter_mut().enumerate() {
                    if olh_hash(r.seed, v, g) == r.value {
                        *c += 1;
                    }
                }
            }
        }
    }
}

fn check_epsilon<T: Scalar>(epsilon: T) -> Result<()> {
    if !(epsilon > T::zero() && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// `P[next_u64() < threshold(p)] = p` up to 2^-64.
fn threshold<T: Scalar>(p: T) -> u64 {
    let p = p.as_f64();
    if p >= 1.0 {
        u64::MAX
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Keep `item` with probability `p`, otherwise answer one of the other
/// `size - 1` values uniformly.
fn grr_respond<R: Rng + ?Sized>(item: usize, size: usize, keep: u64, rng: &mut R) -> usize {
    if rng.next_u64() < keep {
        item
    } else {
        let other = rng.random_range(0..size - 1);
        if other >= item {
            other + 1
        } else {
            other
        }
    }
}

/// Perturb every user of `data`, user `i` drawing from substream `i` of
/// `seed`.
pub fn perturb_all<T: Scalar>(
    params: &PerturbParams<T>,
    data: &Dataset,
    seed: RngSeed,
) -> Result<Vec<Report>> {
    if data.domain() != params.domain() {
        return Err(Error::DomainMismatch {
            expected: params.domain().size(),
            found: data.domain().size(),
        });
    }
    data.values()
        .par_iter()
        .enumerate()
        .map(|(i, &item)| params.perturb(item, &mut seed.substream(i as u64)))
        .collect()
}

/// Support counts and the unbiased count estimates derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateEstimate<T> {
    domain: ItemDomain,
    support: Vec<u64>,
    n_reports: u64,
    counts: Vec<T>,
}

impl<T: Scalar> AggregateEstimate<T> {
    pub fn from_support(params: &PerturbParams<T>, support: Vec<u64>, n_reports: u64) -> Result<Self> {
        let domain = params.domain();
        if support.len() != domain.size() {
            return Err(Error::DomainMismatch {
                expected: domain.size(),
                found: support.len(),
            });
        }
        if n_reports == 0 {
            return Err(Error::EmptyReports);
        }
        let n = T::of(n_reports as f64);
        let (p, q) = (params.p(), params.q());
        let counts = support
            .iter()
            .map(|&c| (T::of(c as f64) - n * q) / (p - q))
            .collect();
        Ok(Self {
            domain,
            support,
            n_reports,
            counts,
        })
    }

    /// `C(v)`: the number of reports supporting each item.
    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn n_reports(&self) -> u64 {
        self.n_reports
    }

    /// Unbiased estimated counts.
    pub fn counts(&self) -> &[T] {
        &self.counts
    }

    pub fn frequencies(&self) -> FrequencyVector<T> {
        let n = T::of(self.n_reports as f64);
        FrequencyVector::new(self.domain, self.counts.iter().map(|&c| c / n).collect())
            .expect("aggregate has one count per item")
    }

    /// Aggregate of the concatenation of both report sets.
    pub fn merge(&self, other: &Self, params: &PerturbParams<T>) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain.size(),
                found: other.domain.size(),
            });
        }
        let support = self
            .support
            .iter()
            .zip(&other.support)
            .map(|(a, b)| a + b)
            .collect();
        Self::from_support(params, support, self.n_reports + other.n_reports)
    }
}

/// Aggregate reports into unbiased per-item count estimates.
pub fn aggregate<T: Scalar>(params: &PerturbParams<T>, reports: &[Report]) -> Result<AggregateEstimate<T>> {
    if reports.is_empty() {
        return Err(Error::EmptyReports);
    }
    let support = support_counts(params, reports)?;
    AggregateEstimate::from_support(params, support, reports.len() as u64)
}

/// `C(v)` for every item, validating each report.
pub fn support_counts<T: Scalar>(params: &PerturbParams<T>, reports: &[Report]) -> Result<Vec<u64>> {
    let d = params.domain().size();
    reports
        .par_chunks(2048)
        .map(|chunk| {
            let mut counts = vec![0u64; d];
            for report in chunk {
                params.check_report(report)?;
                params.accumulate(report, &mut counts);
            }
            Ok(counts)
        })
        .try_reduce(
            || vec![0u64; d],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain(d: usize) -> ItemDomain {
        ItemDomain::new(d).unwrap()
    }

    #[test]
    fn grr_probabilities() {
        let params = PerturbParams::new(Protocol::Grr, domain(4), 3f64.ln()).unwrap();
        assert!((params.p() - 0.5).abs() < 1e-15);
        assert!((params.q() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn grr_probabilities_close() {
        for d in [2, 3, 10, 102, 490, 5000] {
            for eps in [0.01, 0.1, 0.5, 1.0, 1.6, 4.0] {
                let params = PerturbParams::new(Protocol::Grr, domain(d), eps).unwrap();
                let total = params.p() + (d as f64 - 1.0) * params.q();
                assert!((total - 1.0).abs() < 1e-12, "d={d} eps={eps}: {total}");
            }
        }
    }

    #[test]
    fn oue_probabilities() {
        let params = PerturbParams::new(Protocol::Oue, domain(4), 3f64.ln()).unwrap();
        assert_eq!(params.p(), 0.5);
        assert!((params.q() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn olh_default_range() {
        let params = PerturbParams::<f64>::new(Protocol::Olh, domain(102), 0.5).unwrap();
        assert_eq!(params.hash_range(), Some(3));
        assert!((params.q() - 1.0 / 3.0).abs() < 1e-15);
        let e = 0.5f64.exp();
        assert!((params.p() - e / (e + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_epsilon_rejected() {
        assert!(PerturbParams::new(Protocol::Grr, domain(4), 0.0).is_err());
        assert!(PerturbParams::new(Protocol::Oue, domain(4), -1.0).is_err());
        assert!(PerturbParams::olh_with_range(domain(4), 1.0, 1).is_err());
    }

    #[test]
    fn single_precision_params() {
        let params = PerturbParams::<f32>::new(Protocol::Grr, domain(4), 3f32.ln()).unwrap();
        assert!((params.p() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn supports_singletons_and_bits() {
        let grr = PerturbParams::new(Protocol::Grr, domain(4), 1.0).unwrap();
        assert!(grr.supports(&Report::Grr(3), 3));
        assert!(!grr.supports(&Report::Grr(3), 2));
        let oue = PerturbParams::new(Protocol::Oue, domain(4), 1.0).unwrap();
        let report = Report::Oue("0110".parse().unwrap());
        assert!(oue.supports(&report, 1));
        assert!(!oue.supports(&report, 0));
        assert!(!grr.supports(&report, 1));
    }

    #[test]
    fn olh_supports_by_hash() {
        let olh = PerturbParams::new(Protocol::Olh, domain(9), 0.5).unwrap();
        let seed = 12345;
        let value = olh_hash(seed, 4, 3);
        let report = Report::Olh(OlhReport { seed, value });
        assert!(olh.supports(&report, 4));
        for v in 0..9 {
            assert_eq!(olh.supports(&report, v), olh_hash(seed, v, 3) == value);
        }
    }

    #[test]
    fn perturb_rejects_out_of_domain() {
        let grr = PerturbParams::new(Protocol::Grr, domain(4), 1.0).unwrap();
        let mut rng = RngSeed(1).rng();
        assert!(matches!(
            grr.perturb(4, &mut rng),
            Err(Error::ItemOutOfDomain { item: 4, size: 4 })
        ));
    }

    #[test]
    fn grr_never_reports_a_specific_wrong_item_more_than_q() {
        // With d = 2 a GRR "lie" must be the other item.
        let grr = PerturbParams::new(Protocol::Grr, domain(2), 1.0).unwrap();
        let mut rng = RngSeed(5).rng();
        for _ in 0..100 {
            match grr.perturb(0, &mut rng).unwrap() {
                Report::Grr(v) => assert!(v < 2),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn aggregate_debiases_counts() {
        let grr = PerturbParams::new(Protocol::Grr, domain(4), 3f64.ln()).unwrap();
        let mut reports = vec![Report::Grr(0); 30];
        reports.extend(std::iter::repeat_n(Report::Grr(1), 70));
        let agg = aggregate(&grr, &reports).unwrap();
        assert!((agg.counts()[0] - 40.0).abs() < 1e-9);
        assert!((agg.frequencies()[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn aggregate_zero_when_count_equals_nq() {
        let grr = PerturbParams::new(Protocol::Grr, domain(4), 3f64.ln()).unwrap();
        // N = 6, q = 1/6, so C(v) = 1 gives a zero estimate.
        let reports = [0, 1, 1, 1, 1, 1].map(Report::Grr);
        let agg = aggregate(&grr, &reports).unwrap();
        assert!(agg.counts()[0].abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_empty_and_malformed() {
        let grr = PerturbParams::new(Protocol::Grr, domain(4), 1.0).unwrap();
        assert!(matches!(aggregate(&grr, &[]), Err(Error::EmptyReports)));
        assert!(matches!(
            aggregate(&grr, &[Report::Grr(9)]),
            Err(Error::MalformedReport(_))
        ));
        let oue = PerturbParams::new(Protocol::Oue, domain(4), 1.0).unwrap();
        assert!(aggregate(&oue, &[Report::Oue(BitVector::zeros(5))]).is_err());
    }

    #[test]
    fn perturb_all_is_reproducible() {
        let data = Dataset::new(domain(5), vec![0, 1, 2, 3, 4, 0, 0]).unwrap();
        for protocol in Protocol::ALL {
            let params = PerturbParams::new(protocol, domain(5), 0.5).unwrap();
            let a = perturb_all(&params, &data, RngSeed(11)).unwrap();
            let b = perturb_all(&params, &data, RngSeed(11)).unwrap();
            assert_eq!(a, b);
        }
    }
}
