//! Poisoning attacks. Every attack samples crafted reports from an
//! attacker-designed distribution; Manip, MGA and MGA-IPA are instances of
//! that sampling view, and several attackers compose by concatenation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, ItemDomain, RngSeed};
use crate::error::{Error, Result};
use crate::ldp::{self, olh_hash, BitVector, OlhReport, PerturbParams, Report};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AttackKind {
    /// Uniform draws from a random subset holding `h_fraction` of the domain.
    Manip { h_fraction: f64 },
    /// Uniform draws from the target set, maximal encoding.
    Mga { targets: Vec<usize> },
    /// I.i.d. draws from an explicit distribution over the domain.
    Adaptive { distribution: Vec<f64> },
    /// MGA inputs passed through the genuine perturbation.
    MgaIpa { targets: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    /// Number of malicious users.
    pub m: usize,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, m: usize) -> Self {
        Self { kind, m }
    }

    pub fn targets(&self) -> Option<&[usize]> {
        match &self.kind {
            AttackKind::Mga { targets } | AttackKind::MgaIpa { targets } => Some(targets),
            _ => None,
        }
    }

    pub fn validate(&self, domain: ItemDomain) -> Result<()> {
        match &self.kind {
            AttackKind::Manip { h_fraction } => check_fraction(*h_fraction),
            AttackKind::Mga { targets } | AttackKind::MgaIpa { targets } => {
                check_targets(domain, targets)
            }
            AttackKind::Adaptive { distribution } => check_distribution(domain, distribution),
        }
    }

    /// Craft this attacker's `m` reports.
    pub fn craft<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &PerturbParams<T>,
        rng: &mut R,
    ) -> Result<Vec<Report>> {
        self.validate(params.domain())?;
        match &self.kind {
            AttackKind::Manip { h_fraction } => craft_manip(params, self.m, *h_fraction, rng),
            AttackKind::Mga { targets } => craft_mga(params, self.m, targets, rng),
            AttackKind::Adaptive { distribution } => {
                craft_adaptive(params, self.m, distribution, rng)
            }
            AttackKind::MgaIpa { targets } => craft_mga_ipa(params, self.m, targets, rng),
        }
    }
}

fn check_fraction(h_fraction: f64) -> Result<()> {
    if !(h_fraction > 0.0 && h_fraction <= 1.0) {
        return Err(Error::invalid(format!("h_fraction must be in (0, 1], got {h_fraction}")));
    }
    Ok(())
}

pub(crate) fn check_targets(domain: ItemDomain, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::invalid("target set is empty"));
    }
    for &t in targets {
        domain.check(t)?;
    }
    Ok(())
}

fn check_distribution(domain: ItemDomain, dist: &[f64]) -> Result<()> {
    if dist.len() != domain.size() {
        return Err(Error::InvalidDistribution(format!(
            "{} probabilities for {} items",
            dist.len(),
            domain.size()
        )));
    }
    if let Some(bad) = dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("probability {bad}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

/// Encode `item` directly in the encoded domain, bypassing perturbation:
/// the index for GRR, a one-hot vector for OUE, and a fresh seed with the
/// item's hash for OLH.
pub fn encode_direct<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    item: usize,
    rng: &mut R,
) -> Report {
    let d = params.domain().size();
    match params.protocol() {
        ldp::Protocol::Grr => Report::Grr(item),
        ldp::Protocol::Oue => Report::Oue(BitVector::one_hot(d, item)),
        ldp::Protocol::Olh => {
            let g = params.hash_range().expect("OLH parameters carry a hash range");
            let seed = rng.next_u64();
            Report::Olh(OlhReport {
                seed,
                value: olh_hash(seed, item, g),
            })
        }
    }
}

/// `k` distinct items chosen uniformly without replacement.
pub fn random_items<R: Rng + ?Sized>(domain: ItemDomain, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > domain.size() {
        return Err(Error::invalid(format!(
            "cannot choose {k} items from {}",
            domain.size()
        )));
    }
    Ok(index::sample(rng, domain.size(), k).into_vec())
}

/// The Manip sub-domain: `max(1, ceil(h_fraction * d))` random items.
pub fn manip_subdomain<R: Rng + ?Sized>(
    domain: ItemDomain,
    h_fraction: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_fraction(h_fraction)?;
    let size = ((h_fraction * domain.size() as f64).ceil() as usize).clamp(1, domain.size());
    random_items(domain, size, rng)
}

pub fn craft_manip<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    m: usize,
    h_fraction: f64,
    rng: &mut R,
) -> Result<Vec<Report>> {
    let subdomain = manip_subdomain(params.domain(), h_fraction, rng)?;
    Ok(craft_uniform(params, m, &subdomain, rng))
}

fn craft_uniform<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    m: usize,
    items: &[usize],
    rng: &mut R,
) -> Vec<Report> {
    (0..m)
        .map(|_| {
            let item = items[rng.random_range(0..items.len())];
            encode_direct(params, item, rng)
        })
        .collect()
}

/// Maximal gain attack. OUE reports set exactly the target bits; GRR and OLH
/// reports encode a uniformly chosen target.
pub fn craft_mga<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    m: usize,
    targets: &[usize],
    rng: &mut R,
) -> Result<Vec<Report>> {
    check_targets(params.domain(), targets)?;
    if params.protocol() == ldp::Protocol::Oue {
        let mut bits = BitVector::zeros(params.domain().size());
        for &t in targets {
            bits.set(t, true);
        }
        return Ok(vec![Report::Oue(bits); m]);
    }
    Ok(craft_uniform(params, m, targets, rng))
}

pub fn craft_adaptive<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    m: usize,
    distribution: &[f64],
    rng: &mut R,
) -> Result<Vec<Report>> {
    check_distribution(params.domain(), distribution)?;
    let sampler = WeightedIndex::new(distribution)
        .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    Ok((0..m)
        .map(|_| {
            let item = sampler.sample(rng);
            encode_direct(params, item, rng)
        })
        .collect())
}

pub fn craft_mga_ipa<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    m: usize,
    targets: &[usize],
    rng: &mut R,
) -> Result<Vec<Report>> {
    check_targets(params.domain(), targets)?;
    (0..m)
        .map(|_| {
            let target = targets[rng.random_range(0..targets.len())];
            params.perturb(target, rng)
        })
        .collect()
}

/// Concatenate the crafted reports of several attackers, in order.
pub fn compose_attacks<T: Scalar, R: Rng + ?Sized>(
    params: &PerturbParams<T>,
    specs: &[AttackSpec],
    rng: &mut R,
) -> Result<Vec<Report>> {
    let mut reports = Vec::with_capacity(specs.iter().map(|s| s.m).sum());
    for spec in specs {
        reports.extend(spec.craft(params, rng)?);
    }
    Ok(reports)
}

/// Assign `m` malicious users uniformly at random to `attackers` groups and
/// return the group sizes.
pub fn assign_users<R: Rng + ?Sized>(m: usize, attackers: usize, rng: &mut R) -> Vec<usize> {
    let mut sizes = vec![0; attackers];
    if attackers > 0 {
        for _ in 0..m {
            sizes[rng.random_range(0..attackers)] += 1;
        }
    }
    sizes
}

/// Random adaptive distribution: i.i.d. uniform weights on `support` random
/// items, normalized; every other item has probability zero.
pub fn random_adaptive_distribution<R: Rng + ?Sized>(
    domain: ItemDomain,
    support: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let items = random_items(domain, support, rng)?;
    let mut weights: Vec<f64> = items.iter().map(|_| rng.random::<f64>()).collect();
    // A zero draw has probability 2^-53 per weight; keep the support exact.
    weights.iter_mut().for_each(|w| *w = w.max(f64::MIN_POSITIVE));
    let total: f64 = weights.iter().sum();
    let mut dist = vec![0.0; domain.size()];
    for (&item, w) in items.iter().zip(&weights) {
        dist[item] = w / total;
    }
    Ok(dist)
}

/// `m = ceil(beta * n / (1 - beta))` malicious users for a malicious
/// fraction `beta` of all users.
pub fn malicious_count(n: usize, beta: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must be in [0, 1), got {beta}")));
    }
    let exact = beta * n as f64 / (1.0 - beta);
    // Absorb rounding so that e.g. beta = 0.05, n = 19 gives exactly 1.
    Ok((exact - 1e-9 * exact.max(1.0)).ceil().max(0.0) as usize)
}

/// Genuine and crafted reports as the server receives them.
#[derive(Clone, Debug, PartialEq)]
pub struct PoisonedReportSet {
    pub genuine: Vec<Report>,
    pub malicious: Vec<Report>,
}

impl PoisonedReportSet {
    pub fn n(&self) -> usize {
        self.genuine.len()
    }

    pub fn m(&self) -> usize {
        self.malicious.len()
    }

    /// `eta = m / n`.
    pub fn eta_true(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    /// `beta = m / (n + m)`.
    pub fn beta(&self) -> f64 {
        self.m() as f64 / (self.n() + self.m()) as f64
    }

    /// All reports, genuine first.
    pub fn all(&self) -> impl Iterator<Item = &Report> {
        self.genuine.iter().chain(&self.malicious)
    }

    pub fn to_vec(&self) -> Vec<Report> {
        self.all().cloned().collect()
    }
}

/// Perturb every genuine user and append the crafted reports of each
/// attacker. The attackers never see `data`.
pub fn poison<T: Scalar>(
    data: &Dataset,
    params: &PerturbParams<T>,
    attacks: &[AttackSpec],
    seed: RngSeed,
) -> Result<PoisonedReportSet> {
    let genuine = ldp::perturb_all(params, data, seed.derive("genuine"))?;
    let malicious = compose_attacks(params, attacks, &mut seed.derive("attack").rng())?;
    Ok(PoisonedReportSet { genuine, malicious })
}
