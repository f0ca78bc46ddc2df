//! Experiment configuration: TOML (or JSON) with unknown keys rejected.
//!
//! ```toml
//! protocol = "grr"     # grr | oue | olh
//! epsilon = 0.5
//! trials = 10
//! seed = 0
//!
//! [dataset]
//! zipf = { d = 102, n = 389894, s = 1.1 }   # or: path = "items.txt", domain = 102
//!
//! [attack]
//! kind = "aa"          # none | manip | mga | mga-ipa | aa
//! beta = 0.05          # or: m = 20521
//! r = 10
//! h_fraction = 0.2     # manip only
//! attackers = 1        # aa and manip only
//!
//! [recovery]
//! eta = 0.2
//! full_domain_partial = true
//! methods = ["poisoned", "ldprecover", "ldprecover*", "detection"]
//!
//! [sweep]              # optional, exactly one grid
//! eta = [0.01, 0.05, 0.1, 0.2, 0.4]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldp::Protocol;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub recovery: RecoverySettings,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_protocol() -> Protocol {
    Protocol::Grr
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_trials() -> usize {
    10
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            protocol: default_protocol(),
            epsilon: default_epsilon(),
            attack: AttackConfig::default(),
            recovery: RecoverySettings::default(),
            trials: default_trials(),
            seed: 0,
            sweep: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipfSpec {
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_zipf_s")]
    pub s: f64,
}

fn default_zipf_s() -> f64 {
    1.1
}

impl ZipfSpec {
    /// 102 items over 389,894 users.
    pub fn ipums_scale() -> Self {
        Self {
            d: 102,
            n: 389_894,
            s: default_zipf_s(),
        }
    }

    /// 490 items over 667,574 users.
    pub fn fire_scale() -> Self {
        Self {
            d: 490,
            n: 667_574,
            s: default_zipf_s(),
        }
    }
}

impl std::str::FromStr for ZipfSpec {
    type Err = Error;

    /// `d=102,n=389894,s=1.1`; `s` is optional.
    fn from_str(text: &str) -> Result<Self> {
        let (mut d, mut n, mut s) = (None, None, default_zipf_s());
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {part:?}")))?;
            let bad = |e: &dyn std::fmt::Display| Error::Config(format!("zipf.{key}: {e}"));
            match key.trim() {
                "d" => d = Some(value.trim().parse().map_err(|e| bad(&e))?),
                "n" => n = Some(value.trim().parse().map_err(|e| bad(&e))?),
                "s" => s = value.trim().parse().map_err(|e| bad(&e))?,
                other => return Err(Error::Config(format!("zipf: unknown key {other:?}"))),
            }
        }
        Ok(Self {
            d: d.ok_or_else(|| Error::Config("zipf.d is required".into()))?,
            n: n.ok_or_else(|| Error::Config("zipf.n is required".into()))?,
            s,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zipf: Option<ZipfSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Domain size hint for file datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            zipf: Some(ZipfSpec::ipums_scale()),
            path: None,
            domain: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    None,
    Manip,
    Mga,
    MgaIpa,
    Aa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_attack")]
    pub kind: AttackName,
    /// Malicious fraction `m / (n + m)`; ignored when `m` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Target count for MGA, support size of the random AA distribution.
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_h_fraction")]
    pub h_fraction: f64,
    #[serde(default = "default_attackers")]
    pub attackers: usize,
}

fn default_attack() -> AttackName {
    AttackName::Aa
}

fn default_r() -> usize {
    10
}

fn default_h_fraction() -> f64 {
    0.2
}

fn default_attackers() -> usize {
    1
}

pub const DEFAULT_BETA: f64 = 0.05;

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: default_attack(),
            beta: Some(DEFAULT_BETA),
            m: None,
            r: default_r(),
            h_fraction: default_h_fraction(),
            attackers: default_attackers(),
        }
    }
}

impl AttackConfig {
    pub fn malicious_count(&self, n: usize) -> Result<usize> {
        if self.kind == AttackName::None {
            return Ok(0);
        }
        match self.m {
            Some(m) => Ok(m),
            None => crate::attack::malicious_count(n, self.beta.unwrap_or(DEFAULT_BETA)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "poisoned")]
    Poisoned,
    #[serde(rename = "ldprecover")]
    LdpRecover,
    #[serde(rename = "ldprecover*")]
    LdpRecoverStar,
    #[serde(rename = "detection")]
    Detection,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Poisoned,
        Method::LdpRecover,
        Method::LdpRecoverStar,
        Method::Detection,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Poisoned => "Poisoned",
            Method::LdpRecover => "LDPRecover",
            Method::LdpRecoverStar => "LDPRecover*",
            Method::Detection => "Detection",
        }
    }

    pub fn from_label(label: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySettings {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_true")]
    pub full_domain_partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

fn default_eta() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            full_domain_partial: true,
            tolerance: None,
            methods: default_methods(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Beta,
    Epsilon,
    Eta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Eta => "eta",
        }
    }

    /// Inclusive range a grid value must fall in.
    pub fn range(self) -> (f64, f64) {
        match self {
            SweepParam::Beta => (0.0, 0.1),
            SweepParam::Epsilon => (0.1, 1.6),
            SweepParam::Eta => (0.01, 0.4),
        }
    }
}

/// One parameter grid. Declaring more than one grid is a config error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
}

impl SweepConfig {
    pub fn single(param: SweepParam, values: Vec<f64>) -> Self {
        let mut sweep = SweepConfig::default();
        match param {
            SweepParam::Beta => sweep.beta = Some(values),
            SweepParam::Epsilon => sweep.epsilon = Some(values),
            SweepParam::Eta => sweep.eta = Some(values),
        }
        sweep
    }

    /// The single declared grid.
    pub fn grid(&self) -> Result<(SweepParam, &[f64])> {
        let declared: Vec<(SweepParam, &Vec<f64>)> = [
            (SweepParam::Beta, &self.beta),
            (SweepParam::Epsilon, &self.epsilon),
            (SweepParam::Eta, &self.eta),
        ]
        .into_iter()
        .filter_map(|(p, v)| v.as_ref().map(|v| (p, v)))
        .collect();
        match declared.as_slice() {
            [(param, values)] => {
                if values.is_empty() {
                    return Err(Error::Config(format!("sweep.{}: empty grid", param.name())));
                }
                let (lo, hi) = param.range();
                for (i, &v) in values.iter().enumerate() {
                    if !(lo..=hi).contains(&v) {
                        return Err(Error::Config(format!(
                            "sweep.{}[{i}]: {v} outside [{lo}, {hi}]",
                            param.name()
                        )));
                    }
                }
                Ok((*param, values.as_slice()))
            }
            [] => Err(Error::Config("sweep: no grid declared".into())),
            _ => Err(Error::Config(format!(
                "sweep: exactly one grid allowed, found {}",
                declared
                    .iter()
                    .map(|(p, _)| p.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        match (&self.dataset.zipf, &self.dataset.path) {
            (Some(_), Some(_)) => return cfg("dataset: set either zipf or path, not both".into()),
            (None, None) => return cfg("dataset: one of zipf or path is required".into()),
            (Some(z), None) => {
                if z.d < 2 {
                    return cfg(format!("dataset.zipf.d: must be >= 2, got {}", z.d));
                }
                if z.n == 0 {
                    return cfg("dataset.zipf.n: must be >= 1".into());
                }
                if !(z.s > 0.0) {
                    return cfg(format!("dataset.zipf.s: must be > 0, got {}", z.s));
                }
            }
            (None, Some(_)) => {}
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return cfg(format!("epsilon: must be > 0, got {}", self.epsilon));
        }
        if self.trials == 0 {
            return cfg("trials: must be >= 1".into());
        }
        let a = &self.attack;
        if let Some(beta) = a.beta {
            if !(0.0..1.0).contains(&beta) {
                return cfg(format!("attack.beta: must be in [0, 1), got {beta}"));
            }
        }
        if a.r == 0 {
            return cfg("attack.r: must be >= 1".into());
        }
        if !(a.h_fraction > 0.0 && a.h_fraction <= 1.0) {
            return cfg(format!("attack.h_fraction: must be in (0, 1], got {}", a.h_fraction));
        }
        if a.attackers == 0 {
            return cfg("attack.attackers: must be >= 1".into());
        }
        if a.attackers > 1 && !matches!(a.kind, AttackName::Aa | AttackName::Manip) {
            return cfg("attack.attackers: multiple attackers need kind aa or manip".into());
        }
        let r = &self.recovery;
        if !(r.eta >= 0.0 && r.eta.is_finite()) {
            return cfg(format!("recovery.eta: must be >= 0, got {}", r.eta));
        }
        if let Some(t) = r.tolerance {
            if !(t >= 0.0) {
                return cfg(format!("recovery.tolerance: must be >= 0, got {t}"));
            }
        }
        if r.methods.is_empty() {
            return cfg("recovery.methods: at least one method required".into());
        }
        if let Some(sweep) = &self.sweep {
            sweep.grid()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(path_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
        config.validate()?;
        Ok(config)
    }

    /// Load by extension: `.json` is JSON, anything else TOML. A relative
    /// dataset path is resolved against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        if let (Some(data), Some(dir)) = (config.dataset.path.as_mut(), path.parent()) {
            if data.is_relative() {
                *data = dir.join(&*data);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn path_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    let inner = err.into_inner();
    if path == "." {
        Error::Config(inner.to_string())
    } else {
        Error::Config(format!("{path}: {inner}"))
    }
}
