//! Multi-trial experiment runner and its on-disk formats.
//!
//! Trial `k` draws all of its randomness from `seed + k`. Trials run in
//! parallel and are merged in trial order, so output is independent of the
//! thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackName, ExperimentConfig, Method, SweepParam};
use super::metrics::{frequency_gain, mse};
use crate::attack::{self, AttackKind, AttackSpec};
use crate::domain::{self, write_atomic, Dataset, FrequencyVector, ItemDomain, RngSeed};
use crate::error::{Error, Result};
use crate::ldp::{self, PerturbParams};
use crate::recover::{self, detection_baseline, Knowledge, RecoveryConfig, RecoveryResult};

type Freqs = FrequencyVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Fg,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Fg => "fg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: Method,
    pub metric: Metric,
    /// `None` marks a trial in which the method failed.
    pub per_trial: Vec<Option<f64>>,
    /// Arithmetic mean over the trials that succeeded.
    pub mean: Option<f64>,
}

/// Intermediate vectors of the first trial, kept for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialArtifacts {
    pub truth: Freqs,
    pub genuine: Freqs,
    pub poisoned: Freqs,
    pub targets: Option<Vec<usize>>,
    pub ldprecover: Option<RecoveryResult<f64>>,
    pub ldprecover_star: Option<RecoveryResult<f64>>,
    pub detection: Option<Freqs>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub rows: Vec<MetricRow>,
    /// One line per failed cell, `trial k: Method: message`.
    pub errors: Vec<String>,
    pub artifacts: Option<TrialArtifacts>,
    pub labels: Option<Vec<String>>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, metric: Metric) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.metric == metric)
    }

    pub fn mean(&self, method: Method, metric: Metric) -> Option<f64> {
        self.row(method, metric).and_then(|r| r.mean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub param: SweepParam,
    pub points: Vec<(f64, ExperimentReport)>,
}

/// The configured dataset. Zipf data is drawn from the experiment seed.
pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match (&config.dataset.zipf, &config.dataset.path) {
        (Some(z), None) => domain::synthesize_zipf(
            ItemDomain::new(z.d)?,
            z.n,
            z.s,
            RngSeed(config.seed).derive("dataset"),
        ),
        (None, Some(path)) => domain::load_dataset(path, config.dataset.domain),
        _ => Err(Error::Config(
            "dataset: exactly one of zipf or path is required".into(),
        )),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let data = build_dataset(config)?;
    run_on(config, &data)
}

/// Run `config` on an already loaded dataset; `config.sweep` is ignored.
pub fn run_on(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    config.validate()?;
    let params = PerturbParams::<f64>::new(config.protocol, data.domain(), config.epsilon)?;
    let n = data.len();
    let m = config.attack.malicious_count(n)?;
    if matches!(config.attack.kind, AttackName::Mga | AttackName::MgaIpa)
        && config.attack.r > data.domain().size()
    {
        return Err(Error::Config(format!(
            "attack.r: {} targets exceed the domain size {}",
            config.attack.r,
            data.domain().size()
        )));
    }
    let truth: Freqs = domain::true_frequencies(data);
    let cells = cells(config, m);

    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|k| run_trial(config, &params, data, &truth, m, k))
        .collect();

    let mut errors = Vec::new();
    for (k, outcome) in outcomes.iter().enumerate() {
        errors.extend(outcome.errors.iter().map(|e| format!("trial {k}: {e}")));
    }
    let rows = cells
        .iter()
        .map(|&(method, metric)| {
            let per_trial: Vec<Option<f64>> = outcomes
                .iter()
                .map(|o| o.values.get(&(method, metric)).copied())
                .collect();
            let ok: Vec<f64> = per_trial.iter().flatten().copied().collect();
            let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
            MetricRow {
                method,
                metric,
                per_trial,
                mean,
            }
        })
        .collect();
    let artifacts = outcomes.into_iter().next().and_then(|o| o.artifacts);
    Ok(ExperimentReport {
        config: config.clone(),
        n,
        m,
        d: data.domain().size(),
        rows,
        errors,
        artifacts,
        labels: data.labels().map(<[String]>::to_vec),
    })
}

/// Run every point of the config's single grid on one shared dataset.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep: no grid declared".into()))?;
    let (param, values) = sweep.grid()?;
    let data = build_dataset(config)?;
    let points = values
        .par_iter()
        .map(|&value| {
            let mut point = config.clone();
            point.sweep = None;
            match param {
                SweepParam::Beta => {
                    point.attack.beta = Some(value);
                    point.attack.m = None;
                }
                SweepParam::Epsilon => point.epsilon = value,
                SweepParam::Eta => point.recovery.eta = value,
            }
            run_on(&point, &data).map(|report| (value, report))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { param, points })
}

/// Whether the attack has a target set for FG, LDPRecover* and Detection.
fn has_targets(kind: AttackName, m: usize) -> bool {
    match kind {
        AttackName::Mga | AttackName::MgaIpa => true,
        AttackName::Aa => m > 0,
        AttackName::None | AttackName::Manip => false,
    }
}

/// (method, metric) cells reported for this config, in table order.
fn cells(config: &ExperimentConfig, m: usize) -> Vec<(Method, Metric)> {
    let targeted = has_targets(config.attack.kind, m);
    let mut out = Vec::new();
    for method in Method::ALL {
        if !config.recovery.methods.contains(&method) {
            continue;
        }
        if !targeted && matches!(method, Method::LdpRecoverStar | Method::Detection) {
            continue;
        }
        out.push((method, Metric::Mse));
        if targeted {
            out.push((method, Metric::Fg));
        }
    }
    out
}

struct TrialOutcome {
    values: BTreeMap<(Method, Metric), f64>,
    errors: Vec<String>,
    artifacts: Option<TrialArtifacts>,
}

/// Attack specs for one trial plus the declared target set, if any.
fn build_attacks(
    config: &ExperimentConfig,
    domain: ItemDomain,
    m: usize,
    seed: RngSeed,
) -> Result<(Vec<AttackSpec>, Option<Vec<usize>>)> {
    let a = &config.attack;
    let mut rng = seed.derive("setup").rng();
    let shares = |rng: &mut _| {
        if a.attackers > 1 {
            attack::assign_users(m, a.attackers, rng)
        } else {
            vec![m]
        }
    };
    Ok(match a.kind {
        AttackName::None => (Vec::new(), None),
        AttackName::Manip => {
            let specs = shares(&mut rng)
                .into_iter()
                .map(|share| {
                    AttackSpec::new(
                        AttackKind::Manip {
                            h_fraction: a.h_fraction,
                        },
                        share,
                    )
                })
                .collect();
            (specs, None)
        }
        AttackName::Mga | AttackName::MgaIpa => {
            let targets = attack::random_items(domain, a.r, &mut rng)?;
            let kind = if a.kind == AttackName::Mga {
                AttackKind::Mga {
                    targets: targets.clone(),
                }
            } else {
                AttackKind::MgaIpa {
                    targets: targets.clone(),
                }
            };
            (vec![AttackSpec::new(kind, m)], Some(targets))
        }
        AttackName::Aa => {
            let mut specs = Vec::with_capacity(a.attackers);
            for share in shares(&mut rng) {
                let distribution =
                    attack::random_adaptive_distribution(domain, a.r.min(domain.size()), &mut rng)?;
                specs.push(AttackSpec::new(AttackKind::Adaptive { distribution }, share));
            }
            (specs, None)
        }
    })
}

/// The `k` items whose frequency rose most from `genuine` to `poisoned`;
/// ties go to the lower index.
pub fn top_increase(poisoned: &Freqs, genuine: &Freqs, k: usize) -> Vec<usize> {
    let mut items: Vec<usize> = poisoned.domain().items().collect();
    items.sort_by(|&a, &b| {
        let da = poisoned[a] - genuine[a];
        let db = poisoned[b] - genuine[b];
        db.total_cmp(&da).then(a.cmp(&b))
    });
    items.truncate(k);
    items
}

fn recovery_config(config: &ExperimentConfig, targets: Option<&[usize]>) -> RecoveryConfig<f64> {
    RecoveryConfig {
        eta: config.recovery.eta,
        knowledge: match targets {
            Some(t) => Knowledge::Targets(t.to_vec()),
            None => Knowledge::None,
        },
        full_domain_partial: config.recovery.full_domain_partial,
        tolerance: config.recovery.tolerance,
    }
}

fn run_trial(
    config: &ExperimentConfig,
    params: &PerturbParams<f64>,
    data: &Dataset,
    truth: &Freqs,
    m: usize,
    k: usize,
) -> TrialOutcome {
    let mut outcome = TrialOutcome {
        values: BTreeMap::new(),
        errors: Vec::new(),
        artifacts: None,
    };
    if let Err(e) = trial_body(config, params, data, truth, m, k, &mut outcome) {
        outcome.values.clear();
        outcome.errors.push(format!("setup: {e}"));
    }
    outcome
}

fn trial_body(
    config: &ExperimentConfig,
    params: &PerturbParams<f64>,
    data: &Dataset,
    truth: &Freqs,
    m: usize,
    k: usize,
    outcome: &mut TrialOutcome,
) -> Result<()> {
    let seed = RngSeed(config.seed).offset(k as u64);
    let (specs, declared) = build_attacks(config, data.domain(), m, seed)?;
    let reports = attack::poison(data, params, &specs, seed)?;
    let genuine_agg = ldp::aggregate(params, &reports.genuine)?;
    let poisoned = if reports.m() > 0 {
        genuine_agg
            .merge(&ldp::aggregate(params, &reports.malicious)?, params)?
            .frequencies()
    } else {
        genuine_agg.frequencies()
    };
    let genuine = genuine_agg.frequencies();
    let targets = match declared {
        Some(t) => Some(t),
        None if has_targets(config.attack.kind, m) => {
            Some(top_increase(&poisoned, &genuine, config.attack.r.div_ceil(2)))
        }
        None => None,
    };

    let methods = &config.recovery.methods;
    let mut record = |method: Method, estimate: std::result::Result<&Freqs, &Error>| {
        let cell = estimate.map_err(|e| e.to_string()).and_then(|est| {
            let mse = mse(truth, est).map_err(|e| e.to_string())?;
            let fg = match &targets {
                Some(t) => Some(frequency_gain(&genuine, est, t).map_err(|e| e.to_string())?),
                None => None,
            };
            Ok((mse, fg))
        });
        match cell {
            Ok((mse, fg)) => {
                outcome.values.insert((method, Metric::Mse), mse);
                if let Some(fg) = fg {
                    outcome.values.insert((method, Metric::Fg), fg);
                }
            }
            Err(e) => outcome.errors.push(format!("{}: {e}", method.label())),
        }
    };

    if methods.contains(&Method::Poisoned) {
        record(Method::Poisoned, Ok(&poisoned));
    }
    let plain = methods
        .contains(&Method::LdpRecover)
        .then(|| recover::ldprecover(&poisoned, params, &recovery_config(config, None)));
    if let Some(result) = &plain {
        record(Method::LdpRecover, result.as_ref().map(|r| &r.recovered));
    }
    let mut star = None;
    let mut detection = None;
    if let Some(t) = &targets {
        if methods.contains(&Method::LdpRecoverStar) {
            let result = recover::ldprecover(&poisoned, params, &recovery_config(config, Some(t)));
            record(Method::LdpRecoverStar, result.as_ref().map(|r| &r.recovered));
            star = Some(result);
        }
        if methods.contains(&Method::Detection) {
            let result = detection_baseline(&reports, t, params);
            record(Method::Detection, result.as_ref());
            detection = Some(result);
        }
    }

    if k == 0 {
        outcome.artifacts = Some(TrialArtifacts {
            truth: truth.clone(),
            genuine,
            poisoned,
            targets,
            ldprecover: plain.and_then(Result::ok),
            ldprecover_star: star.and_then(Result::ok),
            detection: detection.and_then(Result::ok),
        });
    }
    Ok(())
}

/// Method table in scientific notation, e.g. `5.89E-4`.
pub fn format_table(report: &ExperimentReport) -> String {
    let show_fg = report.rows.iter().any(|r| r.metric == Metric::Fg);
    let cell = |method, metric| match report.row(method, metric) {
        Some(MetricRow { mean: Some(v), .. }) => format!("{v:.2E}"),
        Some(_) => "failed".to_string(),
        None => "-".to_string(),
    };
    let mut out = String::new();
    if show_fg {
        let _ = writeln!(out, "{:<12} {:>10} {:>10}", "Method", "MSE", "FG");
    } else {
        let _ = writeln!(out, "{:<12} {:>10}", "Method", "MSE");
    }
    let mut seen = Vec::new();
    for row in &report.rows {
        if seen.contains(&row.method) {
            continue;
        }
        seen.push(row.method);
        let mse = cell(row.method, Metric::Mse);
        if show_fg {
            let fg = cell(row.method, Metric::Fg);
            let _ = writeln!(out, "{:<12} {mse:>10} {fg:>10}", row.method.label());
        } else {
            let _ = writeln!(out, "{:<12} {mse:>10}", row.method.label());
        }
    }
    out
}

const RESULTS_HEADER: &str = "sweep_param,sweep_value,trial,method,metric,value\n";

fn append_results(out: &mut String, point: Option<(SweepParam, f64)>, report: &ExperimentReport) {
    let (param, value) = match point {
        Some((p, v)) => (p.name().to_string(), v.to_string()),
        None => (String::new(), String::new()),
    };
    for trial in 0..report.config.trials {
        for row in &report.rows {
            let v = row.per_trial[trial].map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{param},{value},{trial},{},{},{v}",
                row.method.label(),
                row.metric.name()
            );
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_value: Option<f64>,
    protocol: &'a str,
    epsilon: f64,
    attack: AttackName,
    eta: f64,
    n: usize,
    m: usize,
    d: usize,
    trials: usize,
    seed: u64,
    /// method label -> metric -> mean
    means: BTreeMap<&'static str, BTreeMap<&'static str, Option<f64>>>,
    errors: &'a [String],
}

fn summary(report: &ExperimentReport, sweep_value: Option<f64>) -> Summary<'_> {
    let mut means: BTreeMap<_, BTreeMap<_, _>> = BTreeMap::new();
    for row in &report.rows {
        means
            .entry(row.method.label())
            .or_default()
            .insert(row.metric.name(), row.mean);
    }
    let c = &report.config;
    Summary {
        sweep_value,
        protocol: c.protocol.name(),
        epsilon: c.epsilon,
        attack: c.attack.kind,
        eta: c.recovery.eta,
        n: report.n,
        m: report.m,
        d: report.d,
        trials: c.trials,
        seed: c.seed,
        means,
        errors: &report.errors,
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// One row of `frequencies.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyRow {
    pub item: usize,
    pub truth: f64,
    pub genuine: f64,
    pub poisoned: f64,
    pub ldprecover: Option<f64>,
    pub ldprecover_star: Option<f64>,
    pub detection: Option<f64>,
    pub label: Option<String>,
}

const FREQUENCY_HEADER: &str = "item,true,genuine,poisoned,ldprecover,ldprecover*,detection,label";

fn frequency_csv(artifacts: &TrialArtifacts, labels: Option<&[String]>) -> String {
    let opt = |v: Option<&Freqs>, i: usize| v.map(|f| format!("{:e}", f[i])).unwrap_or_default();
    let mut out = String::from(FREQUENCY_HEADER);
    out.push('\n');
    for i in artifacts.truth.domain().items() {
        let _ = writeln!(
            out,
            "{i},{:e},{:e},{:e},{},{},{},{}",
            artifacts.truth[i],
            artifacts.genuine[i],
            artifacts.poisoned[i],
            opt(artifacts.ldprecover.as_ref().map(|r| &r.recovered), i),
            opt(artifacts.ldprecover_star.as_ref().map(|r| &r.recovered), i),
            opt(artifacts.detection.as_ref(), i),
            labels.and_then(|l| l.get(i)).map(String::as_str).unwrap_or(""),
        );
    }
    out
}

/// Parse `frequencies.csv` as written by [`write_results`].
pub fn read_frequency_table(path: impl AsRef<Path>) -> Result<Vec<FrequencyRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == FREQUENCY_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {FREQUENCY_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        // The label is last and may contain anything but a newline.
        let fields: Vec<&str> = line.splitn(8, ',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| bad(format!("field {}: {e}", i + 1)))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        rows.push(FrequencyRow {
            item: fields[0]
                .parse()
                .map_err(|e| bad(format!("field 1: {e}")))?,
            truth: num(1)?,
            genuine: num(2)?,
            poisoned: num(3)?,
            ldprecover: opt(4)?,
            ldprecover_star: opt(5)?,
            detection: opt(6)?,
            label: (!fields[7].is_empty()).then(|| fields[7].to_string()),
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct RecoveryDump<'a> {
    targets: Option<&'a [usize]>,
    ldprecover: Option<&'a RecoveryResult<f64>>,
    #[serde(rename = "ldprecover*")]
    ldprecover_star: Option<&'a RecoveryResult<f64>>,
}

/// Write `results.csv`, `summary.json` and, from the first trial,
/// `recovery.json` and `frequencies.csv` (plus `labels.csv` for labelled
/// data). Every file is written to a temporary name and renamed.
pub fn write_results(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut csv = String::from(RESULTS_HEADER);
    append_results(&mut csv, None, report);
    write_atomic(&dir.join("results.csv"), csv.as_bytes())?;
    write_json(&dir.join("summary.json"), &summary(report, None))?;
    if let Some(artifacts) = &report.artifacts {
        let dump = RecoveryDump {
            targets: artifacts.targets.as_deref(),
            ldprecover: artifacts.ldprecover.as_ref(),
            ldprecover_star: artifacts.ldprecover_star.as_ref(),
        };
        write_json(&dir.join("recovery.json"), &dump)?;
        let table = frequency_csv(artifacts, report.labels.as_deref());
        write_atomic(&dir.join("frequencies.csv"), table.as_bytes())?;
    }
    if let Some(labels) = &report.labels {
        let mut out = String::from("item,label\n");
        for (i, label) in labels.iter().enumerate() {
            let _ = writeln!(out, "{i},{label}");
        }
        write_atomic(&dir.join("labels.csv"), out.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    sweep_param: &'static str,
    points: Vec<Summary<'a>>,
}

/// Write the long-form `results.csv` covering the whole grid and a
/// `summary.json` with per-point means.
pub fn write_sweep_results(sweep: &SweepReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut csv = String::from(RESULTS_HEADER);
    for (value, report) in &sweep.points {
        append_results(&mut csv, Some((sweep.param, *value)), report);
    }
    write_atomic(&dir.join("results.csv"), csv.as_bytes())?;
    let summary = SweepSummary {
        sweep_param: sweep.param.name(),
        points: sweep
            .points
            .iter()
            .map(|(v, r)| summary(r, Some(*v)))
            .collect(),
    };
    write_json(&dir.join("summary.json"), &summary)
}
