//! Empirical laws, distances, and the experiment harness that checks the
//! simulators against exact oracles and closed forms.
//!
//! Every Monte Carlo replicate draws from its own ChaCha8 stream, derived
//! from the master seed and the replicate index, and per-replicate results
//! are combined in replicate order. Reports are therefore identical for any
//! worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::coalescent::{
    arcsine_time_change, binom, display_forms, lifted_rate_rational, merger_size_pmf,
    merger_size_pmf_exact, rate_arcsine_rational, rate_beta_closed, rate_beta_rational,
    rate_integral, CoalescentSimulator, LambdaMeasure, RateTable,
};
use crate::crp_gem::{block_one_jump_log, crp_eppf_exact, root_partition, sample_gem_sticks};
use crate::error::{Error, Result};
use crate::exact_oracle::{
    exact_first_jump_law, exact_first_jump_sizes, exact_first_transition, exact_root_partition_law,
    verify_lemma1, MAX_EVENT_N,
};
use crate::lifting::{simulate_lift_chain, LiftChain};
use crate::partitions::Partition;
use crate::port_trees::{
    enumerate_ports, factorial, for_each_port, port_count, port_count_via_catalan, sample_lpat_n,
    DEFAULT_ENUMERATION_CAP,
};
use crate::trajectory::{apply, StateChange};
use crate::Rational;

/// Normalized frequencies of the keys in `samples`.
pub fn empirical_pmf<K: Ord>(samples: impl IntoIterator<Item = K>) -> Result<BTreeMap<K, f64>> {
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    let mut total = 0u64;
    for k in samples {
        *counts.entry(k).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptySample);
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect())
}

/// Half the L1 distance; keys missing from one side count as zero.
pub fn tv_distance<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, a) in p {
        sum += (a - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, b) in q {
        if !p.contains_key(k) {
            sum += b.abs();
        }
    }
    (sum / 2.0).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Asymptotic p-value of a KS statistic `d` from `n` points, with
/// Stephens' small-sample correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200u32 {
        let term = (-2.0 * f64::from(k * k) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Always `p/q`, also for integers.
pub fn fraction_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn frac(p: u64, q: u64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Generator family, master seed, and how replicate streams are derived.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RngSpec {
    pub algorithm: &'static str,
    pub seed: u64,
    pub substream: &'static str,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            algorithm: "ChaCha8Rng (rand_chacha 0.9)",
            seed,
            substream: "seed_from_u64(seed), set_stream((component << 48) | replicate)",
        }
    }

    /// Generator for one replicate of one simulated component.
    pub fn rng(&self, component: u64, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((component << 48) | replicate);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Lemma1,
    RatesExact,
    LpatUniformity,
    FirstMergerSize,
    JumpChainEquality,
    CrpLaw,
    GemMoments,
    BlockOnePoisson,
    PaperCheck,
    PortCount,
    RateFormulas,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Self::Lemma1,
        Self::RatesExact,
        Self::LpatUniformity,
        Self::FirstMergerSize,
        Self::JumpChainEquality,
        Self::CrpLaw,
        Self::GemMoments,
        Self::BlockOnePoisson,
        Self::PaperCheck,
        Self::PortCount,
        Self::RateFormulas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lemma1 => "lemma1",
            Self::RatesExact => "rates-exact",
            Self::LpatUniformity => "lpat-uniformity",
            Self::FirstMergerSize => "first-merger-size",
            Self::JumpChainEquality => "jump-chain-equality",
            Self::CrpLaw => "crp-law",
            Self::GemMoments => "gem-moments",
            Self::BlockOnePoisson => "block-one-poisson",
            Self::PaperCheck => "paper-check",
            Self::PortCount => "port-count",
            Self::RateFormulas => "rate-formulas",
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            Self::Lemma1 => 5,
            Self::RatesExact => 7,
            Self::LpatUniformity | Self::FirstMergerSize => 4,
            Self::JumpChainEquality | Self::PaperCheck => 6,
            Self::CrpLaw | Self::PortCount => 8,
            Self::GemMoments => 2,
            Self::BlockOnePoisson => 50,
            Self::RateFormulas => 12,
        }
    }

    pub fn default_reps(self) -> u64 {
        match self {
            Self::LpatUniformity | Self::CrpLaw => 1_000_000,
            Self::FirstMergerSize | Self::JumpChainEquality | Self::GemMoments => 100_000,
            Self::BlockOnePoisson => 10_000,
            _ => 1,
        }
    }

    /// Whether the experiment draws random samples.
    pub fn is_monte_carlo(self) -> bool {
        matches!(
            self,
            Self::LpatUniformity
                | Self::FirstMergerSize
                | Self::JumpChainEquality
                | Self::CrpLaw
                | Self::GemMoments
                | Self::BlockOnePoisson
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

fn serialize_display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    #[serde(serialize_with = "serialize_display")]
    pub lambda: LambdaMeasure,
    pub reps: u64,
    pub seed: u64,
    /// Carried for completeness; every current experiment needs whole
    /// trajectories or first jumps and ignores it.
    pub horizon: Option<f64>,
    /// Worker threads; `None` uses the global pool. Never affects output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for `experiment`: seed 0 and the arcsine measure.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            n: experiment.default_n(),
            lambda: LambdaMeasure::arcsine(),
            reps: experiment.default_reps(),
            seed: 0,
            horizon: None,
            threads: None,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Domain("replicate count must be at least 1".into()));
        }
        if self.reps >= 1 << 48 {
            return Err(Error::Domain("replicate count must be below 2^48".into()));
        }
        self.lambda.validate()
    }

    pub fn rng_spec(&self) -> RngSpec {
        RngSpec::new(self.seed)
    }
}

/// One outcome of a compared law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub key: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    pub count: u64,
    pub empirical: f64,
    /// Counts of the second sample in a two-sample comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_count: Option<u64>,
    pub z: Option<f64>,
}

/// A scalar summary compared with its target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub pass: bool,
}

impl Statistic {
    fn info(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            expected_exact: None,
            expected: None,
            std_error: None,
            z: None,
            threshold: None,
            pass: true,
        }
    }

    /// Passes when `value` is within `sigmas` standard errors of `expected`.
    fn mean_check(name: &str, value: f64, expected: &Rational, std_error: f64, sigmas: f64) -> Self {
        let e = to_f64(expected);
        let z = (value - e) / std_error;
        Self {
            name: name.into(),
            value,
            expected_exact: Some(fraction_string(expected)),
            expected: Some(e),
            std_error: Some(std_error),
            z: Some(z),
            threshold: Some(sigmas),
            pass: z.abs() <= sigmas,
        }
    }

    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            threshold: Some(threshold),
            pass: value <= threshold,
            ..Self::info(name, value)
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            threshold: Some(threshold),
            pass: value >= threshold,
            ..Self::info(name, value)
        }
    }
}

/// An exact comparison. When `predicted_ratio` is set the check passes if
/// `actual / expected` equals it, otherwise if the two values are equal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactCheck {
    pub label: String,
    pub expected: String,
    pub actual: String,
    pub expected_f64: f64,
    pub actual_f64: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_ratio: Option<String>,
    pub pass: bool,
}

impl ExactCheck {
    fn equality(label: impl Into<String>, expected: &Rational, actual: &Rational) -> Self {
        Self {
            label: label.into(),
            expected: fraction_string(expected),
            actual: fraction_string(actual),
            expected_f64: to_f64(expected),
            actual_f64: to_f64(actual),
            ratio: None,
            predicted_ratio: None,
            pass: expected == actual,
        }
    }

    fn ratio(label: impl Into<String>, expected: &Rational, actual: &Rational, predicted: &Rational) -> Self {
        let ratio = actual / expected;
        Self {
            pass: ratio == *predicted,
            ratio: Some(fraction_string(&ratio)),
            predicted_ratio: Some(fraction_string(predicted)),
            ..Self::equality(label, expected, actual)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub experiment: Experiment,
    pub check: String,
    pub n: usize,
    /// Samples drawn per compared population; 0 for exact checks.
    pub reps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<RngSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<Cell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv: Option<f64>,
    /// TV bound reached when every cell sits at 3 standard deviations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub statistics: Vec<Statistic>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub exact_checks: Vec<ExactCheck>,
    pub pass: bool,
}

impl ComparisonReport {
    fn exact(experiment: Experiment, check: &str, n: usize, exact_checks: Vec<ExactCheck>) -> Self {
        let pass = exact_checks.iter().all(|c| c.pass);
        Self {
            experiment,
            check: check.into(),
            n,
            reps: 0,
            rng: None,
            cells: Vec::new(),
            tv: None,
            threshold: None,
            statistics: Vec::new(),
            exact_checks,
            pass,
        }
    }

    fn from_statistics(experiment: Experiment, check: &str, n: usize, statistics: Vec<Statistic>) -> Self {
        let pass = statistics.iter().all(|s| s.pass);
        Self {
            statistics,
            pass,
            ..Self::exact(experiment, check, n, Vec::new())
        }
    }

    /// Recomputes `pass` from the threshold, statistics and exact checks.
    fn settle(mut self) -> Self {
        let tv_ok = match (self.tv, self.threshold) {
            (Some(tv), Some(th)) => tv <= th,
            _ => true,
        };
        self.pass = tv_ok && self.statistics.iter().all(|s| s.pass) && self.exact_checks.iter().all(|c| c.pass);
        self
    }

    pub fn write_json<W: Write>(&self, w: &mut W) -> io::Result<()> {
        serde_json::to_writer(&mut *w, self)?;
        writeln!(w)
    }

    /// One CSV row per cell, statistic and exact check, then a summary row.
    pub fn csv_rows(&self) -> Vec<CsvRow<'_>> {
        let base = CsvRow {
            experiment: self.experiment.name(),
            check: &self.check,
            row: "",
            key: String::new(),
            expected_exact: None,
            expected: None,
            actual_exact: None,
            actual: None,
            count: None,
            reference_count: None,
            z: None,
            threshold: None,
            pass: None,
        };
        let mut rows = Vec::new();
        for c in &self.cells {
            rows.push(CsvRow {
                row: "cell",
                key: c.key.clone(),
                expected_exact: c.expected_exact.clone(),
                expected: c.expected,
                actual: Some(c.empirical),
                count: Some(c.count),
                reference_count: c.reference_count,
                z: c.z,
                ..base.clone()
            });
        }
        for st in &self.statistics {
            rows.push(CsvRow {
                row: "statistic",
                key: st.name.clone(),
                expected_exact: st.expected_exact.clone(),
                expected: st.expected,
                actual: Some(st.value),
                z: st.z,
                threshold: st.threshold,
                pass: Some(st.pass),
                ..base.clone()
            });
        }
        for c in &self.exact_checks {
            rows.push(CsvRow {
                row: "exact",
                key: c.label.clone(),
                expected_exact: Some(c.expected.clone()),
                expected: Some(c.expected_f64),
                actual_exact: Some(c.actual.clone()),
                actual: Some(c.actual_f64),
                pass: Some(c.pass),
                ..base.clone()
            });
        }
        rows.push(CsvRow {
            row: "summary",
            key: "tv".into(),
            actual: self.tv,
            count: Some(self.reps),
            threshold: self.threshold,
            pass: Some(self.pass),
            ..base
        });
        rows
    }
}

/// Flat CSV view of a report; see [`ComparisonReport::csv_rows`].
#[derive(Clone, Debug, Serialize)]
pub struct CsvRow<'a> {
    pub experiment: &'a str,
    pub check: &'a str,
    pub row: &'a str,
    pub key: String,
    pub expected_exact: Option<String>,
    pub expected: Option<f64>,
    pub actual_exact: Option<String>,
    pub actual: Option<f64>,
    pub count: Option<u64>,
    pub reference_count: Option<u64>,
    pub z: Option<f64>,
    pub threshold: Option<f64>,
    pub pass: Option<bool>,
}

/// Reference law: ordered outcomes with exact or approximate probabilities.
#[derive(Clone, Debug, Default)]
struct Law {
    cells: Vec<(String, Option<Rational>, f64)>,
}

impl Law {
    fn push_exact(&mut self, key: String, p: Rational) {
        let f = to_f64(&p);
        self.cells.push((key, Some(p), f));
    }

    fn push_approx(&mut self, key: String, p: f64) {
        self.cells.push((key, None, p));
    }

    fn uniform(keys: impl IntoIterator<Item = String>) -> Self {
        let keys: Vec<String> = keys.into_iter().collect();
        let p = frac(1, keys.len() as u64);
        let mut law = Self::default();
        for k in keys {
            law.push_exact(k, p.clone());
        }
        law
    }
}

type Counts = BTreeMap<String, u64>;

fn cell_template(law: Option<&Law>, keys: impl Iterator<Item = String>) -> Vec<(String, Option<Rational>, Option<f64>)> {
    let mut out: Vec<(String, Option<Rational>, Option<f64>)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(law) = law {
        for (k, e, p) in &law.cells {
            seen.insert(k.clone());
            out.push((k.clone(), e.clone(), Some(*p)));
        }
    }
    let mut extra: Vec<String> = keys.filter(|k| !seen.contains(k)).collect();
    extra.sort();
    extra.dedup();
    for k in extra {
        let zero = law.map(|_| (Some(Rational::zero()), Some(0.0)));
        let (e, p) = zero.unwrap_or((None, None));
        out.push((k, e, p));
    }
    out
}

fn one_sample(experiment: Experiment, check: &str, n: usize, rng: &RngSpec, law: &Law, counts: &Counts, reps: u64) -> ComparisonReport {
    let total = reps as f64;
    let mut cells = Vec::new();
    let mut l1 = 0.0;
    let mut bound = 0.0;
    for (key, exact, p) in cell_template(Some(law), counts.keys().cloned()) {
        let p = p.unwrap_or(0.0);
        let count = counts.get(&key).copied().unwrap_or(0);
        let empirical = count as f64 / total;
        let sd = (p * (1.0 - p) / total).sqrt();
        l1 += (empirical - p).abs();
        bound += 3.0 * sd;
        cells.push(Cell {
            key,
            expected_exact: exact.as_ref().map(fraction_string),
            expected: Some(p),
            count,
            empirical,
            reference_count: None,
            z: (sd > 0.0).then(|| (empirical - p) / sd),
        });
    }
    ComparisonReport {
        experiment,
        check: check.into(),
        n,
        reps,
        rng: Some(rng.clone()),
        cells,
        tv: Some((l1 / 2.0).clamp(0.0, 1.0)),
        threshold: Some((bound / 2.0).min(1.0)),
        statistics: Vec::new(),
        exact_checks: Vec::new(),
        pass: false,
    }
    .settle()
}

/// Compares two samples of equal size; `law`, if given, only annotates cells.
#[allow(clippy::too_many_arguments)]
fn two_sample(
    experiment: Experiment,
    check: &str,
    n: usize,
    rng: &RngSpec,
    law: Option<&Law>,
    a: &Counts,
    b: &Counts,
    reps: u64,
) -> ComparisonReport {
    let total = reps as f64;
    let mut cells = Vec::new();
    let mut l1 = 0.0;
    let mut bound = 0.0;
    let keys = a.keys().chain(b.keys()).cloned();
    for (key, exact, p) in cell_template(law, keys) {
        let ca = a.get(&key).copied().unwrap_or(0);
        let cb = b.get(&key).copied().unwrap_or(0);
        let (ea, eb) = (ca as f64 / total, cb as f64 / total);
        let pooled = p.unwrap_or((ea + eb) / 2.0);
        let sd = (2.0 * pooled * (1.0 - pooled) / total).sqrt();
        l1 += (ea - eb).abs();
        bound += 3.0 * sd;
        cells.push(Cell {
            key,
            expected_exact: exact.as_ref().map(fraction_string),
            expected: p,
            count: ca,
            empirical: ea,
            reference_count: Some(cb),
            z: (sd > 0.0).then(|| (ea - eb) / sd),
        });
    }
    ComparisonReport {
        experiment,
        check: check.into(),
        n,
        reps,
        rng: Some(rng.clone()),
        cells,
        tv: Some((l1 / 2.0).clamp(0.0, 1.0)),
        threshold: Some((bound / 2.0).min(1.0)),
        statistics: Vec::new(),
        exact_checks: Vec::new(),
        pass: false,
    }
    .settle()
}

fn tv_to_law(law: &Law, counts: &Counts, reps: u64) -> f64 {
    let p: BTreeMap<String, f64> = law.cells.iter().map(|(k, _, p)| (k.clone(), *p)).collect();
    let q: BTreeMap<String, f64> = counts.iter().map(|(k, &c)| (k.clone(), c as f64 / reps as f64)).collect();
    tv_distance(&p, &q)
}

/// Runs `reps` replicates, returning results in replicate order.
fn replicate<T: Send>(cfg: &ExperimentConfig, component: u64, f: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    let spec = cfg.rng_spec();
    (0..cfg.reps)
        .into_par_iter()
        .map(|r| f(&mut spec.rng(component, r)))
        .collect()
}

/// Counts the keys produced by `reps` replicates.
fn count_keys(cfg: &ExperimentConfig, component: u64, f: impl Fn(&mut ChaCha8Rng) -> String + Sync) -> Counts {
    let spec = cfg.rng_spec();
    (0..cfg.reps)
        .into_par_iter()
        .fold(Counts::new, |mut acc, r| {
            *acc.entry(f(&mut spec.rng(component, r))).or_default() += 1;
            acc
        })
        .reduce(Counts::new, |mut a, b| {
            for (k, c) in b {
                *a.entry(k).or_default() += c;
            }
            a
        })
}

fn check_size(n: usize, lo: usize, hi: usize) -> Result<()> {
    if n < lo || n > hi {
        return Err(Error::OracleRange { n, lo, hi });
    }
    Ok(())
}

/// Runs the configured experiment and returns its reports.
pub fn verify_suite(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    cfg.validate()?;
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Domain(e.to_string()))?
            .install(|| run(cfg)),
        None => run(cfg),
    }
}

fn run(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    match cfg.experiment {
        Experiment::Lemma1 => lemma1(cfg),
        Experiment::RatesExact => rates_exact(cfg),
        Experiment::LpatUniformity => lpat_uniformity(cfg),
        Experiment::FirstMergerSize => first_merger_size(cfg),
        Experiment::JumpChainEquality => jump_chain_equality(cfg),
        Experiment::CrpLaw => crp_law(cfg),
        Experiment::GemMoments => gem_moments(cfg),
        Experiment::BlockOnePoisson => block_one_poisson(cfg),
        Experiment::PaperCheck => paper_check(cfg),
        Experiment::PortCount => port_count_check(cfg),
        Experiment::RateFormulas => rate_formulas(cfg),
    }
}

fn lemma1(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    let report = verify_lemma1(cfg.n)?;
    let checks = report
        .laws
        .iter()
        .map(|law| {
            let target = frac(1, law.conditional.len() as u64);
            let worst = law
                .conditional
                .iter()
                .map(|(_, p)| p)
                .max_by(|a, b| (*a - &target).abs().cmp(&(*b - &target).abs()))
                .cloned()
                .unwrap_or_else(Rational::zero);
            let mut check = ExactCheck::equality(format!("given {}", law.label_set), &target, &worst);
            check.pass = law.uniform;
            check
        })
        .collect();
    Ok(vec![ComparisonReport::exact(cfg.experiment, "conditional-uniformity", cfg.n, checks)])
}

fn rates_exact(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 2, MAX_EVENT_N)?;
    let mut enumerated = Vec::new();
    let mut time_changed = Vec::new();
    for b in 2..=cfg.n {
        let ft = exact_first_transition(b)?;
        let c = arcsine_time_change(b)?;
        for k in 2..=b {
            let lifted = lifted_rate_rational(b, k)?;
            let got = ft.per_k.get(&k).cloned().unwrap_or_else(Rational::zero);
            let mut check = ExactCheck::equality(format!("n={b} k={k} enumerated"), &lifted, &got);
            check.pass &= ft.exchangeable;
            enumerated.push(check);
            let arc = rate_arcsine_rational(b, k)?;
            time_changed.push(ExactCheck::equality(
                format!("n={b} k={k} time-changed arcsine"),
                &lifted,
                &(&c * arc),
            ));
        }
    }
    Ok(vec![
        ComparisonReport::exact(cfg.experiment, "enumerated-vs-counts", cfg.n, enumerated),
        ComparisonReport::exact(cfg.experiment, "counts-vs-arcsine", cfg.n, time_changed),
    ])
}

fn port_count_check(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 1, DEFAULT_ENUMERATION_CAP)?;
    let mut checks = Vec::new();
    for m in 1..=cfg.n {
        let mut seen = std::collections::BTreeSet::new();
        for_each_port(&Partition::discrete(m as u32)?, DEFAULT_ENUMERATION_CAP, |t| {
            seen.insert(t.encode());
        })?;
        let expected = Rational::from_integer(port_count(m as u64)?.into());
        let distinct = Rational::from_integer(seen.len().into());
        checks.push(ExactCheck::equality(format!("n={m} distinct trees"), &expected, &distinct));
        let via = Rational::from_integer(port_count_via_catalan(m as u64)?.into());
        checks.push(ExactCheck::equality(format!("n={m} factorial-catalan form"), &expected, &via));
    }
    Ok(vec![ComparisonReport::exact(cfg.experiment, "port-count", cfg.n, checks)])
}

fn rate_formulas(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 2, 64)?;
    const PARAMS: [f64; 5] = [0.3, 0.5, 1.0, 1.5, 2.0];
    let mut integral_vs_closed = 0.0f64;
    let mut closed_vs_rational = 0.0f64;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
    for &a in &PARAMS {
        for &c in &PARAMS {
            let measure = LambdaMeasure::beta(a, c)?;
            for b in 2..=cfg.n {
                for k in 2..=b {
                    let closed = rate_beta_closed(b, k, a, c)?;
                    integral_vs_closed = integral_vs_closed.max(rel(rate_integral(b, k, &measure)?, closed));
                    if let Some((a2, c2)) = measure.half_integer_params() {
                        let exact = to_f64(&rate_beta_rational(b, k, a2, c2)?);
                        closed_vs_rational = closed_vs_rational.max(rel(closed, exact));
                    }
                }
            }
        }
    }
    for b in 2..=cfg.n {
        for k in 2..=b {
            let closed = rate_beta_closed(b, k, 0.5, 0.5)?;
            let exact = to_f64(&rate_arcsine_rational(b, k)?);
            closed_vs_rational = closed_vs_rational.max(rel(closed, exact));
        }
    }
    let accuracy = ComparisonReport::from_statistics(
        cfg.experiment,
        "float-agreement",
        cfg.n,
        vec![
            Statistic::at_most("max relative error, quadrature vs closed form", integral_vs_closed, 1e-9),
            Statistic::at_most("max relative error, closed form vs exact", closed_vs_rational, 1e-9),
        ],
    );

    // λ_{b,k} = λ_{b+1,k} + λ_{b+1,k+1} in exact arithmetic, b up to 2n
    let b_max = 2 * cfg.n;
    let mut checks = Vec::new();
    let half: Vec<u64> = PARAMS.iter().filter(|&&p| (p * 2.0).fract() == 0.0).map(|p| (p * 2.0) as u64).collect();
    for &a2 in &half {
        for &c2 in &half {
            let mut failures = 0u64;
            let mut total = 0u64;
            for b in 2..b_max {
                for k in 2..=b {
                    let lhs = rate_beta_rational(b, k, a2, c2)?;
                    let rhs = rate_beta_rational(b + 1, k, a2, c2)? + rate_beta_rational(b + 1, k + 1, a2, c2)?;
                    total += 1;
                    failures += u64::from(lhs != rhs);
                }
            }
            let mut check = ExactCheck::equality(
                format!("beta({}/2,{}/2) consistency b<{b_max}: failures of {total}", a2, c2),
                &Rational::zero(),
                &Rational::from_integer(failures.into()),
            );
            check.pass = failures == 0;
            checks.push(check);
        }
    }
    Ok(vec![
        accuracy,
        ComparisonReport::exact(cfg.experiment, "exact-consistency", b_max, checks),
    ])
}

fn lpat_uniformity(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 1, DEFAULT_ENUMERATION_CAP)?;
    let n = cfg.n;
    let spec = cfg.rng_spec();
    let pi = Partition::discrete(n as u32)?;
    let law = Law::uniform(enumerate_ports(&pi)?.iter().map(|t| t.encode()));
    let samples = replicate(cfg, 0, |rng| {
        let t = sample_lpat_n(n as u32, rng).expect("n >= 1");
        let restricted = (n > 1).then(|| t.restrict(n as u32 - 1).expect("n >= 2").encode());
        (t.encode(), restricted)
    });
    let mut counts = Counts::new();
    let mut restricted = Counts::new();
    for (full, r) in samples {
        *counts.entry(full).or_default() += 1;
        if let Some(r) = r {
            *restricted.entry(r).or_default() += 1;
        }
    }
    let mut out = vec![one_sample(cfg.experiment, "lpat", n, &spec, &law, &counts, cfg.reps)];
    if n > 1 {
        let sub = Partition::discrete(n as u32 - 1)?;
        let sub_law = Law::uniform(enumerate_ports(&sub)?.iter().map(|t| t.encode()));
        out.push(one_sample(cfg.experiment, "restriction", n, &spec, &sub_law, &restricted, cfg.reps));
    }
    Ok(out)
}

fn exact_arcsine_pmf(n: usize) -> Result<Vec<Rational>> {
    let row: Vec<Rational> = (2..=n).map(|k| rate_arcsine_rational(n, k)).collect::<Result<_>>()?;
    merger_size_pmf_exact(n, &row)
}

/// Merger-size law of the first jump of the Λ-coalescent from `n` blocks.
fn coalescent_size_law(measure: &LambdaMeasure, n: usize) -> Result<Law> {
    let table = RateTable::build(measure, n)?;
    let mut law = Law::default();
    match table.row_exact(n)? {
        Some(row) => {
            for (i, p) in merger_size_pmf_exact(n, &row)?.into_iter().enumerate() {
                law.push_exact((i + 2).to_string(), p);
            }
        }
        None => {
            for (i, p) in merger_size_pmf(n, &table.row_f64(n)?)?.into_iter().enumerate() {
                law.push_approx((i + 2).to_string(), p);
            }
        }
    }
    Ok(law)
}

/// First partition change of the lifting chain from an LPAT(n).
fn lifted_first_change(n: usize, rng: &mut ChaCha8Rng) -> StateChange {
    let tree = sample_lpat_n(n as u32, rng).expect("n >= 1");
    let mut chain = LiftChain::new(tree);
    let (event, outcome) = chain.next_change(rng).expect("n >= 2 is not absorbed");
    StateChange {
        time: event.time,
        merged: outcome.merged_minima,
    }
}

fn coalescent_first_change(sim: &CoalescentSimulator, rng: &mut ChaCha8Rng) -> StateChange {
    sim.simulate(rng, None)
        .changes
        .into_iter()
        .next()
        .expect("n >= 2 is not absorbed")
}

fn first_merger_size(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 2, 1 << 16)?;
    let n = cfg.n;
    let spec = cfg.rng_spec();
    let mut arcsine = Law::default();
    for (i, p) in exact_arcsine_pmf(n)?.into_iter().enumerate() {
        arcsine.push_exact((i + 2).to_string(), p);
    }
    let lifted = count_keys(cfg, 0, |rng| lifted_first_change(n, rng).k().to_string());
    let sim = CoalescentSimulator::new(&cfg.lambda, n)?;
    let coal = count_keys(cfg, 1, |rng| coalescent_first_change(&sim, rng).k().to_string());
    let coal_law = coalescent_size_law(&cfg.lambda, n)?;
    let mut out = vec![
        one_sample(cfg.experiment, "lifted-chain-vs-arcsine", n, &spec, &arcsine, &lifted, cfg.reps),
        one_sample(cfg.experiment, "lambda-coalescent", n, &spec, &coal_law, &coal, cfg.reps),
    ];
    if n <= MAX_EVENT_N {
        let mut exact = Law::default();
        for (k, p) in exact_first_jump_sizes(n)? {
            exact.push_exact(k.to_string(), p);
        }
        out.push(one_sample(cfg.experiment, "lifted-chain-vs-enumerated-first-jump", n, &spec, &exact, &lifted, cfg.reps));
    }
    Ok(out)
}

fn jump_chain_equality(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 2, 20)?;
    let n = cfg.n;
    let spec = cfg.rng_spec();
    let start = Partition::discrete(n as u32)?;
    // exact law: a given k-set merges with probability pmf(k) / C(n, k)
    let pmf = exact_arcsine_pmf(n)?;
    let mut law = Law::default();
    let mut sets: Vec<Vec<u32>> = (1u32..1 << n)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..n as u32).filter(|i| m >> i & 1 == 1).map(|i| i + 1).collect())
        .collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    for set in sets {
        let k = set.len();
        let p = &pmf[k - 2] / Rational::from_integer(binom(n, k).into());
        let key = apply(&start, &StateChange { time: 0.0, merged: set }).to_string();
        law.push_exact(key, p);
    }
    let key = |c: StateChange| apply(&start, &c).to_string();
    let lifted = count_keys(cfg, 0, |rng| key(lifted_first_change(n, rng)));
    let sim = CoalescentSimulator::new(&cfg.lambda, n)?;
    let coal = count_keys(cfg, 1, |rng| key(coalescent_first_change(&sim, rng)));
    let mut report = two_sample(cfg.experiment, "lifted-vs-coalescent", n, &spec, Some(&law), &lifted, &coal, cfg.reps);
    report.statistics = vec![
        Statistic::info("tv lifted chain to exact arcsine law", tv_to_law(&law, &lifted, cfg.reps)),
        Statistic::info(&format!("tv {} coalescent to exact arcsine law", cfg.lambda), tv_to_law(&law, &coal, cfg.reps)),
    ];
    let mut out = vec![report];
    if n <= MAX_EVENT_N {
        let table = exact_first_jump_law(n)?;
        let mut exact = Law::default();
        for (key, _, _) in &law.cells {
            exact.push_exact(key.clone(), table.get(key));
        }
        out.push(one_sample(cfg.experiment, "lifted-chain-vs-enumerated-first-jump", n, &spec, &exact, &lifted, cfg.reps));
    }
    Ok(out)
}

fn crp_law(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 2, 11)?;
    let n = cfg.n;
    let spec = cfg.rng_spec();
    let half = frac(1, 2);
    let eppf_law = |m: u32| -> Result<Vec<(Partition, Rational)>> {
        let ground: Vec<u32> = (1..=m).collect();
        Partition::all_of(&ground)
            .into_iter()
            .map(|p| {
                let e = crp_eppf_exact(&p, &half, &half)?;
                Ok((p, e))
            })
            .collect()
    };

    let mut checks = Vec::new();
    for m in 2..=n.min(MAX_EVENT_N) {
        let tree_law = exact_root_partition_law(m)?;
        let mut l1 = Rational::zero();
        let mut matched = Rational::zero();
        for (p, e) in eppf_law(m as u32 - 1)? {
            let key = p.relabel(|x| x + 1)?.to_string();
            let got = tree_law.get(&key);
            l1 += (&got - &e).abs();
            matched += got;
        }
        // mass the tree law puts outside the partitions of {2..m}
        l1 += Rational::one() - matched;
        checks.push(ExactCheck::equality(
            format!("n={m} exact tv to eppf on {} customers", m - 1),
            &Rational::zero(),
            &(l1 / Rational::from_integer(2.into())),
        ));
    }
    let exact = ComparisonReport::exact(cfg.experiment, "exact", n, checks);

    let mut law = Law::default();
    for (p, e) in eppf_law(n as u32 - 1)? {
        law.push_exact(p.to_string(), e);
    }
    let counts = count_keys(cfg, 0, |rng| {
        let t = sample_lpat_n(n as u32, rng).expect("n >= 2");
        let rp = root_partition(&t).expect("n >= 2");
        rp.relabel(|x| x - 1).expect("labels >= 2").to_string()
    });
    Ok(vec![
        exact,
        one_sample(cfg.experiment, "root-partition-vs-eppf", n, &spec, &law, &counts, cfg.reps),
    ])
}

fn gem_moments(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    let count = cfg.n.max(2);
    let draws = replicate(cfg, 0, |rng| {
        sample_gem_sticks(count, 0.5, 0.5, rng).expect("valid parameters").frequencies
    });
    // E[P_1] = (1-α)/(1+θ), E[P_2] = (1 - E[P_1]) (1-α)/(1+θ+α)
    let expected = [frac(1, 3), frac(1, 6)];
    let n = draws.len() as f64;
    let mut stats = Vec::new();
    for (i, e) in expected.iter().enumerate() {
        let mean = draws.iter().map(|d| d[i]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[i] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        stats.push(Statistic::mean_check(
            &format!("mean of P{}", i + 1),
            mean,
            e,
            (var / n).sqrt().max(f64::MIN_POSITIVE),
            3.0,
        ));
    }
    let mut report = ComparisonReport::from_statistics(cfg.experiment, "alpha=1/2 theta=1/2", cfg.n, stats);
    report.reps = cfg.reps;
    report.rng = Some(cfg.rng_spec());
    Ok(vec![report])
}

fn block_one_poisson(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 2, 1 << 16)?;
    let n = cfg.n;
    let gaps: Vec<f64> = replicate(cfg, 0, |rng| {
        let tree = sample_lpat_n(n as u32, rng).expect("n >= 1");
        let traj = simulate_lift_chain(&tree, rng, None, false);
        let mut last = 0.0;
        block_one_jump_log(&traj, n)
            .into_iter()
            .map(|(t, _)| {
                let gap = t - last;
                last = t;
                gap
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect();
    if gaps.is_empty() {
        return Err(Error::EmptySample);
    }
    let m = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / m;
    let d = ks_statistic(&gaps, |x| 1.0 - (-x).exp())?;
    let p = kolmogorov_pvalue(d, gaps.len());
    let mut report = ComparisonReport::from_statistics(
        cfg.experiment,
        "interarrival-vs-exp1",
        n,
        vec![
            Statistic::info("interarrival count", m),
            Statistic::mean_check("mean interarrival", mean, &Rational::one(), 1.0 / m.sqrt(), 3.0),
            Statistic::info("ks statistic", d),
            Statistic::at_least("ks p-value", p, 1e-3),
        ],
    );
    report.reps = cfg.reps;
    report.rng = Some(cfg.rng_spec());
    Ok(vec![report])
}

fn paper_check(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    check_size(cfg.n, 3, 64)?;
    let b_max = cfg.n.max(4);
    let mut rate = Vec::new();
    rate.push(ExactCheck::ratio(
        "witness b=4 k=3: catalan display vs gamma form",
        &rate_arcsine_rational(4, 3)?,
        &display_forms::arcsine_rate_catalan_form(4, 3)?,
        &Rational::from_integer(2.into()),
    ));
    for b in 2..=b_max {
        let predicted = Rational::from_integer(factorial(b as u64 - 2).into());
        for k in 2..=b {
            rate.push(ExactCheck::ratio(
                format!("b={b} k={k} catalan display factor (b-2)!"),
                &rate_arcsine_rational(b, k)?,
                &display_forms::arcsine_rate_catalan_form(b, k)?,
                &predicted,
            ));
        }
    }

    let mut time = Vec::new();
    let sixteenth = frac(1, 16);
    time.push(ExactCheck::ratio(
        "witness b=3: catalan display vs first form",
        &arcsine_time_change(3)?,
        &display_forms::time_change_catalan_form(3)?,
        &sixteenth,
    ));
    for b in 2..=b_max {
        let first = arcsine_time_change(b)?;
        let predicted = Rational::new(BigInt::one(), BigInt::one() << (2 * b - 2));
        time.push(ExactCheck::ratio(
            format!("b={b} catalan display factor 2^-(2b-2)"),
            &first,
            &display_forms::time_change_catalan_form(b)?,
            &predicted,
        ));
        time.push(ExactCheck::ratio(
            format!("b={b} factorial display factor 2^-(2b-2)"),
            &first,
            &display_forms::time_change_factorial_form(b)?,
            &predicted,
        ));
        for k in 2..=b {
            time.push(ExactCheck::equality(
                format!("b={b} k={k} lifted rate = first form x arcsine rate"),
                &lifted_rate_rational(b, k)?,
                &(&first * rate_arcsine_rational(b, k)?),
            ));
        }
    }
    Ok(vec![
        ComparisonReport::exact(cfg.experiment, "arcsine-rate-display", b_max, rate),
        ComparisonReport::exact(cfg.experiment, "time-change-display", b_max, time),
    ])
}

/// JSON lines, one report per line.
pub fn write_reports_json<W: Write>(w: &mut W, reports: &[ComparisonReport]) -> io::Result<()> {
    reports.iter().try_for_each(|r| r.write_json(w))
}

pub fn write_reports_csv<W: Write>(w: W, reports: &[ComparisonReport]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        for row in r.csv_rows() {
            out.serialize(row).map_err(io::Error::other)?;
        }
    }
    out.flush()
}
