//! Λ n-coalescent merger rates and a continuous-time simulator.
//!
//! With `b` blocks present, each specific set of `k` blocks merges at rate
//! `λ_{b,k} = ∫ x^{k-2} (1-x)^{b-k} Λ(dx)`. Rates are available as a
//! quadrature integral for any supported measure, as a log-gamma closed form
//! for beta measures, and as exact rationals for beta measures with integer
//! or half-integer parameters (the arcsine law among them) and for atoms.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::Exp1;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partitions::{BlockIndex, Partition};
use crate::port_trees::{catalan, double_factorial, factorial, port_count};
use crate::quadrature::JacobiRule;
use crate::trajectory::{PartitionPath, StateChange};
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Zero,
    One,
}

/// A finite measure on `[0, 1]`.
#[derive(Clone)]
pub enum LambdaMeasure {
    /// The beta(a, b) probability law.
    Beta { a: f64, b: f64 },
    /// `weight` times a Dirac mass at an endpoint.
    PointMass { location: Endpoint, weight: f64 },
    /// `mass` times the normalized density `x^p (1-x)^q h(x)`, `h` smooth.
    Density {
        p: f64,
        q: f64,
        h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        mass: f64,
    },
}

impl fmt::Debug for LambdaMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Beta { a, b } => write!(f, "Beta({a}, {b})"),
            Self::PointMass { location, weight } => write!(f, "PointMass({location:?}, {weight})"),
            Self::Density { p, q, mass, .. } => write!(f, "Density(p={p}, q={q}, mass={mass})"),
        }
    }
}

impl LambdaMeasure {
    pub fn arcsine() -> Self {
        Self::Beta { a: 0.5, b: 0.5 }
    }

    /// Bolthausen-Sznitman.
    pub fn uniform() -> Self {
        Self::Beta { a: 1.0, b: 1.0 }
    }

    pub fn kingman() -> Self {
        Self::PointMass {
            location: Endpoint::Zero,
            weight: 1.0,
        }
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        let m = Self::Beta { a, b };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            Self::Beta { a, b } if pos(a) && pos(b) => Ok(()),
            Self::Beta { a, b } => Err(Error::InvalidMeasure(format!(
                "beta parameters must be positive, got ({a}, {b})"
            ))),
            Self::PointMass { weight, .. } if pos(weight) => Ok(()),
            Self::PointMass { weight, .. } => Err(Error::InvalidMeasure(format!(
                "atom weight must be positive, got {weight}"
            ))),
            Self::Density { p, q, mass, .. } => {
                if !(p > -1.0 && q > -1.0) {
                    Err(Error::InvalidMeasure(format!(
                        "density x^{p}(1-x)^{q} is not integrable"
                    )))
                } else if !pos(mass) {
                    Err(Error::InvalidMeasure(format!("mass must be positive, got {mass}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Twice the beta parameters, when both are integers or half-integers.
    pub fn half_integer_params(&self) -> Option<(u64, u64)> {
        let twice = |x: f64| {
            let t = (2.0 * x).round();
            ((2.0 * x - t).abs() < 1e-12 && t >= 1.0).then_some(t as u64)
        };
        match *self {
            Self::Beta { a, b } => Some((twice(a)?, twice(b)?)),
            _ => None,
        }
    }

    /// Whether rates of this measure are computed in exact arithmetic.
    pub fn is_exact(&self) -> bool {
        matches!(self, Self::PointMass { .. }) || self.half_integer_params().is_some()
    }
}

impl FromStr for LambdaMeasure {
    type Err = Error;

    /// `arcsine | kingman | uniform | beta:a,b`
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "arcsine" => Ok(Self::arcsine()),
            "kingman" => Ok(Self::kingman()),
            "uniform" => Ok(Self::uniform()),
            other => {
                let bad = || Error::InvalidMeasure(format!("unrecognized measure `{other}`"));
                let params = other.strip_prefix("beta:").ok_or_else(bad)?;
                let (a, b) = params.split_once(',').ok_or_else(bad)?;
                let a: f64 = a.trim().parse().map_err(|_| bad())?;
                let b: f64 = b.trim().parse().map_err(|_| bad())?;
                Self::beta(a, b)
            }
        }
    }
}

impl fmt::Display for LambdaMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Beta { a, b } => write!(f, "beta:{a},{b}"),
            Self::PointMass { location: Endpoint::Zero, weight } => write!(f, "atom0:{weight}"),
            Self::PointMass { location: Endpoint::One, weight } => write!(f, "atom1:{weight}"),
            Self::Density { p, q, mass, .. } => write!(f, "density:{p},{q},{mass}"),
        }
    }
}

fn check_range(b: usize, k: usize) -> Result<()> {
    if k < 2 || k > b {
        return Err(Error::RateRange { b, k });
    }
    Ok(())
}

/// Quadrature size used for rows up to `b`; exact for beta measures.
fn rule_size(b: usize) -> usize {
    (b / 2 + 16).max(40)
}

fn atom_rate(location: Endpoint, b: usize, k: usize) -> bool {
    match location {
        Endpoint::Zero => k == 2,
        Endpoint::One => k == b,
    }
}

/// `∫ x^{k-2} (1-x)^{b-k} Λ(dx)` by Gauss-Jacobi quadrature matched to the
/// measure's endpoint exponents (atoms are evaluated directly).
pub fn rate_integral(b: usize, k: usize, measure: &LambdaMeasure) -> Result<f64> {
    check_range(b, k)?;
    measure.validate()?;
    let (p, q) = match *measure {
        LambdaMeasure::PointMass { location, weight } => {
            return Ok(if atom_rate(location, b, k) { weight } else { 0.0 });
        }
        LambdaMeasure::Beta { a, b } => (a - 1.0, b - 1.0),
        LambdaMeasure::Density { p, q, .. } => (p, q),
    };
    let rule = JacobiRule::new(rule_size(b), p, q)?;
    Ok(integral_with_rule(&rule, b, k, measure))
}

fn integral_with_rule(rule: &JacobiRule, b: usize, k: usize, measure: &LambdaMeasure) -> f64 {
    let f = |x: f64| x.powi(k as i32 - 2) * (1.0 - x).powi((b - k) as i32);
    match measure {
        LambdaMeasure::Beta { .. } => rule.expect(f),
        LambdaMeasure::Density { h, mass, .. } => {
            let norm = rule.expect(|x| h(x));
            mass * rule.expect(|x| h(x) * f(x)) / norm
        }
        LambdaMeasure::PointMass { .. } => unreachable!("atoms handled by caller"),
    }
}

fn ln_beta(x: f64, y: f64) -> f64 {
    ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
}

/// `B(b-k+β, k-2+a) / B(a, β)`.
pub fn rate_beta_closed(b: usize, k: usize, a: f64, beta: f64) -> Result<f64> {
    check_range(b, k)?;
    LambdaMeasure::Beta { a, b: beta }.validate()?;
    Ok((ln_beta((b - k) as f64 + beta, (k - 2) as f64 + a) - ln_beta(a, beta)).exp())
}

/// `Γ(m/2)` as `coef * sqrt(π)^pi_power`.
struct HalfGamma {
    coef: Rational,
    pi_power: i32,
}

fn half_gamma(twice: u64) -> HalfGamma {
    debug_assert!(twice >= 1);
    if twice % 2 == 0 {
        HalfGamma {
            coef: Rational::from_integer(factorial(twice / 2 - 1).into()),
            pi_power: 0,
        }
    } else {
        // Γ(n + 1/2) = sqrt(π) (2n-1)!! / 2^n with n = (twice-1)/2
        let n = (twice - 1) / 2;
        let num: BigInt = double_factorial(2 * n as i64 - 1).expect("n >= 0").into();
        HalfGamma {
            coef: Rational::new(num, BigInt::one() << n),
            pi_power: 1,
        }
    }
}

fn half_beta(x2: u64, y2: u64) -> HalfGamma {
    let (gx, gy, gxy) = (half_gamma(x2), half_gamma(y2), half_gamma(x2 + y2));
    HalfGamma {
        coef: gx.coef * gy.coef / gxy.coef,
        pi_power: gx.pi_power + gy.pi_power - gxy.pi_power,
    }
}

/// Exact beta(a, β) rate for `a = a2/2`, `β = b2/2`.
pub fn rate_beta_rational(b: usize, k: usize, a2: u64, b2: u64) -> Result<Rational> {
    check_range(b, k)?;
    if a2 == 0 || b2 == 0 {
        return Err(Error::InvalidMeasure("beta parameters must be positive".into()));
    }
    let num = half_beta(2 * (b - k) as u64 + b2, 2 * (k - 2) as u64 + a2);
    let den = half_beta(a2, b2);
    debug_assert_eq!(num.pi_power, den.pi_power, "powers of π cancel");
    Ok(num.coef / den.coef)
}

/// Arcsine rate `(2k-5)!! (2(b-k)-1)!! / (2^{b-2} (b-2)!)`.
pub fn rate_arcsine_rational(b: usize, k: usize) -> Result<Rational> {
    check_range(b, k)?;
    let num = double_factorial(2 * k as i64 - 5)? * double_factorial(2 * (b - k) as i64 - 1)?;
    let den = (BigUint::one() << (b - 2)) * factorial(b as u64 - 2);
    Ok(Rational::new(num.into(), den.into()))
}

/// Rate of a specific `k`-merger in the lifting chain from `b` singletons:
/// `|𝔓_{b-k+1}| |𝔓_{k-1}| / |𝔓_b|`.
pub fn lifted_rate_rational(b: usize, k: usize) -> Result<Rational> {
    check_range(b, k)?;
    let num = port_count((b - k + 1) as u64)? * port_count((k - 1) as u64)?;
    Ok(Rational::new(num.into(), port_count(b as u64)?.into()))
}

/// Time-change factor `2^{b-2} (b-2)! / |𝔓_b|` between the lifted chain
/// and the arcsine coalescent in a state with `b` blocks.
pub fn arcsine_time_change(b: usize) -> Result<Rational> {
    if b < 2 {
        return Err(Error::RateRange { b, k: 2 });
    }
    let num = (BigUint::one() << (b - 2)) * factorial(b as u64 - 2);
    Ok(Rational::new(num.into(), port_count(b as u64)?.into()))
}

/// Closed forms printed alongside the rate formulas; kept only so the
/// diagnostic can compare them with the normative values.
pub mod display_forms {
    use super::*;

    /// `(k-1)! (b-k+1)! / 4^{b-2} · C_{k-2} C_{b-k}`.
    pub fn arcsine_rate_catalan_form(b: usize, k: usize) -> Result<Rational> {
        check_range(b, k)?;
        let num = factorial(k as u64 - 1)
            * factorial((b - k + 1) as u64)
            * catalan(k as u64 - 2)
            * catalan((b - k) as u64);
        Ok(Rational::new(num.into(), (BigInt::one() << (2 * (b - 2))).into()))
    }

    /// `1 / (2 (b-1) b C_{b-1})`.
    pub fn time_change_catalan_form(b: usize) -> Result<Rational> {
        if b < 2 {
            return Err(Error::RateRange { b, k: 2 });
        }
        let den = BigUint::from(2 * (b - 1) * b) * catalan(b as u64 - 1);
        Ok(Rational::new(BigInt::one(), den.into()))
    }

    /// `(b-1)! (b-2)! / (2 (2(b-1))!)`.
    pub fn time_change_factorial_form(b: usize) -> Result<Rational> {
        if b < 2 {
            return Err(Error::RateRange { b, k: 2 });
        }
        let num = factorial(b as u64 - 1) * factorial(b as u64 - 2);
        let den = BigUint::from(2u32) * factorial(2 * (b as u64 - 1));
        Ok(Rational::new(num.into(), den.into()))
    }
}

pub fn binom(n: usize, k: usize) -> BigUint {
    binomial(BigUint::from(n), BigUint::from(k))
}

/// Merger-size law of the jump chain from `b` blocks:
/// `P(k) ∝ C(b, k) λ_{b,k}`, for `k = 2..=b`. `row[k - 2] = λ_{b,k}`.
pub fn merger_size_pmf_exact(b: usize, row: &[Rational]) -> Result<Vec<Rational>> {
    if b < 2 || row.len() != b - 1 {
        return Err(Error::RateRange { b, k: row.len() + 1 });
    }
    let weights: Vec<Rational> = row
        .iter()
        .enumerate()
        .map(|(i, r)| r * Rational::from_integer(binom(b, i + 2).into()))
        .collect();
    let total: Rational = weights.iter().sum();
    if total.is_zero() {
        return Err(Error::ZeroRates(b));
    }
    Ok(weights.into_iter().map(|w| w / &total).collect())
}

/// Floating-point counterpart of [`merger_size_pmf_exact`].
pub fn merger_size_pmf(b: usize, row: &[f64]) -> Result<Vec<f64>> {
    if b < 2 || row.len() != b - 1 {
        return Err(Error::RateRange { b, k: row.len() + 1 });
    }
    let weights: Vec<f64> = row
        .iter()
        .enumerate()
        .map(|(i, &r)| if r == 0.0 { 0.0 } else { (ln_binom(b, i + 2) + r.ln()).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroRates(b));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateValue {
    Exact(Rational),
    Approx { value: f64, error: f64 },
}

impl RateValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            Self::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Self::Approx { value, .. } => *value,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Self::Exact(r) => Some(r),
            Self::Approx { .. } => None,
        }
    }
}

/// Rates `λ_{b,k}` for `2 <= k <= b <= b_max`.
#[derive(Clone, Debug)]
pub struct RateTable {
    measure: LambdaMeasure,
    b_max: usize,
    /// `rows[b - 2][k - 2]`
    rows: Vec<Vec<RateValue>>,
}

impl RateTable {
    /// Exact entries when the measure allows, otherwise floats with an
    /// error estimate (log-gamma closed form for beta, two quadrature sizes
    /// for densities).
    pub fn build(measure: &LambdaMeasure, b_max: usize) -> Result<Self> {
        measure.validate()?;
        let exact = measure.half_integer_params();
        let rule = match measure {
            LambdaMeasure::Density { p, q, .. } => Some((
                JacobiRule::new(rule_size(b_max), *p, *q)?,
                JacobiRule::new(rule_size(b_max) + 8, *p, *q)?,
            )),
            _ => None,
        };
        let mut rows = Vec::with_capacity(b_max.saturating_sub(1));
        for b in 2..=b_max {
            let mut row = Vec::with_capacity(b - 1);
            for k in 2..=b {
                let v = match (measure, exact) {
                    (_, Some((a2, b2))) => RateValue::Exact(rate_beta_rational(b, k, a2, b2)?),
                    (LambdaMeasure::PointMass { location, weight }, _) => RateValue::Exact(
                        if atom_rate(*location, b, k) {
                            Rational::from_float(*weight).expect("finite weight")
                        } else {
                            Rational::zero()
                        },
                    ),
                    (LambdaMeasure::Beta { a, b: beta }, None) => {
                        let value = rate_beta_closed(b, k, *a, *beta)?;
                        RateValue::Approx {
                            value,
                            error: value * 1e-12,
                        }
                    }
                    (LambdaMeasure::Density { .. }, None) => {
                        let (r1, r2) = rule.as_ref().expect("density rule");
                        let v1 = integral_with_rule(r1, b, k, measure);
                        let v2 = integral_with_rule(r2, b, k, measure);
                        RateValue::Approx {
                            value: v2,
                            error: (v2 - v1).abs(),
                        }
                    }
                };
                row.push(v);
            }
            rows.push(row);
        }
        Ok(Self {
            measure: measure.clone(),
            b_max,
            rows,
        })
    }

    pub fn measure(&self) -> &LambdaMeasure {
        &self.measure
    }

    pub fn b_max(&self) -> usize {
        self.b_max
    }

    pub fn is_exact(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.exact().is_some())
    }

    pub fn get(&self, b: usize, k: usize) -> Result<&RateValue> {
        check_range(b, k)?;
        self.rows
            .get(b - 2)
            .and_then(|r| r.get(k - 2))
            .ok_or(Error::RateRange { b, k })
    }

    pub fn row(&self, b: usize) -> Result<&[RateValue]> {
        self.rows
            .get(b.wrapping_sub(2))
            .map(Vec::as_slice)
            .ok_or(Error::RateRange { b, k: 2 })
    }

    pub fn row_f64(&self, b: usize) -> Result<Vec<f64>> {
        Ok(self.row(b)?.iter().map(RateValue::to_f64).collect())
    }

    pub fn row_exact(&self, b: usize) -> Result<Option<Vec<Rational>>> {
        Ok(self
            .row(b)?
            .iter()
            .map(|v| v.exact().cloned())
            .collect::<Option<Vec<Rational>>>())
    }

    /// CSV with columns `b,k,exact,float`; `exact` is `p/q` or empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "b,k,exact,float")?;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let exact = v.exact().map(|r| r.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{}", i + 2, j + 2, exact, v.to_f64())?;
            }
        }
        Ok(())
    }
}

/// Jump-chain data for simulating from up to `n` blocks.
#[derive(Clone, Debug)]
pub struct CoalescentSimulator {
    /// `total_rate[b - 2]`
    total_rate: Vec<f64>,
    /// cumulative merger-size law, `cdf[b - 2][k - 2]`
    cdf: Vec<Vec<f64>>,
    n: usize,
}

impl CoalescentSimulator {
    pub fn new(measure: &LambdaMeasure, n: usize) -> Result<Self> {
        let table = RateTable::build(measure, n.max(2))?;
        Self::from_table(&table, n)
    }

    pub fn from_table(table: &RateTable, n: usize) -> Result<Self> {
        let mut total_rate = Vec::new();
        let mut cdf = Vec::new();
        for b in 2..=n.max(2) {
            let row = table.row_f64(b)?;
            let total: f64 = row
                .iter()
                .enumerate()
                .filter(|(_, &r)| r > 0.0)
                .map(|(i, &r)| (ln_binom(b, i + 2) + r.ln()).exp())
                .sum();
            let pmf = merger_size_pmf(b, &row)?;
            let mut acc = 0.0;
            cdf.push(
                pmf.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect(),
            );
            total_rate.push(total);
        }
        Ok(Self { total_rate, cdf, n })
    }

    /// Total jump rate with `b` blocks.
    pub fn total_rate(&self, b: usize) -> f64 {
        self.total_rate[b - 2]
    }

    /// Runs the coalescent from `Δ_n` until absorption or `horizon`.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R, horizon: Option<f64>) -> PartitionPath {
        let initial = Partition::discrete(self.n as u32).expect("n >= 1");
        let mut path = PartitionPath::new(initial.clone());
        let mut current = initial;
        let mut t = 0.0;
        while current.num_blocks() > 1 {
            let b = current.num_blocks();
            let e: f64 = rng.sample(Exp1);
            t += e / self.total_rate(b);
            if horizon.is_some_and(|h| t > h) {
                break;
            }
            let u: f64 = rng.random();
            let cdf = &self.cdf[b - 2];
            let k = 2 + cdf.partition_point(|&c| c <= u).min(b - 2);
            let mut chosen = rand::seq::index::sample(rng, b, k).into_vec();
            chosen.sort_unstable();
            let merged: Vec<u32> = chosen.iter().map(|&i| current.blocks()[i][0]).collect();
            let idx: Vec<BlockIndex> = chosen.into_iter().map(BlockIndex).collect();
            current = current.merge(&idx).expect("distinct in-range blocks");
            path.changes.push(StateChange { time: t, merged });
        }
        path
    }
}

/// Simulates the Λ n-coalescent from `Δ_n`.
pub fn simulate_lambda_coalescent<R: Rng + ?Sized>(
    n: usize,
    measure: &LambdaMeasure,
    rng: &mut R,
    horizon: Option<f64>,
) -> Result<PartitionPath> {
    if n == 0 {
        return Err(Error::ZeroSize);
    }
    Ok(CoalescentSimulator::new(measure, n)?.simulate(rng, horizon))
}
