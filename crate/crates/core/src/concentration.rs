//! Concentration inequalities as threshold evaluators, plus a Monte Carlo
//! validator that measures how often a sampled process breaks each bound.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandit::format_f64;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_delta<F: Scalar>(delta: F) -> Result<()> {
    if delta > F::zero() && delta < F::one() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: "delta",
            value: delta.to_f64().unwrap_or(f64::NAN),
            constraint: "0 < delta < 1",
        })
    }
}

fn domain<F: Scalar>(name: &'static str, value: F, constraint: &'static str) -> Error {
    Error::OutOfDomain {
        name,
        value: value.to_f64().unwrap_or(f64::NAN),
        constraint,
    }
}

/// Chernoff deviation radius `C max(1, sqrt(mu))` for a sum of independent
/// `[0,1]` variables with mean `mu`.
pub fn chernoff_radius<F: Scalar>(mu: F, c: F) -> Result<F> {
    if !(c > F::one()) {
        return Err(domain("C", c, "C > 1"));
    }
    if !(mu >= F::zero()) {
        return Err(domain("mu", mu, "mu >= 0"));
    }
    Ok(c * F::one().max(mu.sqrt()))
}

/// Probability that the Chernoff radius is exceeded: `2 e^{-C/3}`.
pub fn chernoff_failure_probability<F: Scalar>(c: F) -> F {
    F::lit(2.0) * (-c / F::lit(3.0)).exp()
}

/// Radius of the intermediate Chernoff form, `b max(b, sqrt(mu))`, taken with
/// `b = sqrt(C)`; never larger than [`chernoff_radius`].
pub fn chernoff_intermediate_radius<F: Scalar>(mu: F, c: F) -> Result<F> {
    chernoff_radius(mu, c)?;
    let b = c.sqrt();
    Ok(b * b.max(mu.sqrt()))
}

/// Hoeffding–Azuma radius, flagged when the range list is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzumaRadius<F> {
    pub radius: F,
    pub vacuous: bool,
}

/// `sqrt(log(1/delta)/2 * sum c_t^2)`.
pub fn hoeffding_azuma_radius<F: Scalar>(ranges: &[F], delta: F) -> Result<AzumaRadius<F>> {
    check_delta(delta)?;
    if let Some(&c) = ranges.iter().find(|&&c| !(c > F::zero())) {
        return Err(domain("c_t", c, "c_t > 0"));
    }
    let sum_sq = ranges.iter().fold(F::zero(), |acc, &c| acc + c * c);
    Ok(AzumaRadius {
        radius: ((-delta.ln()) / F::lit(2.0) * sum_sq).sqrt(),
        vacuous: ranges.is_empty(),
    })
}

/// Freedman-style Bernstein radius for martingales on the event `V_n <= v`:
/// `sqrt(2 v log(1/delta)) + b log(1/delta) / 3`.
pub fn bernstein_martingale_radius<F: Scalar>(v: F, b: F, delta: F) -> Result<F> {
    check_delta(delta)?;
    if !(v >= F::zero()) {
        return Err(domain("V", v, "V >= 0"));
    }
    if !(b > F::zero()) {
        return Err(domain("b", b, "b > 0"));
    }
    let log = -delta.ln();
    Ok((F::lit(2.0) * v * log).sqrt() + b * log / F::lit(3.0))
}

/// Bernstein radius with a union bound over variance shells:
/// `sqrt(4 V_n log(n/delta) + 5 b^2 log^2(n/delta))`.
///
/// This is the template behind every SAO test threshold.
pub fn bernstein_union_radius<F: Scalar>(v: F, b: F, n: u64, delta: F) -> Result<F> {
    check_delta(delta)?;
    if !(v >= F::zero()) {
        return Err(domain("V_n", v, "V_n >= 0"));
    }
    if !(b > F::zero()) {
        return Err(domain("b", b, "b > 0"));
    }
    if n == 0 {
        return Err(domain("n", F::zero(), "n >= 1"));
    }
    Ok(bernstein_union_radius_from_log(v, b, (F::from_count(n) / delta).ln()))
}

/// [`bernstein_union_radius`] with `log(n/delta)` supplied directly.
pub fn bernstein_union_radius_from_log<F: Scalar>(v: F, b: F, log: F) -> F {
    (F::lit(4.0) * v * log + F::lit(5.0) * b * b * log * log).sqrt()
}

/// A bound to validate together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSpec<F> {
    /// `|X - mu| > C max(1, sqrt(mu))` for independent `[0,1]` summands.
    Chernoff { c: F },
    /// One-sided Hoeffding–Azuma with the sampler's per-step ranges.
    HoeffdingAzuma { delta: F },
    /// One-sided Freedman–Bernstein, counted only when `V_n <= v`.
    BernsteinMartingale { delta: F, b: F, v: F },
    /// One-sided union-over-shells Bernstein with the realized `V_n`.
    BernsteinUnion { delta: F, b: F },
}

impl<F: Scalar> BoundSpec<F> {
    pub fn name(&self) -> &'static str {
        match self {
            BoundSpec::Chernoff { .. } => "chernoff",
            BoundSpec::HoeffdingAzuma { .. } => "hoeffding-azuma",
            BoundSpec::BernsteinMartingale { .. } => "bernstein-martingale",
            BoundSpec::BernsteinUnion { .. } => "bernstein-union",
        }
    }

    /// The failure probability the bound promises.
    pub fn failure_probability(&self) -> F {
        match *self {
            BoundSpec::Chernoff { c } => chernoff_failure_probability(c),
            BoundSpec::HoeffdingAzuma { delta }
            | BoundSpec::BernsteinMartingale { delta, .. }
            | BoundSpec::BernsteinUnion { delta, .. } => delta,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BoundSpec::Chernoff { c } => chernoff_radius(F::zero(), c).map(drop),
            BoundSpec::HoeffdingAzuma { delta } => check_delta(delta),
            BoundSpec::BernsteinMartingale { delta, b, v } => {
                bernstein_martingale_radius(v, b, delta).map(drop)
            }
            BoundSpec::BernsteinUnion { delta, b } => {
                bernstein_union_radius(F::zero(), b, 1, delta).map(drop)
            }
        }
    }

    /// Checks one sampled path against the bound's hypotheses and reports
    /// whether the deviation exceeded the radius.
    pub fn violated(&self, path: &SamplePath<F>) -> Result<bool> {
        let sum = path.sum();
        match *self {
            BoundSpec::Chernoff { c } => {
                for s in &path.steps {
                    if !(s.value >= F::zero() && s.value <= F::one()) {
                        return Err(Error::HypothesisViolation(format!(
                            "summand {} outside [0,1]",
                            s.value
                        )));
                    }
                }
                let radius = chernoff_radius(path.mean, c)?;
                Ok((sum - path.mean).abs() > radius)
            }
            BoundSpec::HoeffdingAzuma { delta } => {
                for s in &path.steps {
                    if !(s.value >= s.lower && s.value <= s.lower + s.range) {
                        return Err(Error::HypothesisViolation(format!(
                            "increment {} outside [{}, {}]",
                            s.value,
                            s.lower,
                            s.lower + s.range
                        )));
                    }
                }
                let ranges: Vec<F> = path.steps.iter().map(|s| s.range).collect();
                Ok(sum > hoeffding_azuma_radius(&ranges, delta)?.radius)
            }
            BoundSpec::BernsteinMartingale { delta, b, v } => {
                path.check_bounded(b)?;
                if path.variance() > v {
                    return Ok(false);
                }
                Ok(sum > bernstein_martingale_radius(v, b, delta)?)
            }
            BoundSpec::BernsteinUnion { delta, b } => {
                path.check_bounded(b)?;
                let n = path.steps.len().max(1) as u64;
                Ok(sum > bernstein_union_radius(path.variance(), b, n, delta)?)
            }
        }
    }
}

impl<F: Scalar> fmt::Display for BoundSpec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundSpec::Chernoff { c } => write!(f, "C={c}"),
            BoundSpec::HoeffdingAzuma { delta } => write!(f, "delta={delta}"),
            BoundSpec::BernsteinMartingale { delta, b, v } => {
                write!(f, "delta={delta};b={b};V={v}")
            }
            BoundSpec::BernsteinUnion { delta, b } => write!(f, "delta={delta};b={b}"),
        }
    }
}

/// One increment of a sampled sequence.
///
/// For martingale samplers `value` is the centered difference `X_t`, known to
/// lie in `[lower, lower + range]`, with conditional variance `cond_var`.
/// For independent-sum samplers `value` is the raw summand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<F> {
    pub value: F,
    pub lower: F,
    pub range: F,
    pub cond_var: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<F> {
    pub steps: Vec<Step<F>>,
    /// Expected value of the sum (zero for martingales).
    pub mean: F,
}

impl<F: Scalar> SamplePath<F> {
    pub fn sum(&self) -> F {
        self.steps.iter().fold(F::zero(), |acc, s| acc + s.value)
    }

    /// `V_n = sum_t E[X_t^2 | F_{t-1}]`.
    pub fn variance(&self) -> F {
        self.steps.iter().fold(F::zero(), |acc, s| acc + s.cond_var)
    }

    fn check_bounded(&self, b: F) -> Result<()> {
        match self.steps.iter().find(|s| s.value.abs() > b) {
            Some(s) => Err(Error::HypothesisViolation(format!(
                "|X_t| = {} exceeds b = {b}",
                s.value.abs()
            ))),
            None => Ok(()),
        }
    }
}

/// Draws one sequence per call.
pub trait PathSampler<F> {
    fn sample(&mut self, rng: &mut dyn RngCore) -> SamplePath<F>;

    fn describe(&self) -> String;
}

/// Sum of `n` independent Bernoulli(`p`) draws.
#[derive(Debug, Clone)]
pub struct BernoulliSum {
    pub n: usize,
    pub p: f64,
}

impl<F: Scalar> PathSampler<F> for BernoulliSum {
    fn sample(&mut self, rng: &mut dyn RngCore) -> SamplePath<F> {
        let steps = (0..self.n)
            .map(|_| Step {
                value: if rng.gen::<f64>() < self.p { F::one() } else { F::zero() },
                lower: F::zero(),
                range: F::one(),
                cond_var: F::lit(self.p * (1.0 - self.p)),
            })
            .collect();
        SamplePath {
            steps,
            mean: F::lit(self.n as f64 * self.p),
        }
    }

    fn describe(&self) -> String {
        format!("bernoulli-sum(n={},p={})", self.n, self.p)
    }
}

/// All-zero sequence of length `n`.
#[derive(Debug, Clone)]
pub struct ZeroSequence {
    pub n: usize,
}

impl<F: Scalar> PathSampler<F> for ZeroSequence {
    fn sample(&mut self, _rng: &mut dyn RngCore) -> SamplePath<F> {
        SamplePath {
            steps: vec![
                Step {
                    value: F::zero(),
                    lower: F::zero(),
                    range: F::one(),
                    cond_var: F::zero(),
                };
                self.n
            ],
            mean: F::zero(),
        }
    }

    fn describe(&self) -> String {
        format!("zero(n={})", self.n)
    }
}

/// Symmetric +-a_t martingale whose step size depends on the running sum:
/// `a_t = 1` while the walk is at or below zero and `a_t = shrink` above it.
#[derive(Debug, Clone)]
pub struct StateDependentRademacher {
    pub n: usize,
    pub shrink: f64,
}

impl<F: Scalar> PathSampler<F> for StateDependentRademacher {
    fn sample(&mut self, rng: &mut dyn RngCore) -> SamplePath<F> {
        let mut sum = 0.0;
        let steps = (0..self.n)
            .map(|_| {
                let a = if sum > 0.0 { self.shrink } else { 1.0 };
                let x = if rng.gen::<bool>() { a } else { -a };
                sum += x;
                Step {
                    value: F::lit(x),
                    lower: F::lit(-1.0),
                    range: F::lit(2.0),
                    cond_var: F::lit(a * a),
                }
            })
            .collect();
        SamplePath {
            steps,
            mean: F::zero(),
        }
    }

    fn describe(&self) -> String {
        format!("rademacher(n={},shrink={})", self.n, self.shrink)
    }
}

/// Centered coin flips `Z_t - p_t` where `p_t` is `low` after a success and
/// `high` otherwise.
#[derive(Debug, Clone)]
pub struct AdaptiveCoin {
    pub n: usize,
    pub low: f64,
    pub high: f64,
}

impl<F: Scalar> PathSampler<F> for AdaptiveCoin {
    fn sample(&mut self, rng: &mut dyn RngCore) -> SamplePath<F> {
        let mut last = false;
        let steps = (0..self.n)
            .map(|_| {
                let p = if last { self.low } else { self.high };
                last = rng.gen::<f64>() < p;
                let z = if last { 1.0 } else { 0.0 };
                Step {
                    value: F::lit(z - p),
                    lower: F::lit(-p),
                    range: F::one(),
                    cond_var: F::lit(p * (1.0 - p)),
                }
            })
            .collect();
        SamplePath {
            steps,
            mean: F::zero(),
        }
    }

    fn describe(&self) -> String {
        format!("adaptive-coin(n={},low={},high={})", self.n, self.low, self.high)
    }
}

/// Error of the importance-weighted estimator, `(Z_t / p_t - 1) g_t`, where
/// the sampling probability drops from `high` to `low` after each play and
/// recovers otherwise; `g_t` alternates between `reward` and `1 - reward`.
///
/// `|X_t| <= 1 / low` is the bound `b`.
#[derive(Debug, Clone)]
pub struct ImportanceWeightedError {
    pub n: usize,
    pub low: f64,
    pub high: f64,
    pub reward: f64,
}

impl<F: Scalar> PathSampler<F> for ImportanceWeightedError {
    fn sample(&mut self, rng: &mut dyn RngCore) -> SamplePath<F> {
        let mut played = false;
        let steps = (0..self.n)
            .map(|t| {
                let p = if played { self.low } else { self.high };
                let g = if t % 2 == 0 { self.reward } else { 1.0 - self.reward };
                played = rng.gen::<f64>() < p;
                let z = if played { 1.0 } else { 0.0 };
                Step {
                    value: F::lit((z / p - 1.0) * g),
                    lower: F::lit(-g),
                    range: F::lit(g / p),
                    cond_var: F::lit(g * g * (1.0 - p) / p),
                }
            })
            .collect();
        SamplePath {
            steps,
            mean: F::zero(),
        }
    }

    fn describe(&self) -> String {
        format!(
            "importance-weighted(n={},low={},high={},g={})",
            self.n, self.low, self.high, self.reward
        )
    }
}

/// Outcome of a Monte Carlo validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationRate<F> {
    pub rate: F,
    pub theoretical: F,
    pub trials: u64,
}

impl<F: Scalar> ViolationRate<F> {
    /// Three binomial standard errors at the observed rate.
    pub fn slack(&self) -> F {
        let r = self.rate;
        F::lit(3.0) * (r * (F::one() - r) / F::from_count(self.trials)).sqrt()
    }

    pub fn within_bound(&self) -> bool {
        self.rate <= self.theoretical + self.slack()
    }
}

pub const MIN_TRIALS: u64 = 1_000;

/// Fraction of `trials` sampled paths on which `bound` is violated.
pub fn empirical_violation_rate<F: Scalar>(
    bound: &BoundSpec<F>,
    sampler: &mut dyn PathSampler<F>,
    trials: u64,
    rng: &mut dyn RngCore,
) -> Result<ViolationRate<F>> {
    if trials < MIN_TRIALS {
        return Err(domain("trials", F::from_count(trials), "trials >= 1000"));
    }
    bound.validate()?;
    let mut violations = 0u64;
    for _ in 0..trials {
        if bound.violated(&sampler.sample(rng))? {
            violations += 1;
        }
    }
    Ok(ViolationRate {
        rate: F::from_count(violations) / F::from_count(trials),
        theoretical: bound.failure_probability(),
        trials,
    })
}

/// A bound paired with a sampler that satisfies its hypotheses.
pub struct ValidationCase {
    pub bound: BoundSpec<f64>,
    pub sampler: Box<dyn PathSampler<f64> + Send>,
}

/// The bound/sampler pairs exercised by `validate-bounds`.
pub fn builtin_cases() -> Vec<ValidationCase> {
    let case = |bound, sampler: Box<dyn PathSampler<f64> + Send>| ValidationCase { bound, sampler };
    vec![
        case(
            BoundSpec::Chernoff { c: 9.0 },
            Box::new(BernoulliSum { n: 100, p: 0.5 }),
        ),
        case(
            BoundSpec::Chernoff { c: 1.5 },
            Box::new(BernoulliSum { n: 100, p: 0.005 }),
        ),
        case(BoundSpec::Chernoff { c: 9.0 }, Box::new(ZeroSequence { n: 100 })),
        case(
            BoundSpec::HoeffdingAzuma { delta: 0.05 },
            Box::new(StateDependentRademacher { n: 200, shrink: 1.0 }),
        ),
        case(
            BoundSpec::HoeffdingAzuma { delta: 0.05 },
            Box::new(StateDependentRademacher { n: 200, shrink: 0.5 }),
        ),
        case(
            BoundSpec::BernsteinMartingale {
                delta: 0.05,
                b: 1.0,
                v: 200.0 * 0.25,
            },
            Box::new(AdaptiveCoin {
                n: 200,
                low: 0.1,
                high: 0.5,
            }),
        ),
        case(
            BoundSpec::BernsteinUnion { delta: 0.05, b: 1.0 },
            Box::new(AdaptiveCoin {
                n: 200,
                low: 0.1,
                high: 0.5,
            }),
        ),
        case(
            BoundSpec::BernsteinUnion { delta: 0.05, b: 4.0 },
            Box::new(ImportanceWeightedError {
                n: 200,
                low: 0.25,
                high: 0.5,
                reward: 0.8,
            }),
        ),
    ]
}

/// Outcome of one validation case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub bound: &'static str,
    pub params: String,
    pub sampler: String,
    pub violation: ViolationRate<f64>,
}

/// Runs every built-in case with `trials` paths each. Case `j` draws from
/// stream `j` of a ChaCha8 generator seeded with `seed`.
pub fn validate_builtin(trials: u64, seed: u64) -> Result<Vec<CaseResult>> {
    builtin_cases()
        .into_iter()
        .enumerate()
        .map(|(j, mut case)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let violation =
                empirical_violation_rate(&case.bound, case.sampler.as_mut(), trials, &mut rng)?;
            Ok(CaseResult {
                bound: case.bound.name(),
                params: case.bound.to_string(),
                sampler: case.sampler.describe(),
                violation,
            })
        })
        .collect()
}

/// `bound,params,sampler,trials,empirical_rate,theoretical,slack,pass`
pub fn write_validation_csv<W: std::io::Write>(writer: W, results: &[CaseResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "bound",
        "params",
        "sampler",
        "trials",
        "empirical_rate",
        "theoretical",
        "slack",
        "pass",
    ])
    .map_err(csv_err)?;
    for r in results {
        let v = &r.violation;
        w.write_record([
            r.bound.to_string(),
            r.params.clone(),
            r.sampler.clone(),
            v.trials.to_string(),
            format_f64(v.rate),
            format_f64(v.theoretical),
            format_f64(v.slack()),
            v.within_bound().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chernoff_examples() {
        assert_relative_eq!(chernoff_radius(50.0, 9.0).unwrap(), 63.639_610_306_789_28, epsilon = 1e-9);
        assert_relative_eq!(chernoff_failure_probability(9.0_f64), 0.099_574_136_735_727_89, epsilon = 1e-12);
        assert_eq!(chernoff_radius(0.25, 2.0).unwrap(), 2.0);
        assert_eq!(chernoff_radius(1.0, 3.0).unwrap(), 3.0);
        assert!(chernoff_radius(1.0, 1.0).is_err());
        assert!(chernoff_radius(-1.0, 2.0).is_err());
        assert_eq!(chernoff_radius(4.0_f32, 2.0).unwrap(), 4.0);
    }

    #[test]
    fn azuma_examples() {
        let r = hoeffding_azuma_radius(&vec![1.0; 200], 0.05).unwrap();
        // sqrt(ln(20) / 2 * 200) = sqrt(100 ln 20)
        assert_relative_eq!(r.radius, (100.0 * 20f64.ln()).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.radius, 17.308, epsilon = 1e-3);
        assert!(!r.vacuous);

        let near_one = hoeffding_azuma_radius(&vec![1.0; 200], 1.0 - 1e-12).unwrap();
        assert!(near_one.radius < 1e-4);

        let doubled = hoeffding_azuma_radius(&vec![2.0; 200], 0.05).unwrap();
        assert_relative_eq!(doubled.radius, 2.0 * r.radius, epsilon = 1e-12);

        let empty = hoeffding_azuma_radius::<f64>(&[], 0.05).unwrap();
        assert_eq!(empty.radius, 0.0);
        assert!(empty.vacuous);

        assert!(hoeffding_azuma_radius(&[1.0, 0.0], 0.05).is_err());
        assert!(hoeffding_azuma_radius(&[1.0], 1.0).is_err());
    }

    #[test]
    fn bernstein_union_examples() {
        let log = 46.05_f64;
        let r = bernstein_union_radius_from_log(2.0 * 1e4, 2.0, log);
        assert_relative_eq!(r, (4.0 * 2e4 * log + 20.0 * log * log).sqrt(), epsilon = 1e-9);
        assert_relative_eq!(r, 1930.39, epsilon = 0.01);
        // Dividing by t recovers the deactivation radius (before the factor 6).
        assert_relative_eq!(6.0 * r / 1e4, 1.158, epsilon = 1e-3);

        let zero_var = bernstein_union_radius(0.0, 3.0, 100, 0.01).unwrap();
        assert_relative_eq!(zero_var, 3.0 * 5f64.sqrt() * (100.0f64 / 0.01).ln(), epsilon = 1e-9);

        let tiny_b = bernstein_union_radius(50.0, 1e-12, 100, 0.01).unwrap();
        assert_relative_eq!(tiny_b, (4.0 * 50.0 * (1e4f64).ln()).sqrt(), epsilon = 1e-9);

        assert!(bernstein_union_radius(1.0, 0.0, 10, 0.1).is_err());
        assert!(bernstein_union_radius(-1.0, 1.0, 10, 0.1).is_err());
        assert!(bernstein_union_radius(1.0, 1.0, 0, 0.1).is_err());
    }

    #[test]
    fn freedman_radius() {
        let r = bernstein_martingale_radius(50.0, 1.0, 0.05).unwrap();
        let l = 20f64.ln();
        assert_relative_eq!(r, (100.0 * l).sqrt() + l / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn intermediate_chernoff_never_exceeds_unified_form() {
        for ci in 0..60 {
            let c = 1.0 + 0.001 + ci as f64 * 0.5;
            for mi in 0..80 {
                let mu = (mi as f64 * 0.25).powi(2);
                let inner = chernoff_intermediate_radius(mu, c).unwrap();
                let outer = chernoff_radius(mu, c).unwrap();
                assert!(inner <= outer + 1e-12, "C={c} mu={mu}");
            }
        }
    }

    proptest! {
        #[test]
        fn radii_are_monotone(
            a in 0.0f64..1e4, da in 0.0f64..1e4,
            c in 1.001f64..50.0,
            d1 in 1e-6f64..0.99, frac in 0.0f64..1.0,
            b in 1e-3f64..10.0, n in 1u64..100_000,
        ) {
            let d2 = d1 + (0.999 - d1) * frac;
            prop_assert!(chernoff_radius(a, c).unwrap() <= chernoff_radius(a + da, c).unwrap());
            prop_assert!(
                bernstein_union_radius(a, b, n, d1).unwrap()
                    <= bernstein_union_radius(a + da, b, n, d1).unwrap()
            );
            prop_assert!(
                bernstein_union_radius(a, b, n, d2).unwrap()
                    <= bernstein_union_radius(a, b, n, d1).unwrap() + 1e-9
            );
            prop_assert!(
                bernstein_martingale_radius(a, b, d2).unwrap()
                    <= bernstein_martingale_radius(a + da, b, d1).unwrap() + 1e-9
            );
            let ranges = [1.0, a.sqrt() + 0.1];
            let wider = [1.0, (a + da).sqrt() + 0.1];
            prop_assert!(
                hoeffding_azuma_radius(&ranges, d1).unwrap().radius
                    <= hoeffding_azuma_radius(&wider, d1).unwrap().radius
            );
            prop_assert!(
                hoeffding_azuma_radius(&ranges, d2).unwrap().radius
                    <= hoeffding_azuma_radius(&ranges, d1).unwrap().radius + 1e-12
            );
        }
    }

    #[test]
    fn zero_sequence_never_violates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rate = empirical_violation_rate(
            &BoundSpec::Chernoff { c: 9.0 },
            &mut ZeroSequence { n: 50 },
            1000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(rate.rate, 0.0);
    }

    #[test]
    fn validator_rejects_hypothesis_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Increments of +-1 exceed b = 0.5.
        let err = empirical_violation_rate(
            &BoundSpec::BernsteinUnion { delta: 0.05, b: 0.5 },
            &mut StateDependentRademacher { n: 10, shrink: 1.0 },
            1000,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::HypothesisViolation(_))));
        let few = empirical_violation_rate(
            &BoundSpec::Chernoff { c: 9.0 },
            &mut ZeroSequence { n: 5 },
            10,
            &mut rng,
        );
        assert!(few.is_err());
    }

    #[test]
    fn rademacher_azuma_rate_is_below_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rate = empirical_violation_rate(
            &BoundSpec::HoeffdingAzuma { delta: 0.05 },
            &mut StateDependentRademacher { n: 100, shrink: 1.0 },
            5000,
            &mut rng,
        )
        .unwrap();
        assert!(rate.within_bound(), "{rate:?}");
        // Loose but not vacuous: the bound is reached now and then.
        assert!(rate.rate < 0.05);
    }
}
