//! Closed-form regret envelopes used as reference curves.

use crate::algorithms::Exp3P;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// Pseudo-regret against i.i.d. rewards with a positive minimal gap.
    Stochastic,
    /// Regret against the best fixed arm under any adversary.
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub value: f64,
    /// `min(value, cap)`, where the cap is the largest regret possible.
    pub capped: f64,
    /// True when the envelope says nothing beyond the trivial cap.
    pub vacuous: bool,
}

impl Envelope {
    pub fn new(value: f64, cap: f64) -> Self {
        Envelope {
            value,
            capped: value.min(cap),
            vacuous: !(value < cap),
        }
    }
}

/// `260 K (1 + ln K) L^2 / gap`.
pub fn stochastic_envelope(arms: usize, gap: f64, log_beta: f64) -> f64 {
    let k = arms as f64;
    260.0 * k * (1.0 + k.ln()) * log_beta * log_beta / gap
}

/// `60 (1 + ln K)(1 + ln n) sqrt(n K L + 5 K^2 L^2) + 200 K^2 L^2`.
pub fn adversarial_envelope(arms: usize, horizon: u64, log_beta: f64) -> f64 {
    let k = arms as f64;
    let n = horizon as f64;
    let l = log_beta;
    60.0 * (1.0 + k.ln()) * (1.0 + n.ln()) * (n * k * l + 5.0 * k * k * l * l).sqrt()
        + 200.0 * k * k * l * l
}

/// Evaluates the envelope of `kind` at horizon `n`. The stochastic kind
/// needs a positive `gap`.
pub fn theorem_envelope(kind: EnvelopeKind, n: u64, arms: usize, gap: f64, log_beta: f64) -> Result<f64> {
    match kind {
        EnvelopeKind::Stochastic if gap > 0.0 => Ok(stochastic_envelope(arms, gap, log_beta)),
        EnvelopeKind::Stochastic => Err(Error::OutOfDomain {
            name: "gap",
            value: gap,
            constraint: "gap > 0 for the stochastic envelope",
        }),
        EnvelopeKind::Adversarial => Ok(adversarial_envelope(arms, n, log_beta)),
    }
}

/// Exp3.P high-probability envelope for a horizon-`t` run.
pub fn exp3p_envelope(t: u64, arms: usize, delta: f64) -> Envelope {
    Envelope::new(Exp3P::regret_envelope(arms, t, delta), t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stochastic_envelope_value() {
        let l = (10.0 * 2.0 * 5e4f64.powi(3) / 0.05).ln();
        assert_relative_eq!(l, 38.45, epsilon = 0.01);
        let v = theorem_envelope(EnvelopeKind::Stochastic, 50_000, 2, 0.2, l).unwrap();
        let expected = 260.0 * 2.0 * (1.0 + 2f64.ln()) * l * l / 0.2;
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert_relative_eq!(v, 6.51e6, max_relative = 1e-2);
        let e = Envelope::new(v, 0.2 * 50_000.0);
        assert!(e.vacuous);
        assert_eq!(e.capped, 10_000.0);
    }

    #[test]
    fn stochastic_envelope_needs_a_gap() {
        assert!(theorem_envelope(EnvelopeKind::Stochastic, 100, 2, 0.0, 5.0).is_err());
        let wide = stochastic_envelope(2, 1e12, 5.0);
        assert!(wide < 1e-6);
    }

    #[test]
    fn adversarial_envelope_value() {
        let n = 50_000u64;
        let l = 4.0 * (n as f64).ln();
        let v = theorem_envelope(EnvelopeKind::Adversarial, n, 2, 0.0, l).unwrap();
        let k = 2.0f64;
        let expected = 60.0 * (1.0 + k.ln()) * (1.0 + (n as f64).ln())
            * (n as f64 * k * l + 5.0 * k * k * l * l).sqrt()
            + 200.0 * k * k * l * l;
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert!(Envelope::new(v, n as f64).vacuous);
    }

    #[test]
    fn adversarial_envelope_grows_like_root_n() {
        let l = 10.0;
        let small = adversarial_envelope(2, 1_000_000, l) - 200.0 * 4.0 * l * l;
        let large = adversarial_envelope(2, 4_000_000, l) - 200.0 * 4.0 * l * l;
        let ratio = large / small;
        assert!(ratio > 2.0 && ratio < 2.4, "{ratio}");
    }
}
