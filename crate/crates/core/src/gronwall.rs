//! The discrete log-type Gronwall recursion
//!
//! ```text
//! β_{j+1} = β_j (1 + K 2^{-m} log₂(1/β_j)),   K ≤ ln2 · 2^m,   0 < β_0 < 1,
//! ```
//!
//! which is the extremal case of `Δβ_j ≤ K 2^{-m} β_j log₂(1/β_j)`, and two
//! upper bounds for its iterates:
//!
//! * [`closed_form_cap`], `exp(log₂(β_0) e^{-2K-1})`;
//! * [`recursion_cap`], `β_0^{(1 - K/(ln2 · 2^m))^{2^m}}`, which follows from
//!   `log₂(1 + u) ≤ u / ln 2` applied to `a_j = log₂(1/β_j)`.
//!
//! The first is not a valid bound everywhere on the admissible domain: for
//! small `m` and `K` close to `ln2 · 2^m` the recursion overshoots it
//! (`m = 0, K = 0.6908, β_0 = 0.8654` gives `β_1 ≈ 0.990` against a cap of
//! `≈ 0.981`). The second always holds.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::{stream, Purpose};

const LN2: f64 = std::f64::consts::LN_2;

/// Largest level accepted; `2^m` steps must fit comfortably in memory.
pub const MAX_LEVEL: u32 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallSequence {
    pub k: f64,
    pub m: u32,
    pub beta0: f64,
    pub values: Vec<f64>,
}

impl GronwallSequence {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("sequence holds beta0")
    }
}

fn check_preconditions(k: f64, m: u32, beta0: f64) -> Result<()> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::GronwallNegativeK(k));
    }
    if m > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!("level m = {m} exceeds {MAX_LEVEL}")));
    }
    let limit = LN2 * (m as f64).exp2();
    if k > limit {
        return Err(Error::GronwallLevelTooSmall { k, m, limit });
    }
    if !(beta0 > 0.0 && beta0 < 1.0) {
        return Err(Error::GronwallBetaOutOfRange(beta0));
    }
    Ok(())
}

/// Runs `steps ≤ 2^m` steps of the recursion. `K = 0` is accepted and gives
/// a constant sequence.
///
/// For admissible `K` the exact iterates never leave `(0, 1)`, but near
/// `K = ln2 · 2^m` they approach 1 doubly exponentially and round to
/// exactly `1.0`, a fixed point of the recursion. That is accepted; only
/// `β > 1`, `β ≤ 0` or `NaN` abort.
pub fn run_recursion(k: f64, m: u32, beta0: f64, steps: u64) -> Result<GronwallSequence> {
    check_preconditions(k, m, beta0)?;
    let max = 1u64 << m;
    if steps > max {
        return Err(Error::GronwallTooManySteps { steps, max });
    }
    let c = k * (-(m as f64)).exp2();
    let mut values = Vec::with_capacity(steps as usize + 1);
    let mut beta = beta0;
    values.push(beta);
    for j in 0..steps as usize {
        beta *= 1.0 + c * (-beta.log2());
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::GronwallEscaped { index: j + 1, value: beta });
        }
        values.push(beta);
    }
    Ok(GronwallSequence { k, m, beta0, values })
}

/// `exp(log₂(β_0) e^{-2K-1})`.
pub fn closed_form_cap(k: f64, beta0: f64) -> f64 {
    (beta0.log2() * (-2.0 * k - 1.0).exp()).exp()
}

/// `β_0^{(1 - K/(ln2 · 2^m))^{2^m}}`, a bound on every iterate up to `2^m`.
pub fn recursion_cap(k: f64, m: u32, beta0: f64) -> f64 {
    let n = (m as f64).exp2();
    let x = k / (LN2 * n);
    let exponent = if x >= 1.0 { 0.0 } else { (n * (-x).ln_1p()).exp() };
    beta0.powf(exponent)
}

/// One sampled parameter tuple with its sequence maximum and both caps.
#[derive(Debug, Clone, PartialEq)]
pub struct CapCheck {
    pub k: f64,
    pub m: u32,
    pub beta0: f64,
    pub max_beta: f64,
    pub closed_form_cap: f64,
    pub recursion_cap: f64,
}

impl CapCheck {
    /// `max β_j ≤ cap · (1 + slack)`.
    pub fn within_closed_form(&self, slack: f64) -> bool {
        self.max_beta <= self.closed_form_cap * (1.0 + slack)
    }

    pub fn within_recursion_cap(&self, slack: f64) -> bool {
        self.max_beta <= self.recursion_cap * (1.0 + slack)
    }
}

/// Draws `count` tuples uniformly from the admissible region:
/// `m` uniform on `0..=m_max`, `K` uniform on `[0, ln2·2^m]`, `β_0` uniform
/// on `(0, 1)`. Runs the full `2^m` steps for each.
pub fn cap_sweep(count: usize, m_max: u32, seed: u64, exec: Execution) -> Result<Vec<CapCheck>> {
    if m_max > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!("m_max = {m_max} exceeds {MAX_LEVEL}")));
    }
    let tuples: Vec<(f64, u32, f64)> = (0..count)
        .map(|i| {
            let mut rng = stream(seed, Purpose::Sampling, i as u64, 0);
            let m = rng.random_range(0..=m_max);
            let k = rng.random_range(0.0..=LN2 * (m as f64).exp2());
            let mut beta0 = 0.0;
            while beta0 == 0.0 {
                beta0 = rng.random::<f64>();
            }
            (k, m, beta0)
        })
        .collect();
    map_indexed(exec, count, |i| {
        let (k, m, beta0) = tuples[i];
        let seq = run_recursion(k, m, beta0, 1u64 << m)?;
        Ok(CapCheck {
            k,
            m,
            beta0,
            max_beta: seq.max(),
            closed_form_cap: closed_form_cap(k, beta0),
            recursion_cap: recursion_cap(k, m, beta0),
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_k_is_constant() {
        let s = run_recursion(0.0, 4, 0.5, 16).unwrap();
        assert_eq!(s.values, vec![0.5; 17]);
    }

    #[test]
    fn boundary_k_runs() {
        let m = 5;
        let s = run_recursion(LN2 * 32.0, m, 0.5, 32).unwrap();
        assert!(s.values.iter().all(|b| *b > 0.0 && *b <= 1.0));
        assert!(s.values[..4].iter().all(|b| *b < 1.0));
    }

    #[test]
    fn preconditions_are_named() {
        assert_eq!(run_recursion(-1.0, 4, 0.5, 1), Err(Error::GronwallNegativeK(-1.0)));
        assert!(matches!(
            run_recursion(20.0, 4, 0.5, 1),
            Err(Error::GronwallLevelTooSmall { m: 4, .. })
        ));
        assert_eq!(run_recursion(1.0, 4, 1.0, 1), Err(Error::GronwallBetaOutOfRange(1.0)));
        assert_eq!(
            run_recursion(1.0, 4, 0.5, 17),
            Err(Error::GronwallTooManySteps { steps: 17, max: 16 })
        );
    }

    #[test]
    fn cap_examples() {
        let e = std::f64::consts::E;
        assert!((closed_form_cap(0.0, (-e).exp2()) - (-1f64).exp()).abs() < 1e-15);
        let oracle = (-13.287712379549449 * (-2f64).exp()).exp();
        assert!((closed_form_cap(0.5, 1e-4) - oracle).abs() < 1e-15);
        assert!((closed_form_cap(0.5, 1e-4) - 0.16558).abs() < 1e-5);
        assert!((closed_form_cap(0.0, 1.0 - 1e-15) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_level_overshoots_closed_form() {
        let s = run_recursion(0.6908, 0, 0.8654, 1).unwrap();
        let cap = closed_form_cap(0.6908, 0.8654);
        assert!((s.last() - 0.990).abs() < 1e-3);
        assert!((cap - 0.981).abs() < 1e-3);
        assert!(s.last() > cap);
        assert!(s.last() <= recursion_cap(0.6908, 0, 0.8654));
    }

    #[test]
    fn recursion_cap_holds_on_sweep() {
        let checks = cap_sweep(300, 10, 7, Execution::Sequential).unwrap();
        assert!(checks.iter().all(|c| c.within_recursion_cap(1e-12)));
    }

    #[test]
    fn sequence_is_nondecreasing() {
        let s = run_recursion(2.0, 6, 1e-3, 64).unwrap();
        assert!(s.values.windows(2).all(|w| w[1] >= w[0]));
    }
}
