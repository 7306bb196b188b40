//! Martingales `M_r = Σ_{q≤r} X_q` with i.i.d. centered bounded increments:
//! the BDG ratio `(E|M_n|^p)^{1/p} / (E[M]_n^{p/2})^{1/p} ≤ p` and the
//! exponential moment `E exp(⅛ (M_r⁺ / (C√r))^{1/2}) ≤ 2`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::{stream, Purpose};
use crate::stats::mean_var;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementFamily {
    Zero,
    /// `±c` with probability ½ each.
    Rademacher { c: f64 },
    /// Uniform on `[-c, c]`.
    Uniform { c: f64 },
    /// `high` with probability `low / (low + high)`, else `-low`.
    TwoPoint { low: f64, high: f64 },
}

impl IncrementFamily {
    pub fn name(&self) -> &'static str {
        match self {
            IncrementFamily::Zero => "zero",
            IncrementFamily::Rademacher { .. } => "rademacher",
            IncrementFamily::Uniform { .. } => "uniform",
            IncrementFamily::TwoPoint { .. } => "two-point",
        }
    }

    /// `sup |X|`. For bounded increments `E|X|^p ≤ B^p ≤ B^p p^p`, so any
    /// `C ≥ B` certifies the moment condition.
    pub fn bound(&self) -> f64 {
        match *self {
            IncrementFamily::Zero => 0.0,
            IncrementFamily::Rademacher { c } | IncrementFamily::Uniform { c } => c,
            IncrementFamily::TwoPoint { low, high } => low.max(high),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            IncrementFamily::Zero => true,
            IncrementFamily::Rademacher { c } | IncrementFamily::Uniform { c } => c > 0.0 && c.is_finite(),
            IncrementFamily::TwoPoint { low, high } => {
                low > 0.0 && high > 0.0 && low.is_finite() && high.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad parameters for {} increments", self.name())))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            IncrementFamily::Zero => 0.0,
            IncrementFamily::Rademacher { c } => {
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            }
            IncrementFamily::Uniform { c } => rng.random_range(-c..=c),
            IncrementFamily::TwoPoint { low, high } => {
                if rng.random::<f64>() < low / (low + high) {
                    high
                } else {
                    -low
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdgResult {
    pub p: f64,
    pub n: u32,
    /// `(E|M_n|^p)^{1/p}`.
    pub moment: f64,
    /// `(E[M]_n^{p/2})^{1/p}`, `[M]_n = Σ X_q²`.
    pub bracket: f64,
    pub ratio: f64,
    /// Whether the expectations were computed by exhaustive enumeration.
    pub exact: bool,
}

impl BdgResult {
    pub fn holds(&self) -> bool {
        self.ratio <= self.p
    }
}

/// Largest walk length enumerated exhaustively.
pub const MAX_ENUMERATED: u32 = 20;

/// BDG ratio for a walk of length `n`. Rademacher walks with
/// `n ≤ MAX_ENUMERATED` are enumerated over all `2^n` sign patterns; other
/// cases use `replicas` Monte Carlo draws.
pub fn bdg_check(
    p: f64,
    n: u32,
    family: IncrementFamily,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<BdgResult> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("p = {p} must be >= 2")));
    }
    family.validate()?;
    let (moment_p, bracket_p, exact) = match family {
        IncrementFamily::Rademacher { c } if n <= MAX_ENUMERATED => {
            let total = 1u64 << n;
            let sum: f64 = (0..total)
                .map(|mask| {
                    let up = mask.count_ones() as f64;
                    (c * (2.0 * up - n as f64)).abs().powf(p)
                })
                .sum();
            (sum / total as f64, (n as f64 * c * c).powf(p / 2.0), true)
        }
        _ => {
            if replicas == 0 {
                return Err(Error::EmptySample);
            }
            let draws = map_indexed(exec, replicas, |i| {
                let mut rng = stream(seed, Purpose::Martingale, i as u64, 0);
                let (mut m, mut qv) = (0.0, 0.0);
                for _ in 0..n {
                    let x = family.sample(&mut rng);
                    m += x;
                    qv += x * x;
                }
                (m.abs().powf(p), qv.powf(p / 2.0))
            });
            let k = replicas as f64;
            (
                draws.iter().map(|d| d.0).sum::<f64>() / k,
                draws.iter().map(|d| d.1).sum::<f64>() / k,
                false,
            )
        }
    };
    let moment = moment_p.powf(1.0 / p);
    let bracket = bracket_p.powf(1.0 / p);
    let ratio = if moment == 0.0 { 0.0 } else { moment / bracket };
    Ok(BdgResult { p, n, moment, bracket, ratio, exact })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMomentReport {
    pub c: f64,
    pub r: u32,
    pub replicas: usize,
    /// Monte Carlo mean of `exp(⅛ (M_r⁺ / (C√r))^{1/2})`, with standard error.
    pub mean: f64,
    pub se: f64,
    /// The same with `|M_r|` in place of `M_r⁺`.
    pub mean_abs: f64,
    pub se_abs: f64,
}

impl ExpMomentReport {
    /// `mean ≤ 2 + 3·SE`.
    pub fn passes(&self) -> bool {
        self.mean <= 2.0 + 3.0 * self.se
    }
}

/// Estimates `E exp(⅛ (M_r⁺ / (C√r))^{1/2})`. The family must be certified
/// by `C`, i.e. `sup |X| ≤ C`.
pub fn exp_moment_check(
    c: f64,
    r: u32,
    family: IncrementFamily,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<ExpMomentReport> {
    family.validate()?;
    if !(c > 0.0) || family.bound() > c {
        return Err(Error::Uncertified(family.name().into()));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("r must be >= 1".into()));
    }
    if replicas == 0 {
        return Err(Error::EmptySample);
    }
    let scale = c * (r as f64).sqrt();
    let draws = map_indexed(exec, replicas, |i| {
        let mut rng = stream(seed, Purpose::Martingale, i as u64, 1);
        let m: f64 = (0..r).map(|_| family.sample(&mut rng)).sum();
        let f = |v: f64| (0.125 * (v / scale).sqrt()).exp();
        (f(m.max(0.0)), f(m.abs()))
    });
    let pos: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let abs: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (mean, var) = mean_var(&pos)?;
    let (mean_abs, var_abs) = mean_var(&abs)?;
    let k = replicas as f64;
    Ok(ExpMomentReport {
        c,
        r,
        replicas,
        mean,
        se: (var / k).sqrt(),
        mean_abs,
        se_abs: (var_abs / k).sqrt(),
    })
}
