//! Bounded measurable drift families `f: [0,1] × H → H` in a `D`-mode
//! truncation, their validation against the decay assumption
//!
//! ```text
//! sup |f|_H ≤ 1,   sup Σ λ_n e^{2λ_n} |f^{(n)}|² ≤ 1,   |f^{(n)}| ≤ exp(-e^{n^γ})
//! ```
//!
//! and the semigroup-twisted drifts `b_{n,k}(t,x) = e^{-((k+1)2^{-n} - t)A} f(t,x)`.
//!
//! Every family carries per-mode scales `c_n`, stored as `ln c_n` so that the
//! assumption envelope `c_n = exp(-e^{n^γ})` stays exact for all `n` even
//! though `c_n` itself underflows to 0 beyond the first mode or two.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{mix64, stream, Purpose};
use crate::spectral::SpectralOperator;
use crate::stats::log_sum_exp;

/// Relative slack in log-space comparisons, to absorb the rounding of
/// `exp` followed by `ln` on scales that sit exactly on the envelope.
pub const LOG_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DriftFamily {
    Zero,
    /// `f_n = c_n`.
    Constant,
    /// `f_n = c_n sin(κ z_n)`, space-Lipschitz with constant `κ max c_n`.
    Lipschitz { kappa: f64 },
    /// `f_n = c_n sgn(z_n - a_n - rate·t)`, with `sgn(0) = 0`.
    Sign { thresholds: Vec<f64>, rate: f64 },
    /// `f_n = ±c_n`, the sign drawn by hashing the cell
    /// `(⌊t·time_cells⌋, ⌊z_n / cell⌋)`.
    PiecewiseRandom { cell: f64, time_cells: u32, seed: u64 },
    /// `f(t, z) = z`. Unbounded; only for exact quadrature checks.
    LinearTest,
    /// `e^{-λ_i (end - t)⁺} base_i(t, z)`.
    Twisted { base: Box<DriftSpec>, eigenvalues: Vec<f64>, end: f64 },
}

impl DriftFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DriftFamily::Zero => "zero",
            DriftFamily::Constant => "constant",
            DriftFamily::Lipschitz { .. } => "lipschitz",
            DriftFamily::Sign { .. } => "sign",
            DriftFamily::PiecewiseRandom { .. } => "piecewise-random",
            DriftFamily::LinearTest => "linear-test",
            DriftFamily::Twisted { .. } => "twisted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    family: DriftFamily,
    log_scales: Vec<f64>,
    scales: Vec<f64>,
    validated: bool,
}

/// `ln c_n = ln(amplitude) - e^{n^γ}` for `n = 1..=dim`: the largest scales
/// the component condition allows, times `amplitude`.
pub fn envelope_log_scales(gamma: f64, dim: usize, amplitude: f64) -> Vec<f64> {
    (1..=dim).map(|n| amplitude.ln() - (n as f64).powf(gamma).exp()).collect()
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl DriftSpec {
    /// Drift with per-mode scales given as `ln c_n`.
    pub fn with_log_scales(family: DriftFamily, log_scales: Vec<f64>) -> Result<Self> {
        if log_scales.is_empty() {
            return Err(Error::InvalidArgument("drift needs at least one mode".into()));
        }
        if log_scales.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidArgument("log scales must be < +inf".into()));
        }
        match &family {
            DriftFamily::Lipschitz { kappa } if !(kappa.is_finite() && *kappa >= 0.0) => {
                return Err(Error::InvalidArgument(format!("kappa = {kappa} must be >= 0")));
            }
            DriftFamily::Sign { thresholds, .. } if thresholds.len() != log_scales.len() => {
                return Err(Error::DimensionMismatch {
                    expected: log_scales.len(),
                    got: thresholds.len(),
                });
            }
            DriftFamily::PiecewiseRandom { cell, time_cells, .. }
                if !(*cell > 0.0 && *time_cells > 0) =>
            {
                return Err(Error::InvalidArgument(
                    "piecewise-random needs cell > 0 and time_cells > 0".into(),
                ));
            }
            DriftFamily::Twisted { .. } => {
                return Err(Error::InvalidArgument("use twist() to build twisted drifts".into()));
            }
            _ => {}
        }
        let validated = !matches!(family, DriftFamily::LinearTest);
        let scales = log_scales.iter().map(|l| l.exp()).collect();
        Ok(Self { family, log_scales, scales, validated })
    }

    /// Drift with per-mode scales `c_n ≥ 0`.
    pub fn new(family: DriftFamily, scales: &[f64]) -> Result<Self> {
        if scales.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument("scales must be finite and >= 0".into()));
        }
        Self::with_log_scales(family, scales.iter().map(|c| c.ln()).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            family: DriftFamily::Zero,
            log_scales: vec![f64::NEG_INFINITY; dim],
            scales: vec![0.0; dim],
            validated: true,
        }
    }

    pub fn linear_test(dim: usize) -> Self {
        Self {
            family: DriftFamily::LinearTest,
            log_scales: vec![0.0; dim],
            scales: vec![1.0; dim],
            validated: false,
        }
    }

    /// Sign drift with constant thresholds `a_n = threshold` on the
    /// assumption envelope scaled by `amplitude`.
    pub fn sign_envelope(gamma: f64, dim: usize, amplitude: f64, threshold: f64) -> Result<Self> {
        Self::with_log_scales(
            DriftFamily::Sign { thresholds: vec![threshold; dim], rate: 0.0 },
            envelope_log_scales(gamma, dim, amplitude),
        )
    }

    pub fn family(&self) -> &DriftFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn log_scales(&self) -> &[f64] {
        &self.log_scales
    }

    /// False only for drifts barred from assumption-validated experiments.
    pub fn is_validated(&self) -> bool {
        self.validated
    }

    /// Space-Lipschitz constant in `|·|_H`, when the family has one.
    pub fn lipschitz_constant(&self) -> Option<f64> {
        let max_scale = self.scales.iter().copied().fold(0.0, f64::max);
        match &self.family {
            DriftFamily::Zero | DriftFamily::Constant => Some(0.0),
            DriftFamily::Lipschitz { kappa } => Some(kappa * max_scale),
            DriftFamily::LinearTest => Some(1.0),
            DriftFamily::Twisted { base, .. } => base.lipschitz_constant(),
            DriftFamily::Sign { .. } | DriftFamily::PiecewiseRandom { .. } => None,
        }
    }

    /// Closed-form `ln sup |f^{(n)}|` (1-based `n`), when known.
    pub fn sup_log(&self, n: usize) -> Option<f64> {
        match &self.family {
            DriftFamily::Zero => Some(f64::NEG_INFINITY),
            DriftFamily::LinearTest => None,
            DriftFamily::Twisted { base, .. } => base.sup_log(n),
            _ => self.log_scales.get(n - 1).copied(),
        }
    }

    pub fn evaluate(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(t, z, &mut out);
        out
    }

    /// Writes `f(t, z)` into `out`. `z` and `out` have length `dim()`.
    pub fn evaluate_into(&self, t: f64, z: &[f64], out: &mut [f64]) {
        match &self.family {
            DriftFamily::Zero => out.fill(0.0),
            DriftFamily::Constant => out.copy_from_slice(&self.scales),
            DriftFamily::Lipschitz { kappa } => {
                for ((o, c), zi) in out.iter_mut().zip(&self.scales).zip(z) {
                    *o = if *c == 0.0 { 0.0 } else { c * (kappa * zi).sin() };
                }
            }
            DriftFamily::Sign { thresholds, rate } => {
                for (((o, c), zi), a) in out.iter_mut().zip(&self.scales).zip(z).zip(thresholds) {
                    *o = c * sgn(zi - a - rate * t);
                }
            }
            DriftFamily::PiecewiseRandom { cell, time_cells, seed } => {
                let tc = (t * *time_cells as f64).floor() as i64 as u64;
                for (i, ((o, c), zi)) in out.iter_mut().zip(&self.scales).zip(z).enumerate() {
                    let zc = (zi / cell).floor() as i64 as u64;
                    let h = mix64(
                        seed ^ mix64(i as u64 ^ 0x5bd1_e995)
                            ^ mix64(tc.wrapping_mul(0x9e37_79b9))
                            ^ zc.wrapping_mul(0xff51_afd7_ed55_8ccd),
                    );
                    *o = if h & 1 == 1 { *c } else { -*c };
                }
            }
            DriftFamily::LinearTest => out.copy_from_slice(z),
            DriftFamily::Twisted { base, eigenvalues, end } => {
                base.evaluate_into(t, z, out);
                let lag = (end - t).max(0.0);
                for (o, l) in out.iter_mut().zip(eigenvalues) {
                    *o *= (-l * lag).exp();
                }
            }
        }
    }
}

/// `b_{n,k}(t,x) = e^{-((k+1)2^{-n} - t)A} f(t,x)`.
///
/// The lag is clamped at zero past the interval end, so the twisted drift is
/// dominated by the base drift for every `t` and inherits its validation.
pub fn twist(drift: &DriftSpec, op: &SpectralOperator, n: u32, k: u64) -> Result<DriftSpec> {
    if drift.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: drift.dim() });
    }
    if n >= 63 || k >= (1u64 << n) {
        return Err(Error::InvalidArgument(format!("k = {k} must be below 2^{n}")));
    }
    let end = (k + 1) as f64 * (-(n as f64)).exp2();
    Ok(DriftSpec {
        family: DriftFamily::Twisted {
            base: Box::new(drift.clone()),
            eigenvalues: op.eigenvalues().to_vec(),
            end,
        },
        log_scales: drift.log_scales.clone(),
        scales: drift.scales.clone(),
        validated: drift.validated,
    })
}

/// Which of the three sup conditions a witness violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    SupNorm,
    WeightedSum,
    Component,
    /// Drift is flagged as exempt from validation (the linear test family).
    Unvalidated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub condition: Condition,
    /// 1-based mode, for component violations.
    pub component: Option<usize>,
    /// Index into the sample grid; `None` when the closed-form sup decided.
    pub sample: Option<usize>,
    /// Log-space excess over the bound (`> 0` means violated).
    pub log_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCertificate {
    pub gamma: f64,
    /// `ln sup |f|_H` over the grid (and closed form, when known).
    pub sup_norm_log: f64,
    /// `ln sup Σ λ_n e^{2λ_n} |f^{(n)}|²`, via log-sum-exp.
    pub weighted_sum_log: f64,
    /// Per mode `ln sup |f^{(n)}| + e^{n^γ}`; `≤ 0` means satisfied,
    /// `-inf` means the component vanishes identically.
    pub component_log_margins: Vec<f64>,
    pub pass: bool,
    pub witness: Option<Witness>,
}

fn within(excess: f64, bound_magnitude: f64) -> bool {
    excess <= LOG_SLACK * bound_magnitude.abs().max(1.0)
}

/// `ln|v| + e^{n^γ}`, with `0 ↦ -inf` and a nonzero value against a zero
/// bound `↦ +inf`.
fn component_margin(log_abs: f64, neg_log_bound: f64) -> f64 {
    if log_abs == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if neg_log_bound == f64::INFINITY {
        f64::INFINITY
    } else {
        log_abs + neg_log_bound
    }
}

/// Checks the three sup conditions on `samples` of `(t, z)` points, merged
/// with the family's closed-form sups where those exist.
pub fn validate_assumption(
    drift: &DriftSpec,
    op: &SpectralOperator,
    gamma: f64,
    samples: &[(f64, Vec<f64>)],
) -> Result<DecayCertificate> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must be > 0")));
    }
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let dim = drift.dim();
    if op.dim() != dim {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: dim });
    }
    let lambdas = op.eigenvalues();
    let neg_log_bounds: Vec<f64> = (1..=dim).map(|n| (n as f64).powf(gamma).exp()).collect();
    let weight_logs: Vec<f64> = lambdas.iter().map(|l| l.ln() + 2.0 * l).collect();

    let weighted = |logs: &[f64]| {
        let terms: Vec<f64> =
            logs.iter().zip(&weight_logs).map(|(la, w)| w + 2.0 * la).collect();
        log_sum_exp(&terms)
    };
    let norm_log = |logs: &[f64]| {
        let terms: Vec<f64> = logs.iter().map(|la| 2.0 * la).collect();
        0.5 * log_sum_exp(&terms)
    };

    let mut sup_norm = (f64::NEG_INFINITY, None);
    let mut weighted_sup = (f64::NEG_INFINITY, None);
    let mut margins: Vec<(f64, Option<usize>)> = vec![(f64::NEG_INFINITY, None); dim];

    let mut value = vec![0.0; dim];
    for (s, (t, z)) in samples.iter().enumerate() {
        if z.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: z.len() });
        }
        drift.evaluate_into(*t, z, &mut value);
        let logs: Vec<f64> = value.iter().map(|v| v.abs().ln()).collect();
        let nl = norm_log(&logs);
        if nl > sup_norm.0 {
            sup_norm = (nl, Some(s));
        }
        let wl = weighted(&logs);
        if wl > weighted_sup.0 {
            weighted_sup = (wl, Some(s));
        }
        for (n, la) in logs.iter().enumerate() {
            let m = component_margin(*la, neg_log_bounds[n]);
            if m > margins[n].0 {
                margins[n] = (m, Some(s));
            }
        }
    }

    let closed: Option<Vec<f64>> = (1..=dim).map(|n| drift.sup_log(n)).collect();
    if let Some(sup_logs) = &closed {
        let nl = norm_log(sup_logs);
        if nl > sup_norm.0 {
            sup_norm = (nl, None);
        }
        let wl = weighted(sup_logs);
        if wl > weighted_sup.0 {
            weighted_sup = (wl, None);
        }
        for (n, la) in sup_logs.iter().enumerate() {
            let m = component_margin(*la, neg_log_bounds[n]);
            if m > margins[n].0 {
                margins[n] = (m, None);
            }
        }
    }

    let mut witness: Option<Witness> = None;
    let mut consider = |w: Witness, ok: bool| {
        if !ok && witness.as_ref().is_none_or(|cur| w.log_excess > cur.log_excess) {
            witness = Some(w);
        }
    };
    consider(
        Witness {
            condition: Condition::SupNorm,
            component: None,
            sample: sup_norm.1,
            log_excess: sup_norm.0,
        },
        within(sup_norm.0, 0.0),
    );
    consider(
        Witness {
            condition: Condition::WeightedSum,
            component: None,
            sample: weighted_sup.1,
            log_excess: weighted_sup.0,
        },
        within(weighted_sup.0, 0.0),
    );
    for (n, (m, s)) in margins.iter().enumerate() {
        consider(
            Witness {
                condition: Condition::Component,
                component: Some(n + 1),
                sample: *s,
                log_excess: *m,
            },
            within(*m, neg_log_bounds[n]),
        );
    }
    if !drift.is_validated() {
        witness = Some(Witness {
            condition: Condition::Unvalidated,
            component: None,
            sample: None,
            log_excess: f64::INFINITY,
        });
    }

    Ok(DecayCertificate {
        gamma,
        sup_norm_log: sup_norm.0,
        weighted_sum_log: weighted_sup.0,
        component_log_margins: margins.into_iter().map(|(m, _)| m).collect(),
        pass: witness.is_none(),
        witness,
    })
}

/// Default validation grid: `count` random `(t, z)` pairs with standard
/// normal `z`, plus corners `t ∈ {0, ½, 1}`, `z ∈ {0, ±1}`.
pub fn validation_samples(dim: usize, count: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let mut out = Vec::with_capacity(count + 9);
    for t in [0.0, 0.5, 1.0] {
        for v in [0.0, 1.0, -1.0] {
            out.push((t, vec![v; dim]));
        }
    }
    let mut rng = stream(seed, Purpose::Validation, 0, 0);
    for _ in 0..count {
        let t = rng.random::<f64>();
        let z = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        out.push((t, z));
    }
    out
}
