//! Monte Carlo harness for the scaling of `φ_{n,k}` in `n`, the Euler-chain
//! sums, and the martingale moment inequalities.
//!
//! The bounds being probed carry constants that are only known to exist, so
//! every scan reports empirical quantiles of `|φ| / bound` and their fitted
//! log-slope in `n`. Scaling and stability are what get tested, never an
//! absolute value.

mod chain;
mod martingale;

pub use chain::{chain_scan, chain_sum_estimate, euler_chain, ChainScanRow, ChainSum, EulerChain};
pub use martingale::{bdg_check, exp_moment_check, BdgResult, ExpMomentReport, IncrementFamily};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::lattice::{sample_point, QDescriptor, Scale};
use crate::phi::{phi_eval, PhiQuery, DEFAULT_MIN_SUBNODES};
use crate::rng::{stream, Purpose};
use crate::spectral::{simulate_ou, OUPath, SpectralOperator, TimeGrid};
use crate::stats::{dist_inf, log_sum_exp, norm_inf, ols_slope, quantile_sorted};

const LN2: f64 = std::f64::consts::LN_2;

/// `θ = (2/3) γ / (γ + 2)`.
pub fn theta(gamma: f64) -> f64 {
    2.0 / 3.0 * gamma / (gamma + 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub n_values: Vec<u32>,
    /// Fresh paths per level; one sampled point (or pair) per path.
    pub replicas: usize,
    pub gamma: f64,
    /// The bounds are multiplied by `β_A^{-1/2}`.
    pub beta_a: f64,
    /// Paths are simulated on the dyadic grid of this level.
    pub grid_level: u32,
    pub min_subnodes: usize,
    /// Points are drawn from `2Q ∩ 2^{-(n + mesh_offset)} Z^N`.
    pub mesh_offset: u32,
    /// Use `y = x` in ρ-scans.
    pub coincident_pairs: bool,
    pub seed: u64,
    pub exec: Execution,
}

impl ScanConfig {
    /// Grid level `max(n) + 4`, so every interval has 16 subnodes.
    pub fn new(n_values: Vec<u32>, replicas: usize, gamma: f64, seed: u64) -> Self {
        let max_n = n_values.iter().copied().max().unwrap_or(0);
        Self {
            n_values,
            replicas,
            gamma,
            beta_a: 1.0,
            grid_level: max_n + 4,
            min_subnodes: DEFAULT_MIN_SUBNODES,
            mesh_offset: 4,
            coincident_pairs: false,
            seed,
            exec: Execution::default(),
        }
    }

    fn validate(&self, drift: &DriftSpec, op: &SpectralOperator) -> Result<()> {
        if self.n_values.is_empty() || self.replicas == 0 {
            return Err(Error::EmptySample);
        }
        if drift.dim() != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), got: drift.dim() });
        }
        if !(self.beta_a > 0.0) {
            return Err(Error::InvalidArgument(format!("beta_a = {} must be > 0", self.beta_a)));
        }
        if self.grid_level > 24 {
            return Err(Error::InvalidArgument(format!("grid level {} too fine", self.grid_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    Sigma,
    Rho,
}

/// Quantiles at 50/95/99%.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub q50: f64,
    pub q95: f64,
    pub q99: f64,
}

impl Quantiles {
    pub fn of(mut xs: Vec<f64>) -> Result<Self> {
        xs.sort_by(f64::total_cmp);
        Ok(Self {
            q50: quantile_sorted(&xs, 0.50)?,
            q95: quantile_sorted(&xs, 0.95)?,
            q99: quantile_sorted(&xs, 0.99)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub n: u32,
    pub samples: usize,
    /// `|φ| / bound` with the additive floor.
    pub ratio: Quantiles,
    /// `|φ| / bound` with the additive floor dropped.
    pub normalized: Quantiles,
    /// `|φ| / |x|_∞` (σ) or `|φ| / |x - y|_∞` (ρ).
    pub raw: Quantiles,
    /// The floor is below machine epsilon relative to the main term for
    /// every sample of this row, so it did not affect the ratio.
    pub floor_negligible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub kind: ScanKind,
    pub gamma: f64,
    pub theta: f64,
    pub beta_a: f64,
    pub replicas: usize,
    pub rows: Vec<ScanRow>,
    /// OLS slopes of `ln q99` against `n`; `NaN` when some quantile is 0.
    pub slope_ratio: f64,
    pub slope_normalized: f64,
    pub slope_raw: f64,
}

struct Sample {
    ratio: f64,
    normalized: f64,
    raw: f64,
    floor_negligible: bool,
}

/// `ln(main + floor)` and whether `floor < eps · main`, both in log space.
fn log_bound(ln_main: f64, ln_floor: f64) -> (f64, bool) {
    (log_sum_exp(&[ln_main, ln_floor]), ln_floor < ln_main + f64::EPSILON.ln())
}

fn ratio(phi: f64, ln_bound: f64) -> f64 {
    if phi == 0.0 {
        0.0
    } else {
        (phi.ln() - ln_bound).exp()
    }
}

fn sample_nonzero(q: &QDescriptor, m: u32, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    for _ in 0..64 {
        let p = sample_point(q, m, rng)?;
        if !p.is_origin() {
            return Ok(p.to_vector(dim));
        }
    }
    Ok(vec![0.0; dim])
}

fn check_level(cfg: &ScanConfig, n: u32) -> Result<()> {
    if n == 0 || n + cfg.min_subnodes.max(1).ilog2() > cfg.grid_level {
        return Err(Error::UnresolvedGrid(format!(
            "level {n} with {} subnodes on a 2^{} grid",
            cfg.min_subnodes, cfg.grid_level
        )));
    }
    Ok(())
}

fn level_path(op: &SpectralOperator, cfg: &ScanConfig, n: u32, r: usize) -> (OUPath, ChaCha8Rng) {
    let id = ((n as u64) << 32) | r as u64;
    let path = simulate_ou(op, &TimeGrid::dyadic(cfg.grid_level), cfg.seed, id);
    (path, stream(cfg.seed, Purpose::Sampling, id, 0))
}

fn scan<F>(kind: ScanKind, drift: &DriftSpec, op: &SpectralOperator, cfg: &ScanConfig, one: F) -> Result<EstimateReport>
where
    F: Fn(u32, &OUPath, &mut ChaCha8Rng) -> Result<Sample> + Sync + Send,
{
    cfg.validate(drift, op)?;
    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        check_level(cfg, n)?;
        let samples: Vec<Sample> = map_indexed(cfg.exec, cfg.replicas, |r| {
            let (path, mut rng) = level_path(op, cfg, n, r);
            one(n, &path, &mut rng)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        rows.push(ScanRow {
            n,
            samples: samples.len(),
            ratio: Quantiles::of(samples.iter().map(|s| s.ratio).collect())?,
            normalized: Quantiles::of(samples.iter().map(|s| s.normalized).collect())?,
            raw: Quantiles::of(samples.iter().map(|s| s.raw).collect())?,
            floor_negligible: samples.iter().all(|s| s.floor_negligible),
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let slope = |f: fn(&ScanRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        ols_slope(&ns, &ys)
    };
    Ok(EstimateReport {
        kind,
        gamma: cfg.gamma,
        theta: theta(cfg.gamma),
        beta_a: cfg.beta_a,
        replicas: cfg.replicas,
        slope_ratio: slope(|r| r.ratio.q99),
        slope_normalized: slope(|r| r.normalized.q99),
        slope_raw: slope(|r| r.raw.q99),
        rows,
    })
}

/// Quantiles of `|φ_{n,k}(x)|_H / (β_A^{-1/2} n^{1/2+1/γ} 2^{-n/2} (|x|_∞ + 2^{-2^n}))`
/// over fresh paths, random `k` and lattice points `x ∈ 2Q`.
pub fn sigma_scan(drift: &DriftSpec, op: &SpectralOperator, cfg: &ScanConfig) -> Result<EstimateReport> {
    let q = QDescriptor::new(cfg.gamma, 0, Scale::Two)?;
    let dim = op.dim();
    let ln_c = -0.5 * cfg.beta_a.ln();
    scan(ScanKind::Sigma, drift, op, cfg, |n, path, rng| {
        let k = rng.random_range(0..1u64 << n);
        let x = sample_nonzero(&q, n + cfg.mesh_offset, dim, rng)?;
        let query = PhiQuery { n, k, x: x.clone(), y: vec![0.0; dim] };
        let phi = phi_eval(drift, path, &query, cfg.min_subnodes)?.h_norm;
        let xn = norm_inf(&x);
        let nf = n as f64;
        let ln_scale = ln_c + (0.5 + 1.0 / cfg.gamma) * nf.ln() - 0.5 * nf * LN2;
        let ln_floor = -(nf.exp2()) * LN2;
        let (ln_sum, negligible) = log_bound(xn.ln(), ln_floor);
        Ok(Sample {
            ratio: ratio(phi, ln_scale + ln_sum),
            normalized: ratio(phi, ln_scale + xn.ln()),
            raw: ratio(phi, xn.ln()),
            floor_negligible: negligible,
        })
    })
}

/// Quantiles of `|φ_{n,k}(x, y)|_H / (β_A^{-1/2} (√n 2^{-n/6} |x - y|_∞ + 2^{-2^{θn}}))`
/// over fresh paths, random `k` and lattice pairs in `2Q`.
pub fn rho_scan(drift: &DriftSpec, op: &SpectralOperator, cfg: &ScanConfig) -> Result<EstimateReport> {
    let q = QDescriptor::new(cfg.gamma, 0, Scale::Two)?;
    let dim = op.dim();
    let ln_c = -0.5 * cfg.beta_a.ln();
    let th = theta(cfg.gamma);
    scan(ScanKind::Rho, drift, op, cfg, |n, path, rng| {
        let k = rng.random_range(0..1u64 << n);
        let m = n + cfg.mesh_offset;
        let x = sample_nonzero(&q, m, dim, rng)?;
        let y = if cfg.coincident_pairs { x.clone() } else { sample_point(&q, m, rng)?.to_vector(dim) };
        let query = PhiQuery { n, k, x: x.clone(), y: y.clone() };
        let phi = phi_eval(drift, path, &query, cfg.min_subnodes)?.h_norm;
        let d = dist_inf(&x, &y);
        let nf = n as f64;
        let ln_main = ln_c + 0.5 * nf.ln() - nf / 6.0 * LN2 + d.ln();
        let ln_floor = ln_c - (th * nf).exp2() * LN2;
        let (ln_b, negligible) = log_bound(ln_main, ln_floor);
        Ok(Sample {
            ratio: ratio(phi, ln_b),
            normalized: ratio(phi, ln_main),
            raw: ratio(phi, d.ln()),
            floor_negligible: negligible,
        })
    })
}

/// One `φ_{n,k}(x, y)` evaluation with both bounds, as drawn by [`rho_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSample {
    pub n: u32,
    pub k: u64,
    /// `|x - y|_∞`.
    pub dist_inf: f64,
    pub phi_norm: f64,
    /// `β_A^{-1/2} n^{1/2+1/γ} 2^{-n/2} (|x - y|_∞ + 2^{-2^n})`.
    pub bound_sigma: f64,
    /// `β_A^{-1/2} (√n 2^{-n/6} |x - y|_∞ + 2^{-2^{θn}})`.
    pub bound_rho: f64,
}

/// The individual samples behind a ρ-scan with the same configuration, in
/// level-then-replica order.
pub fn phi_samples(drift: &DriftSpec, op: &SpectralOperator, cfg: &ScanConfig) -> Result<Vec<PhiSample>> {
    cfg.validate(drift, op)?;
    let q = QDescriptor::new(cfg.gamma, 0, Scale::Two)?;
    let dim = op.dim();
    let ln_c = -0.5 * cfg.beta_a.ln();
    let th = theta(cfg.gamma);
    let mut out = Vec::with_capacity(cfg.n_values.len() * cfg.replicas);
    for &n in &cfg.n_values {
        check_level(cfg, n)?;
        let rows = map_indexed(cfg.exec, cfg.replicas, |r| {
            let (path, mut rng) = level_path(op, cfg, n, r);
            let k = rng.random_range(0..1u64 << n);
            let m = n + cfg.mesh_offset;
            let x = sample_nonzero(&q, m, dim, &mut rng)?;
            let y = if cfg.coincident_pairs { x.clone() } else { sample_point(&q, m, &mut rng)?.to_vector(dim) };
            let query = PhiQuery { n, k, x: x.clone(), y: y.clone() };
            let phi_norm = phi_eval(drift, &path, &query, cfg.min_subnodes)?.h_norm;
            let d = dist_inf(&x, &y);
            let nf = n as f64;
            let sigma_scale = (ln_c + (0.5 + 1.0 / cfg.gamma) * nf.ln() - 0.5 * nf * LN2).exp();
            let floor_sigma = (-(nf.exp2()) * LN2).exp();
            let rho_scale = (ln_c + 0.5 * nf.ln() - nf / 6.0 * LN2).exp();
            let floor_rho = (ln_c - (th * nf).exp2() * LN2).exp();
            Ok(PhiSample {
                n,
                k,
                dist_inf: d,
                phi_norm,
                bound_sigma: sigma_scale * (d + floor_sigma),
                bound_rho: rho_scale * d + floor_rho,
            })
        });
        for row in rows {
            out.push(row?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_values() {
        assert!((theta(7.0) - 14.0 / 27.0).abs() < 1e-15);
        assert!((theta(1.0) - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn zero_drift_scans_are_zero() {
        let op = SpectralOperator::power_law(3, 2.0).unwrap();
        let cfg = ScanConfig::new(vec![1, 2, 3], 10, 1.0, 4);
        for r in [sigma_scan(&DriftSpec::zero(3), &op, &cfg).unwrap(), rho_scan(&DriftSpec::zero(3), &op, &cfg).unwrap()] {
            assert!(r.rows.iter().all(|row| row.ratio.q99 == 0.0 && row.raw.q99 == 0.0));
            assert!(r.slope_ratio.is_nan());
        }
    }

    #[test]
    fn coincident_pairs_are_zero() {
        let op = SpectralOperator::power_law(2, 2.0).unwrap();
        let f = DriftSpec::sign_envelope(1.0, 2, 1.0, 0.0).unwrap();
        let mut cfg = ScanConfig::new(vec![2, 3], 20, 1.0, 4);
        cfg.coincident_pairs = true;
        let r = rho_scan(&f, &op, &cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio.q99 == 0.0));
    }

    #[test]
    fn quantiles_are_ordered() {
        let op = SpectralOperator::power_law(2, 2.0).unwrap();
        let f = DriftSpec::new(crate::drift::DriftFamily::Lipschitz { kappa: 3.0 }, &[0.05, 0.01]).unwrap();
        let r = sigma_scan(&f, &op, &ScanConfig::new(vec![2, 4], 50, 1.0, 1)).unwrap();
        for row in &r.rows {
            assert!(row.ratio.q50 <= row.ratio.q95 && row.ratio.q95 <= row.ratio.q99);
        }
        assert!(!r.rows[0].floor_negligible || r.rows[0].n > 5);
    }

    #[test]
    fn phi_samples_follow_rho_scan() {
        let op = SpectralOperator::power_law(3, 2.0).unwrap();
        let f = DriftSpec::sign_envelope(2.0, 3, 1.0, 0.0).unwrap();
        let cfg = ScanConfig::new(vec![2, 4], 30, 2.0, 5);
        let samples = phi_samples(&f, &op, &cfg).unwrap();
        let report = rho_scan(&f, &op, &cfg).unwrap();
        let mut ratios: Vec<f64> =
            samples.iter().filter(|s| s.n == 4).map(|s| s.phi_norm / s.bound_rho).collect();
        ratios.sort_by(f64::total_cmp);
        let q99 = quantile_sorted(&ratios, 0.99).unwrap();
        assert!((q99 - report.rows[1].ratio.q99).abs() <= 1e-12 * q99);
        assert!(samples.iter().all(|s| s.k < 1 << s.n && s.bound_sigma > 0.0));
    }

    #[test]
    fn unresolved_level_is_rejected() {
        let op = SpectralOperator::power_law(1, 2.0).unwrap();
        let mut cfg = ScanConfig::new(vec![3], 2, 1.0, 0);
        cfg.grid_level = 5;
        assert!(matches!(sigma_scan(&DriftSpec::zero(1), &op, &cfg), Err(Error::UnresolvedGrid(_))));
    }
}
