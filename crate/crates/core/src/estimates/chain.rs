//! Euler chains `x_{q+1} = x_q + φ_{n,k+q}(b_q; x_q)` and the chain sum
//! `Σ_q |φ_{n,k+q}(b_q; x_{q+1}, x_q)|_H` against
//! `2^{-n} Σ|x_q|_H + 2^{-3n/4}|x_0|_H + 2^{-n/24} Σ|γ_q|_H + N 2^{-2^{θn}}`.

use super::{theta, Quantiles};
use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::lattice::{sample_point, QDescriptor, Scale};
use crate::phi::{phi_eval, PhiQuery};
use crate::rng::{stream, Purpose};
use crate::spectral::{simulate_ou, OUPath, SpectralOperator, TimeGrid};
use crate::stats::norm2;

#[derive(Debug, Clone, PartialEq)]
pub struct EulerChain {
    pub n: u32,
    pub k: u64,
    pub points: Vec<Vec<f64>>,
    /// `φ_{n,k+q}(b_q; x_q)` for `q < r`.
    pub phis: Vec<Vec<f64>>,
    /// `γ_q = x_{q+1} - x_q - φ_{n,k+q}(b_q; x_q)`.
    pub errors: Vec<Vec<f64>>,
}

impl EulerChain {
    pub fn r(&self) -> usize {
        self.points.len() - 1
    }

    /// Chain through given points, with the Euler errors measured.
    pub fn from_points(
        drifts: &[DriftSpec],
        path: &OUPath,
        n: u32,
        k: u64,
        points: Vec<Vec<f64>>,
        min_subnodes: usize,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        let r = points.len() - 1;
        check_interval(n, k, r)?;
        let mut phis = Vec::with_capacity(r);
        let mut errors = Vec::with_capacity(r);
        for q in 0..r {
            let phi = phi_at(drifts, path, n, k, q, &points[q], min_subnodes)?;
            errors.push(
                points[q + 1].iter().zip(&points[q]).zip(&phi).map(|((a, b), p)| a - b - p).collect(),
            );
            phis.push(phi);
        }
        Ok(Self { n, k, points, phis, errors })
    }
}

fn check_interval(n: u32, k: u64, r: usize) -> Result<()> {
    if n >= 63 {
        return Err(Error::InvalidArgument(format!("level n = {n} too large")));
    }
    let max = (1u64 << n) - 1;
    let end = k + r as u64;
    if end > max {
        return Err(Error::IntervalOverflow { end, max });
    }
    Ok(())
}

fn drift_for(drifts: &[DriftSpec], q: usize) -> Result<&DriftSpec> {
    match drifts.len() {
        0 => Err(Error::InvalidArgument("no drift given".into())),
        1 => Ok(&drifts[0]),
        _ => drifts.get(q).ok_or_else(|| Error::InvalidArgument(format!("no drift b_{q}"))),
    }
}

fn phi_at(
    drifts: &[DriftSpec],
    path: &OUPath,
    n: u32,
    k: u64,
    q: usize,
    x: &[f64],
    min_subnodes: usize,
) -> Result<Vec<f64>> {
    let b = drift_for(drifts, q)?;
    let query = PhiQuery { n, k: k + q as u64, x: x.to_vec(), y: vec![0.0; x.len()] };
    Ok(phi_eval(b, path, &query, min_subnodes)?.vector)
}

/// Builds `x_0..x_r`. `drifts` holds `b_0..b_{r-1}`, or a single drift used
/// for every step. `r ≤ 2^{n/4}` unless `allow_long`.
#[allow(clippy::too_many_arguments)]
pub fn euler_chain(
    drifts: &[DriftSpec],
    path: &OUPath,
    n: u32,
    k: u64,
    r: usize,
    x0: &[f64],
    min_subnodes: usize,
    allow_long: bool,
) -> Result<EulerChain> {
    check_interval(n, k, r)?;
    let limit = (n as f64 / 4.0).exp2();
    if !allow_long && r as f64 > limit {
        return Err(Error::ChainTooLong { r, limit });
    }
    let mut points = vec![x0.to_vec()];
    let mut phis = Vec::with_capacity(r);
    for q in 0..r {
        let phi = phi_at(drifts, path, n, k, q, &points[q], min_subnodes)?;
        points.push(points[q].iter().zip(&phi).map(|(a, b)| a + b).collect());
        phis.push(phi);
    }
    let errors = vec![vec![0.0; x0.len()]; r];
    Ok(EulerChain { n, k, points, phis, errors })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSum {
    /// `Σ_{q<r} |φ_{n,k+q}(b_q; x_{q+1}, x_q)|_H`.
    pub left: f64,
    /// `2^{-n} Σ_{q<r} |x_q|_H`.
    pub state_term: f64,
    /// `2^{-3n/4} |x_0|_H`.
    pub start_term: f64,
    /// `2^{-n/24} Σ_{q<r} |γ_q|_H`.
    pub error_term: f64,
    /// `N 2^{-2^{θn}}` (may underflow to 0).
    pub floor_term: f64,
    pub bracket: f64,
    /// `left / bracket`; `None` when both vanish.
    pub implied_constant: Option<f64>,
}

/// Left side and bracket for one chain. `θ` comes from `gamma`.
pub fn chain_sum_estimate(
    chain: &EulerChain,
    drifts: &[DriftSpec],
    path: &OUPath,
    gamma: f64,
    min_subnodes: usize,
) -> Result<ChainSum> {
    let n = chain.n as f64;
    let r = chain.r();
    let mut left = 0.0;
    for q in 0..r {
        let b = drift_for(drifts, q)?;
        let query = PhiQuery {
            n: chain.n,
            k: chain.k + q as u64,
            x: chain.points[q + 1].clone(),
            y: chain.points[q].clone(),
        };
        left += phi_eval(b, path, &query, min_subnodes)?.h_norm;
    }
    let state_term = (-n).exp2() * chain.points[..r].iter().map(|x| norm2(x)).sum::<f64>();
    let start_term = (-0.75 * n).exp2() * norm2(&chain.points[0]);
    let error_term = (-n / 24.0).exp2() * chain.errors.iter().map(|g| norm2(g)).sum::<f64>();
    let floor_term = (r as f64) * (-(theta(gamma) * n).exp2()).exp2();
    let bracket = state_term + start_term + error_term + floor_term;
    let implied_constant = if left == 0.0 && bracket == 0.0 { None } else { Some(left / bracket) };
    Ok(ChainSum { left, state_term, start_term, error_term, floor_term, bracket, implied_constant })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainScanRow {
    pub n: u32,
    pub r: usize,
    pub paths: usize,
    /// Paths where the constant is undefined (both sides zero).
    pub undefined: usize,
    pub implied: Option<Quantiles>,
}

/// Per level: `paths` fresh paths, Euler chains of length `r` from `k = 0`
/// started at a random lattice point of `Q`, and the quantiles of the
/// implied constant.
#[allow(clippy::too_many_arguments)]
pub fn chain_scan(
    drift: &DriftSpec,
    op: &SpectralOperator,
    n_values: &[u32],
    r: usize,
    paths: usize,
    gamma: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ChainScanRow>> {
    let q = QDescriptor::new(gamma, 0, Scale::One)?;
    let max_n = n_values.iter().copied().max().ok_or(Error::EmptySample)?;
    let grid = TimeGrid::dyadic(max_n + 4);
    let drifts = std::slice::from_ref(drift);
    n_values
        .iter()
        .map(|&n| {
            let r = r.min((1usize << n) - 1);
            let results: Vec<Option<f64>> = map_indexed(exec, paths, |p| {
                let id = ((n as u64) << 32) | p as u64;
                let path: OUPath = simulate_ou(op, &grid, seed, id);
                let mut rng = stream(seed, Purpose::Sampling, id, 0);
                let x0 = sample_point(&q, n + 4, &mut rng)?.to_vector(op.dim());
                let chain = euler_chain(drifts, &path, n, 0, r, &x0, 16, true)?;
                Ok(chain_sum_estimate(&chain, drifts, &path, gamma, 16)?.implied_constant)
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let defined: Vec<f64> = results.iter().flatten().copied().collect();
            Ok(ChainScanRow {
                n,
                r,
                paths,
                undefined: paths - defined.len(),
                implied: if defined.is_empty() { None } else { Some(Quantiles::of(defined)?) },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftFamily;

    fn setup() -> (SpectralOperator, OUPath) {
        let op = SpectralOperator::power_law(2, 2.0).unwrap();
        let path = simulate_ou(&op, &TimeGrid::dyadic(10), 2, 0);
        (op, path)
    }

    #[test]
    fn zero_drift_chain_is_constant() {
        let (_, path) = setup();
        let x0 = [0.1, -0.05];
        let c = euler_chain(&[DriftSpec::zero(2)], &path, 6, 3, 2, &x0, 16, false).unwrap();
        assert!(c.points.iter().all(|p| p == &x0.to_vec()));
        let s = chain_sum_estimate(&c, &[DriftSpec::zero(2)], &path, 7.0, 16).unwrap();
        assert_eq!(s.left, 0.0);
    }

    #[test]
    fn empty_chain() {
        let (_, path) = setup();
        let c = euler_chain(&[DriftSpec::zero(2)], &path, 4, 0, 0, &[0.3, 0.0], 16, false).unwrap();
        assert_eq!(c.points, vec![vec![0.3, 0.0]]);
        let s = chain_sum_estimate(&c, &[DriftSpec::zero(2)], &path, 7.0, 16).unwrap();
        assert_eq!(s.implied_constant, Some(0.0));
        let c = euler_chain(&[DriftSpec::zero(2)], &path, 4, 0, 0, &[0.0, 0.0], 16, false).unwrap();
        let s = chain_sum_estimate(&c, &[DriftSpec::zero(2)], &path, 7.0, 16).unwrap();
        assert_eq!(s.implied_constant, None);
    }

    #[test]
    fn space_constant_drift_chain_is_constant() {
        let (_, path) = setup();
        let f = DriftSpec::new(DriftFamily::Constant, &[0.3, 0.2]).unwrap();
        let c = euler_chain(&[f], &path, 4, 0, 2, &[0.1, 0.1], 16, false).unwrap();
        assert!(c.points.iter().all(|p| p == &vec![0.1, 0.1]));
    }

    #[test]
    fn chain_limits() {
        let (_, path) = setup();
        let z = [DriftSpec::zero(2)];
        assert!(matches!(
            euler_chain(&z, &path, 4, 14, 2, &[0.0, 0.0], 16, true),
            Err(Error::IntervalOverflow { end: 16, max: 15 })
        ));
        assert!(matches!(
            euler_chain(&z, &path, 4, 0, 3, &[0.0, 0.0], 16, false),
            Err(Error::ChainTooLong { r: 3, .. })
        ));
        assert!(euler_chain(&z, &path, 4, 0, 3, &[0.0, 0.0], 16, true).is_ok());
    }

    #[test]
    fn recomputed_phis_match_bitwise() {
        let (_, path) = setup();
        let f = [DriftSpec::new(DriftFamily::Lipschitz { kappa: 5.0 }, &[0.5, 0.2]).unwrap()];
        let c = euler_chain(&f, &path, 6, 1, 4, &[0.2, -0.1], 16, true).unwrap();
        let again = EulerChain::from_points(&f, &path, 6, 1, c.points.clone(), 16).unwrap();
        assert_eq!(again.phis, c.phis);
        assert!(again.errors.iter().flatten().all(|e| e.abs() <= f64::EPSILON));
    }
}
