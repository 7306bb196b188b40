//! Regularization functionals along a sampled OU path,
//!
//! ```text
//! φ_{n,k}(b; x, y) = ∫_{k2^{-n}}^{(k+1)2^{-n}} b(s, Z_s + x) - b(s, Z_s + y) ds,
//! ```
//!
//! and the path integral `∫_a^b b(s, Z_s + h(s)) ds`, both as left-endpoint
//! Riemann sums on the path's own grid.

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::funcspace::PathFunction;
use crate::spectral::OUPath;
use crate::stats::norm2;

pub const DEFAULT_MIN_SUBNODES: usize = 16;

pub const RULE_LEFT_RIEMANN: &str = "left-riemann";

#[derive(Debug, Clone, PartialEq)]
pub struct PhiQuery {
    pub n: u32,
    pub k: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiResult {
    pub vector: Vec<f64>,
    pub h_norm: f64,
    pub subnodes: usize,
    pub rule: &'static str,
}

/// Node range `[i0, i1)` of the path grid covering `[a, b]`.
fn node_range(path: &OUPath, a: f64, b: f64, min_subnodes: usize) -> Result<(usize, usize)> {
    let grid = path.grid();
    let (i0, i1) = match (grid.node_index(a), grid.node_index(b)) {
        (Some(i0), Some(i1)) if i0 <= i1 => (i0, i1),
        _ => {
            return Err(Error::UnresolvedGrid(format!(
                "interval [{a}, {b}] on a {}-step grid over [0, {}]",
                grid.steps(),
                grid.horizon()
            )))
        }
    };
    if i1 - i0 < min_subnodes {
        return Err(Error::UnresolvedGrid(format!(
            "interval [{a}, {b}] has {} subnodes, at least {min_subnodes} required",
            i1 - i0
        )));
    }
    Ok((i0, i1))
}

fn check_dims(drift: &DriftSpec, path: &OUPath, v: &[f64]) -> Result<()> {
    if path.dim() != drift.dim() {
        return Err(Error::DimensionMismatch { expected: drift.dim(), got: path.dim() });
    }
    if v.len() != drift.dim() {
        return Err(Error::DimensionMismatch { expected: drift.dim(), got: v.len() });
    }
    Ok(())
}

pub fn phi_eval(
    drift: &DriftSpec,
    path: &OUPath,
    q: &PhiQuery,
    min_subnodes: usize,
) -> Result<PhiResult> {
    check_dims(drift, path, &q.x)?;
    check_dims(drift, path, &q.y)?;
    if q.n >= 63 || q.k >= (1u64 << q.n) {
        return Err(Error::InvalidArgument(format!("k = {} must be below 2^{}", q.k, q.n)));
    }
    let w = (-(q.n as f64)).exp2();
    let a = q.k as f64 * w;
    let (i0, i1) = node_range(path, a, a + w, min_subnodes)?;
    let dim = drift.dim();
    let grid = path.grid();
    let mut vector = vec![0.0; dim];
    let (mut zx, mut zy) = (vec![0.0; dim], vec![0.0; dim]);
    let (mut fx, mut fy) = (vec![0.0; dim], vec![0.0; dim]);
    for i in i0..i1 {
        let t = grid.time(i);
        let ds = grid.time(i + 1) - t;
        for (j, z) in path.at(i).iter().enumerate() {
            zx[j] = z + q.x[j];
            zy[j] = z + q.y[j];
        }
        drift.evaluate_into(t, &zx, &mut fx);
        drift.evaluate_into(t, &zy, &mut fy);
        for j in 0..dim {
            vector[j] += ds * (fx[j] - fy[j]);
        }
    }
    Ok(PhiResult { h_norm: norm2(&vector), vector, subnodes: i1 - i0, rule: RULE_LEFT_RIEMANN })
}

/// `∫_a^b drift(s, Z_s + h(s)) ds`.
pub fn functional_eval(
    drift: &DriftSpec,
    path: &OUPath,
    h: &PathFunction,
    a: f64,
    b: f64,
) -> Result<Vec<f64>> {
    if h.dim() != drift.dim() {
        return Err(Error::DimensionMismatch { expected: drift.dim(), got: h.dim() });
    }
    check_dims(drift, path, &vec![0.0; drift.dim()])?;
    if b > h.grid().horizon() + 1e-12 {
        return Err(Error::UnresolvedGrid(format!("h is defined on [0, {}]", h.grid().horizon())));
    }
    let (i0, i1) = node_range(path, a, b, 0)?;
    let dim = drift.dim();
    let grid = path.grid();
    let mut out = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut f = vec![0.0; dim];
    for i in i0..i1 {
        let t = grid.time(i);
        let ds = grid.time(i + 1) - t;
        let hv = h.value_at(t);
        for j in 0..dim {
            z[j] = path.at(i)[j] + hv[j];
        }
        drift.evaluate_into(t, &z, &mut f);
        for j in 0..dim {
            out[j] += ds * f[j];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudometricReport {
    pub cases: usize,
    pub identity_violations: usize,
    pub symmetry_violations: usize,
    pub triangle_violations: usize,
    /// Largest `|φ(x,z)| - |φ(x,y)| - |φ(y,z)|` seen (may be negative).
    pub max_triangle_excess: f64,
    pub tolerance: f64,
}

impl PseudometricReport {
    pub fn passed(&self) -> bool {
        self.identity_violations == 0 && self.symmetry_violations == 0 && self.triangle_violations == 0
    }
}

/// Checks the pseudometric identities of `(x, y) ↦ |φ_{n,k}(x, y)|_H` on
/// each triple, with triangle tolerance `1e-12 · 2^{-n}`.
pub fn pseudometric_check(
    drift: &DriftSpec,
    path: &OUPath,
    n: u32,
    k: u64,
    triples: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
    min_subnodes: usize,
) -> Result<PseudometricReport> {
    let tolerance = 1e-12 * (-(n as f64)).exp2();
    let norm = |x: &[f64], y: &[f64]| -> Result<f64> {
        let q = PhiQuery { n, k, x: x.to_vec(), y: y.to_vec() };
        Ok(phi_eval(drift, path, &q, min_subnodes)?.h_norm)
    };
    let mut report = PseudometricReport {
        cases: triples.len(),
        identity_violations: 0,
        symmetry_violations: 0,
        triangle_violations: 0,
        max_triangle_excess: f64::NEG_INFINITY,
        tolerance,
    };
    for (x, y, z) in triples {
        if norm(x, x)? != 0.0 {
            report.identity_violations += 1;
        }
        let xy = norm(x, y)?;
        if xy != norm(y, x)? {
            report.symmetry_violations += 1;
        }
        let excess = norm(x, z)? - xy - norm(y, z)?;
        report.max_triangle_excess = report.max_triangle_excess.max(excess);
        if excess > tolerance {
            report.triangle_violations += 1;
        }
    }
    Ok(report)
}
