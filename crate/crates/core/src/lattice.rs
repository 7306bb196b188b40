//! The sets `Q = {x : |x_n| ≤ 2 exp(-e^{n^γ})}`, their balls
//! `Q_r = {x ∈ Q : |x|_∞ ≤ 2·2^{-r}}`, the dilations `2Q_r`, and the dyadic
//! lattices `Q_r ∩ 2^{-m} Z^N`.
//!
//! Component bounds are handled in log space throughout: `2 exp(-e^{n^γ})`
//! already underflows a double at `n = 2` once `γ > 6`.
//!
//! The effective-dimension bound `(ln(m+1))^{1/γ}` is only valid after
//! rounding up (for `γ = 1, m = 10` the lattice has effective dimension 3
//! while `ln 11 ≈ 2.398`), so [`effdim_bound`] returns the ceiling.

use rand::Rng;

use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Relative slack for log-space membership of points that sit on a bound.
const MEMBERSHIP_SLACK: f64 = 1e-12;

/// `ln(2 exp(-e^{n^γ})) = ln 2 - e^{n^γ}`.
pub fn component_bound_log(gamma: f64, n: usize) -> f64 {
    LN2 - (n as f64).powf(gamma).exp()
}

/// Whether the set is `Q_r` or its dilation `2Q_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    One,
    Two,
}

impl Scale {
    pub fn factor(self) -> u64 {
        match self {
            Scale::One => 1,
            Scale::Two => 2,
        }
    }
}

/// Parameters `(γ, r, scale)` of `scale · Q_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QDescriptor {
    gamma: f64,
    r: u32,
    scale: Scale,
}

impl QDescriptor {
    pub fn new(gamma: f64, r: u32, scale: Scale) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must be >= 1")));
        }
        if r > 60 {
            return Err(Error::InvalidArgument(format!("radius exponent r = {r} too large")));
        }
        Ok(Self { gamma, r, scale })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// `ln(scale · min(2·2^{-r}, 2 exp(-e^{n^γ})))`.
    pub fn component_log_bound(&self, n: usize) -> f64 {
        let radius = LN2 - self.r as f64 * LN2;
        (self.scale.factor() as f64).ln() + radius.min(component_bound_log(self.gamma, n))
    }

    /// Largest `K` with `K 2^{-m}` inside the bound of component `n`.
    pub fn max_coord(&self, n: usize, m: u32) -> u64 {
        let radius_coord = self.scale.factor() << (m - self.r.min(m) + 1);
        let decay_level =
            (self.scale.factor() as f64).ln() + component_bound_log(self.gamma, n) + m as f64 * LN2;
        if decay_level >= (radius_coord as f64).ln() {
            radius_coord
        } else if decay_level < 0.0 {
            0
        } else {
            decay_level.exp().floor() as u64
        }
    }

    fn check_mesh(&self, m: u32) -> Result<()> {
        if m < self.r {
            return Err(Error::MeshBelowRadius { m, r: self.r });
        }
        if m > 62 {
            return Err(Error::InvalidArgument(format!("mesh exponent m = {m} too large")));
        }
        Ok(())
    }

    /// Membership of a real vector (components beyond its length are 0).
    /// Returns the first violating component (1-based) on failure.
    pub fn check_contains(&self, x: &[f64]) -> Result<()> {
        for (i, &v) in x.iter().enumerate() {
            let n = i + 1;
            if !v.is_finite() {
                return Err(Error::OutsideSet { component: n });
            }
            if v == 0.0 {
                continue;
            }
            let bound = self.component_log_bound(n);
            if v.abs().ln() > bound + MEMBERSHIP_SLACK * bound.abs().max(1.0) {
                return Err(Error::OutsideSet { component: n });
            }
        }
        Ok(())
    }
}

/// `x_n = coords[n-1] · 2^{-m}`; components past `coords.len()` are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    pub m: u32,
    pub coords: Vec<i64>,
}

impl LatticePoint {
    pub fn origin(m: u32) -> Self {
        Self { m, coords: Vec::new() }
    }

    pub fn value(&self, n: usize) -> f64 {
        self.coords
            .get(n - 1)
            .map_or(0.0, |&k| k as f64 * (-(self.m as f64)).exp2())
    }

    /// The point as a vector of length `dim` (truncating or zero-padding).
    pub fn to_vector(&self, dim: usize) -> Vec<f64> {
        (1..=dim).map(|n| self.value(n)).collect()
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&k| k == 0)
    }
}

/// Effective dimension: the smallest `d` such that every lattice point of
/// `q` at mesh `2^{-m}` vanishes in components `n ≥ d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EffDim(pub usize);

/// Brute-force effective dimension of `q` at mesh `2^{-m}`.
pub fn effective_dimension(q: &QDescriptor, m: u32) -> Result<EffDim> {
    q.check_mesh(m)?;
    let mut d = 1;
    // component bounds decrease in n, so the first vanishing component ends the scan
    while q.max_coord(d, m) >= 1 {
        d += 1;
    }
    Ok(EffDim(d))
}

/// `max(1, ⌈(ln(m+1))^{1/γ}⌉)`.
pub fn effdim_bound(gamma: f64, m: u32) -> usize {
    let raw = ((m as f64 + 1.0).ln()).powf(1.0 / gamma);
    (raw.ceil() as usize).max(1)
}

/// Counting bound `(4·scale·2^{m-r} + 1)^d` with `d` the effective dimension.
pub fn counting_bound(q: &QDescriptor, m: u32) -> Result<f64> {
    let EffDim(d) = effective_dimension(q, m)?;
    let side = 4.0 * q.scale().factor() as f64 * ((m - q.r()) as f64).exp2() + 1.0;
    Ok(side.powi(d as i32))
}

/// Exact number of lattice points: the product of the per-component ranges
/// `2K_n + 1`. `None` if it does not fit in a `u128`.
pub fn lattice_count(q: &QDescriptor, m: u32) -> Result<Option<u128>> {
    let EffDim(d) = effective_dimension(q, m)?;
    Ok((1..d).try_fold(1u128, |acc, n| acc.checked_mul(2 * q.max_coord(n, m) as u128 + 1)))
}

fn predicted_count(q: &QDescriptor, m: u32, d: usize) -> f64 {
    (1..d).map(|n| 2.0 * q.max_coord(n, m) as f64 + 1.0).product()
}

/// Default refusal threshold for [`enumerate_lattice`].
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// All points of `q ∩ 2^{-m} Z^N`, lexicographic in the coordinates.
pub fn enumerate_lattice(q: &QDescriptor, m: u32, budget: u64) -> Result<Vec<LatticePoint>> {
    let EffDim(d) = effective_dimension(q, m)?;
    let predicted = predicted_count(q, m, d);
    if predicted > budget as f64 {
        return Err(Error::BudgetExceeded { predicted, budget });
    }
    let limits: Vec<i64> = (1..d).map(|n| q.max_coord(n, m) as i64).collect();
    let mut coords: Vec<i64> = limits.iter().map(|&k| -k).collect();
    let mut out = Vec::with_capacity(predicted as usize);
    loop {
        out.push(LatticePoint { m, coords: coords.clone() });
        // odometer, last component fastest
        let mut i = coords.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if coords[i] < limits[i] {
                coords[i] += 1;
                break;
            }
            coords[i] = -limits[i];
        }
    }
}

/// Whether `p` lies in `q ∩ 2^{-m} Z^N`.
pub fn contains(q: &QDescriptor, p: &LatticePoint) -> bool {
    p.coords
        .iter()
        .enumerate()
        .all(|(i, &k)| k.unsigned_abs() <= q.max_coord(i + 1, p.m))
}

fn round_half_toward_zero(y: f64) -> i64 {
    let a = y.abs();
    let fl = a.floor();
    let k = if a - fl > 0.5 { fl + 1.0 } else { fl };
    (k as i64) * if y < 0.0 { -1 } else { 1 }
}

/// Nearest lattice point in `|·|_∞`, componentwise, ties toward zero.
pub fn project(q: &QDescriptor, m: u32, x: &[f64]) -> Result<LatticePoint> {
    q.check_mesh(m)?;
    q.check_contains(x)?;
    let EffDim(d) = effective_dimension(q, m)?;
    let scale = (m as f64).exp2();
    let coords = (1..d)
        .map(|n| {
            let v = x.get(n - 1).copied().unwrap_or(0.0);
            let limit = q.max_coord(n, m) as i64;
            round_half_toward_zero(v * scale).clamp(-limit, limit)
        })
        .collect();
    Ok(LatticePoint { m, coords })
}

/// Uniform draw from the lattice's coordinate box (which is the lattice).
pub fn sample_point<R: Rng + ?Sized>(q: &QDescriptor, m: u32, rng: &mut R) -> Result<LatticePoint> {
    let EffDim(d) = effective_dimension(q, m)?;
    let coords = (1..d)
        .map(|n| {
            let k = q.max_coord(n, m) as i64;
            rng.random_range(-k..=k)
        })
        .collect();
    Ok(LatticePoint { m, coords })
}

/// `ln(r+m+1)^{1/γ} ≤ ln(r+1)^{1/γ} + ln(m+1)^{1/γ}`.
pub fn check_log_subadditivity(gamma: f64, r: u64, m: u64) -> bool {
    let p = 1.0 / gamma;
    let f = |v: u64| ((v as f64) + 1.0).ln().powf(p);
    f(r + m) <= f(r) + f(m)
}

/// Every finite double is `k 2^{-m}` for some integers, so every finite
/// vector is a dyadic point.
pub fn is_dyadic(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{norm2, norm_inf};

    fn q(gamma: f64, r: u32) -> QDescriptor {
        QDescriptor::new(gamma, r, Scale::One).unwrap()
    }

    #[test]
    fn bound_log_values() {
        let e = std::f64::consts::E;
        assert!((component_bound_log(1.0, 1) - (LN2 - e)).abs() < 1e-15);
        assert!((component_bound_log(1.0, 1) + 2.02513).abs() < 1e-5);
        assert_eq!(component_bound_log(2.0, 1), component_bound_log(1.0, 1));
        assert!((component_bound_log(1.0, 2) + 6.69591).abs() < 1e-5);
    }

    #[test]
    fn effective_dimension_examples() {
        assert_eq!(effective_dimension(&q(1.0, 0), 10).unwrap(), EffDim(3));
        assert_eq!(effective_dimension(&q(1.0, 0), 2).unwrap(), EffDim(1));
        assert_eq!(effective_dimension(&q(7.0, 0), 3).unwrap(), EffDim(2));
        assert_eq!(
            effective_dimension(&q(1.0, 3), 2),
            Err(Error::MeshBelowRadius { m: 2, r: 3 })
        );
    }

    #[test]
    fn effdim_bound_examples() {
        assert_eq!(effdim_bound(1.0, 10), 3);
        assert_eq!(effdim_bound(7.0, 3), 2);
        assert_eq!(effdim_bound(3.0, 0), 1);
    }

    #[test]
    fn enumeration_examples() {
        let pts = enumerate_lattice(&q(1.0, 0), 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].is_origin());

        // (2·135 + 1)(2·1 + 1)
        let pts = enumerate_lattice(&q(1.0, 0), 10, DEFAULT_BUDGET).unwrap();
        assert_eq!(pts.len(), 813);
        assert_eq!(lattice_count(&q(1.0, 0), 10).unwrap(), Some(813));

        // m = r with every bound below 2^{-m}: only the origin
        let pts = enumerate_lattice(&q(7.0, 2), 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(pts, vec![LatticePoint { m: 2, coords: vec![] }]);
    }

    #[test]
    fn budget_refusal_reports_prediction() {
        match enumerate_lattice(&q(1.0, 0), 10, 100) {
            Err(Error::BudgetExceeded { predicted, budget }) => {
                assert_eq!(predicted, 813.0);
                assert_eq!(budget, 100);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn projection_examples() {
        let qq = q(1.0, 0);
        assert!(project(&qq, 10, &[0.0, 0.0]).unwrap().is_origin());
        let p = project(&qq, 10, &[0.1005, 0.0]).unwrap();
        assert_eq!(p.coords, vec![103, 0]);
        let on = LatticePoint { m: 10, coords: vec![-77, 1] };
        assert_eq!(project(&qq, 10, &on.to_vector(2)).unwrap(), on);
    }

    #[test]
    fn projection_rejects_outside_points() {
        let qq = q(1.0, 0);
        assert_eq!(project(&qq, 10, &[0.2]), Err(Error::OutsideSet { component: 1 }));
        assert_eq!(project(&qq, 10, &[0.1, 0.01]), Err(Error::OutsideSet { component: 2 }));
        // r = 2 caps |x|_∞ at 0.5 but component 1 is capped harder by its decay bound
        assert!(project(&q(1.0, 2), 10, &[0.13]).is_ok());
    }

    #[test]
    fn ties_go_toward_zero() {
        let qq = q(1.0, 0);
        let p = project(&qq, 10, &[2.5 / 1024.0]).unwrap();
        assert_eq!(p.coords[0], 2);
        let p = project(&qq, 10, &[-2.5 / 1024.0]).unwrap();
        assert_eq!(p.coords[0], -2);
    }

    #[test]
    fn subadditivity_examples() {
        for m in [0, 1, 5, 100] {
            assert!(check_log_subadditivity(3.0, 0, m));
        }
        assert!(check_log_subadditivity(1.0, 1, 1));
        assert!(check_log_subadditivity(7.0, 5, 9));
    }

    #[test]
    fn norm_equivalence_on_lattice() {
        let qq = q(1.0, 0);
        let EffDim(d) = effective_dimension(&qq, 10).unwrap();
        for p in enumerate_lattice(&qq, 10, DEFAULT_BUDGET).unwrap() {
            let v = p.to_vector(d);
            assert!(norm2(&v) <= (d as f64).sqrt() * norm_inf(&v) + 1e-15);
            assert!(norm_inf(&v) <= norm2(&v));
        }
    }

    #[test]
    fn dilated_set_is_larger() {
        let one = QDescriptor::new(1.0, 0, Scale::One).unwrap();
        let two = QDescriptor::new(1.0, 0, Scale::Two).unwrap();
        for m in 0..12 {
            let a = lattice_count(&one, m).unwrap().unwrap();
            let b = lattice_count(&two, m).unwrap().unwrap();
            assert!(b >= a);
        }
        assert!(QDescriptor::new(0.5, 0, Scale::One).is_err());
    }

    #[test]
    fn dyadic_predicate() {
        assert!(is_dyadic(&[0.1, -3.0, 0.0]));
        assert!(!is_dyadic(&[f64::NAN]));
    }
}
