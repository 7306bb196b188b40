//! Diagonal operator `A e_n = λ_n e_n`, its semigroup, and exact simulation of
//! the Ornstein-Uhlenbeck process `Z_t = ∫_0^t e^{-(t-s)A} dB_s` in a fixed
//! truncation of `D` modes.
//!
//! Paths use the exact one-step transition
//! `Z_{t+h} = e^{-λh} Z_t + sqrt((1 - e^{-2λh}) / (2λ)) ξ`, so no
//! time-discretization bias enters any variance check.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::{stream, Purpose};

/// Positive, nondecreasing eigenvalues `λ_1 ≤ … ≤ λ_D` of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("operator needs at least one mode".into()));
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalue λ_{} = {l} must be positive and finite",
                    i + 1
                )));
            }
            if i > 0 && l < eigenvalues[i - 1] {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalues must be nondecreasing: λ_{} = {l} < λ_{} = {}",
                    i + 1,
                    i,
                    eigenvalues[i - 1]
                )));
            }
        }
        Ok(Self { eigenvalues })
    }

    /// `λ_n = n^alpha` for `n = 1..=dim`.
    pub fn power_law(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("power-law exponent {alpha} must be >= 0")));
        }
        Self::new((1..=dim).map(|n| (n as f64).powf(alpha)).collect())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_n`, 1-based.
    pub fn eigenvalue(&self, n: usize) -> Result<f64> {
        self.check_mode(n)?;
        Ok(self.eigenvalues[n - 1])
    }

    fn check_mode(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.dim() {
            return Err(Error::ModeOutOfRange { index: n, dim: self.dim() });
        }
        Ok(())
    }

    /// `e^{-tA} x`, componentwise `e^{-λ_n t} x_n`.
    pub fn semigroup_apply(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.eigenvalues.iter().zip(x).map(|(l, xi)| (-l * t).exp() * xi).collect())
    }

    /// Variance `1/(2λ_n)` of the invariant law `N(0, ½A^{-1})` in mode `n`.
    pub fn stationary_variance(&self, n: usize) -> Result<f64> {
        Ok(0.5 / self.eigenvalue(n)?)
    }

    /// Variance of `<Z_t, e_n>` started from zero: `(1 - e^{-2λ_n t}) / (2λ_n)`.
    pub fn marginal_variance(&self, n: usize, t: f64) -> Result<f64> {
        let l = self.eigenvalue(n)?;
        Ok(transition_variance(l, t))
    }

    /// `A^{-1}` is only trace class in the limit; at finite `D` we can only
    /// warn when the retained modes grow slower than `n^{1.01}`.
    pub fn trace_class_advisory(&self) -> Option<String> {
        let d = self.dim();
        if d < 2 {
            return None;
        }
        let growth = (self.eigenvalues[d - 1] / self.eigenvalues[0]).ln() / (d as f64).ln();
        (growth < 1.01).then(|| {
            format!("eigenvalues grow like n^{growth:.3} over {d} modes; sum of 1/λ_n would diverge")
        })
    }
}

/// `(1 - e^{-2λh}) / (2λ)`, accurate for small `λh`.
pub(crate) fn transition_variance(lambda: f64, h: f64) -> f64 {
    -(-2.0 * lambda * h).exp_m1() / (2.0 * lambda)
}

/// Uniform grid `t_i = i·h` on `[0, horizon]`, `horizon ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must lie in (0, 1]"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    /// Unit-horizon grid with `2^level` steps.
    pub fn dyadic(level: u32) -> Self {
        Self { horizon: 1.0, steps: 1usize << level }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    /// Index of the node at time `t`, if `t` is (up to rounding) a node.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = t / self.step();
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 {
            return None;
        }
        Some(i as usize)
    }

    /// Node index of the dyadic point `k 2^{-n}`.
    pub fn dyadic_node(&self, n: u32, k: u64) -> Result<usize> {
        let t = k as f64 * (-(n as f64)).exp2();
        self.node_index(t).ok_or_else(|| {
            Error::UnresolvedGrid(format!(
                "dyadic point {k}·2^-{n} on a grid of {} steps over [0, {}]",
                self.steps, self.horizon
            ))
        })
    }
}

/// Noise source for path simulation. `Zero` forces every Gaussian draw to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Noise {
    #[default]
    Gaussian,
    Zero,
}

/// One sampled trajectory of `Z^A`, stored node-major: `at(i)` is the
/// `D`-vector of coefficients at `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OUPath {
    grid: TimeGrid,
    dim: usize,
    coefficients: Vec<f64>,
    seed: u64,
    replica: u64,
}

impl OUPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.coefficients[i * self.dim..(i + 1) * self.dim]
    }

    /// `<Z_{t_i}, e_n>`, `n` 1-based.
    pub fn coeff(&self, n: usize, i: usize) -> f64 {
        self.coefficients[i * self.dim + (n - 1)]
    }

    /// Builds a path from explicit node-major values; used by tests and by
    /// callers that carry their own noise.
    pub fn from_values(grid: TimeGrid, dim: usize, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != grid.nodes() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.nodes() * dim,
                got: coefficients.len(),
            });
        }
        Ok(Self { grid, dim, coefficients, seed: 0, replica: 0 })
    }
}

pub fn simulate_ou(op: &SpectralOperator, grid: &TimeGrid, seed: u64, replica: u64) -> OUPath {
    simulate_ou_with(op, grid, seed, replica, Noise::Gaussian)
}

pub fn simulate_ou_with(
    op: &SpectralOperator,
    grid: &TimeGrid,
    seed: u64,
    replica: u64,
    noise: Noise,
) -> OUPath {
    let dim = op.dim();
    let h = grid.step();
    let mut coefficients = vec![0.0; grid.nodes() * dim];
    for (mode, &lambda) in op.eigenvalues().iter().enumerate() {
        let decay = (-lambda * h).exp();
        let sd = transition_variance(lambda, h).sqrt();
        let mut rng = stream(seed, Purpose::OuNoise, replica, mode as u64);
        let mut z = 0.0;
        for i in 1..grid.nodes() {
            let xi: f64 = match noise {
                Noise::Gaussian => StandardNormal.sample(&mut rng),
                Noise::Zero => 0.0,
            };
            z = decay * z + sd * xi;
            coefficients[i * dim + mode] = z;
        }
    }
    OUPath { grid: *grid, dim, coefficients, seed, replica }
}

/// Draws `Z_t` directly from its exact marginal `N(0, (1 - e^{-2λt})/(2λ))`
/// per mode. Not restricted to `t ≤ 1`, which makes stationarity checks
/// possible.
pub fn sample_ou_marginal(op: &SpectralOperator, t: f64, seed: u64, replica: u64) -> Result<Vec<f64>> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(op
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(mode, &lambda)| {
            let mut rng = stream(seed, Purpose::OuNoise, replica, mode as u64);
            let xi: f64 = StandardNormal.sample(&mut rng);
            transition_variance(lambda, t).sqrt() * xi
        })
        .collect())
}

/// Coefficient vectors at grid node `node` for replicas `0..replicas`, in
/// replica order.
pub fn ensemble_at(
    op: &SpectralOperator,
    grid: &TimeGrid,
    node: usize,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if node > grid.steps() {
        return Err(Error::InvalidArgument(format!(
            "node {node} beyond grid of {} steps",
            grid.steps()
        )));
    }
    Ok(map_indexed(exec, replicas, |r| {
        simulate_ou(op, grid, seed, r as u64).at(node).to_vec()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(l: &[f64]) -> SpectralOperator {
        SpectralOperator::new(l.to_vec()).unwrap()
    }

    #[test]
    fn semigroup_identity_at_zero() {
        let a = op(&[1.0, 2.0, 5.0]);
        let x = [0.3, -1.0, 2.5];
        assert_eq!(a.semigroup_apply(0.0, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn semigroup_closed_form() {
        let a = op(&[1.0, 2.0]);
        let y = a.semigroup_apply(2f64.ln(), &[1.0, 1.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15);
        assert!((y[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn semigroup_decays() {
        let a = op(&[1.0]);
        let y = a.semigroup_apply(100.0, &[1.0]).unwrap()[0];
        assert!(y > 0.0 && y < 1e-43);
        let mut prev = 1.0;
        for t in [1.0, 10.0, 50.0, 100.0] {
            let v = a.semigroup_apply(t, &[1.0]).unwrap()[0];
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn semigroup_rejects_negative_time() {
        assert_eq!(op(&[1.0]).semigroup_apply(-0.1, &[1.0]), Err(Error::NegativeTime(-0.1)));
        assert!(matches!(
            op(&[1.0]).semigroup_apply(0.1, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stationary_variance_formula() {
        let a = op(&[0.5, 1.0, 2.0]);
        assert_eq!(a.stationary_variance(1).unwrap(), 1.0);
        assert_eq!(a.stationary_variance(2).unwrap(), 0.5);
        assert_eq!(a.stationary_variance(3).unwrap(), 0.25);
        assert_eq!(a.stationary_variance(4), Err(Error::ModeOutOfRange { index: 4, dim: 3 }));
        assert_eq!(a.stationary_variance(0), Err(Error::ModeOutOfRange { index: 0, dim: 3 }));
    }

    #[test]
    fn operator_validation() {
        assert!(SpectralOperator::new(vec![]).is_err());
        assert!(SpectralOperator::new(vec![1.0, 0.0]).is_err());
        assert!(SpectralOperator::new(vec![2.0, 1.0]).is_err());
        assert!(SpectralOperator::new(vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn trace_class_warning() {
        assert!(op(&[1.0, 2.0, 3.0, 4.0]).trace_class_advisory().is_some());
        assert!(SpectralOperator::power_law(8, 2.0).unwrap().trace_class_advisory().is_none());
    }

    #[test]
    fn zero_noise_path_is_zero() {
        let a = SpectralOperator::power_law(4, 2.0).unwrap();
        let grid = TimeGrid::dyadic(6);
        let p = simulate_ou_with(&a, &grid, 9, 0, Noise::Zero);
        for i in 0..grid.nodes() {
            assert!(p.at(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn path_starts_at_zero_and_is_deterministic() {
        let a = SpectralOperator::power_law(3, 2.0).unwrap();
        let grid = TimeGrid::dyadic(5);
        let p = simulate_ou(&a, &grid, 11, 4);
        assert!(p.at(0).iter().all(|&v| v == 0.0));
        assert_eq!(p, simulate_ou(&a, &grid, 11, 4));
        assert_ne!(p, simulate_ou(&a, &grid, 11, 5));
        assert_eq!(p.coeff(2, 7), p.at(7)[1]);
    }

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::dyadic(4);
        assert_eq!(g.node_index(0.25), Some(4));
        assert_eq!(g.node_index(0.3), None);
        assert_eq!(g.dyadic_node(2, 3).unwrap(), 12);
        assert!(g.dyadic_node(5, 1).is_err());
        assert!(TimeGrid::new(1.5, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}
