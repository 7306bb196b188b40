//! Picard iteration for the mild equation
//!
//! ```text
//! x_t = e^{-tA} x_0 + ∫_0^t e^{-(t-s)A} f(s, x_s) ds + Z_t
//! ```
//!
//! along one sampled OU path, and for the difference equation
//! `u_t = ∫_0^t e^{-(t-s)A} (f(s, X_s + u_s) - f(s, X_s)) ds` around a
//! reference path `X`.
//!
//! The time integral is an exponential integrator: `e^{-λ(t_i - s)}` is
//! integrated exactly over each grid cell against the integrand frozen at
//! the cell's left node. With `c = (1 - e^{-λh}) / λ` the per-mode integral
//! obeys `I_i = e^{-λh} I_{i-1} + c g_{i-1}`. Because `I_i` only depends on
//! the iterate at nodes `< i`, the discrete fixed point is unique and Picard
//! reaches it after at most `steps + 1` undamped iterations.

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::funcspace::{check_membership, ramp, random_phi, FunctionClass, PathFunction, RangeSet};
use crate::rng::{stream, Purpose};
use crate::spectral::{OUPath, SpectralOperator, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct MildSolveConfig {
    pub grid: TimeGrid,
    /// Sup-over-nodes `|·|_H` change that counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// `x ← (1 - w) x + w P(x)`.
    pub damping: f64,
}

impl Default for MildSolveConfig {
    fn default() -> Self {
        Self { grid: TimeGrid::dyadic(10), tolerance: 1e-9, max_iterations: 200, damping: 1.0 }
    }
}

impl MildSolveConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {} must be > 0", self.tolerance)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping {} must lie in (0, 1]", self.damping)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub function: PathFunction,
    /// `sup_i |P(x)(t_i) - x(t_i)|_H` for the returned iterate `x`.
    pub residual: f64,
    /// Updates applied to reach the returned iterate.
    pub iterations: usize,
    pub converged: bool,
}

/// The OU path as a path function on its own grid.
pub fn path_function(path: &OUPath) -> PathFunction {
    let values = (0..path.grid().nodes()).flat_map(|i| path.at(i).iter().copied()).collect();
    PathFunction::new(*path.grid(), path.dim(), values, FunctionClass::Untagged)
        .expect("path storage is node-major")
}

/// `sup_i |a(t_i) - b(t_i)|_H` on a shared grid.
pub fn sup_distance(a: &PathFunction, b: &PathFunction) -> f64 {
    (0..a.grid().nodes())
        .map(|i| a.at(i).iter().zip(b.at(i)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn check_shapes(drift: &DriftSpec, op: &SpectralOperator, grid: &TimeGrid, funcs: &[&PathFunction]) -> Result<()> {
    if drift.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: drift.dim() });
    }
    for f in funcs {
        if f.dim() != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), got: f.dim() });
        }
        if f.grid() != grid {
            return Err(Error::UnresolvedGrid("path functions on different grids".into()));
        }
    }
    Ok(())
}

/// `base(t_i) + ∫_0^{t_i} e^{-(t_i - s)A} g(s) ds` with `g(t_j)` supplied by
/// `integrand(j, out)`.
fn convolve<F>(op: &SpectralOperator, grid: &TimeGrid, base: &dyn Fn(usize, usize) -> f64, mut integrand: F) -> Vec<f64>
where
    F: FnMut(usize, &mut [f64]),
{
    let dim = op.dim();
    let h = grid.step();
    let lambdas = op.eigenvalues();
    let decay: Vec<f64> = lambdas.iter().map(|l| (-l * h).exp()).collect();
    let weight: Vec<f64> = lambdas.iter().map(|&l| if l == 0.0 { h } else { -(-l * h).exp_m1() / l }).collect();
    let mut out = vec![0.0; grid.nodes() * dim];
    let mut acc = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for j in 0..dim {
        out[j] = base(0, j);
    }
    for i in 1..grid.nodes() {
        integrand(i - 1, &mut g);
        for j in 0..dim {
            acc[j] = decay[j] * acc[j] + weight[j] * g[j];
            out[i * dim + j] = base(i, j) + acc[j];
        }
    }
    out
}

/// One Picard step of the mild equation.
pub fn picard_step_mild(
    drift: &DriftSpec,
    op: &SpectralOperator,
    x0: &[f64],
    path: &OUPath,
    current: &PathFunction,
) -> Result<PathFunction> {
    let grid = *path.grid();
    check_shapes(drift, op, &grid, &[current])?;
    if x0.len() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: x0.len() });
    }
    let lambdas = op.eigenvalues();
    let base = |i: usize, j: usize| (-lambdas[j] * grid.time(i)).exp() * x0[j] + path.at(i)[j];
    let values = convolve(op, &grid, &base, |i, g| drift.evaluate_into(grid.time(i), current.at(i), g));
    PathFunction::new(grid, op.dim(), values, FunctionClass::Untagged)
}

/// One Picard step of the difference equation around `reference`.
pub fn picard_step_difference(
    drift: &DriftSpec,
    op: &SpectralOperator,
    reference: &PathFunction,
    current: &PathFunction,
) -> Result<PathFunction> {
    let grid = *reference.grid();
    check_shapes(drift, op, &grid, &[reference, current])?;
    let dim = op.dim();
    let mut shifted = vec![0.0; dim];
    let mut f_ref = vec![0.0; dim];
    let values = convolve(op, &grid, &|_, _| 0.0, |i, g| {
        let t = grid.time(i);
        for (s, (r, u)) in shifted.iter_mut().zip(reference.at(i).iter().zip(current.at(i))) {
            *s = r + u;
        }
        drift.evaluate_into(t, &shifted, g);
        drift.evaluate_into(t, reference.at(i), &mut f_ref);
        for (gj, fj) in g.iter_mut().zip(&f_ref) {
            *gj -= fj;
        }
    });
    PathFunction::new(grid, dim, values, FunctionClass::Untagged)
}

fn iterate<P>(init: PathFunction, cfg: &MildSolveConfig, step: P) -> Result<SolutionPath>
where
    P: Fn(&PathFunction) -> Result<PathFunction>,
{
    cfg.validate()?;
    let mut x = init;
    let mut iterations = 0;
    loop {
        let next = step(&x)?;
        let residual = sup_distance(&next, &x);
        let converged = residual <= cfg.tolerance;
        if (converged && iterations > 0) || iterations >= cfg.max_iterations {
            return Ok(SolutionPath { function: x, residual, iterations, converged });
        }
        x = if cfg.damping == 1.0 {
            next
        } else {
            let w = cfg.damping;
            let grid = *x.grid();
            let values = (0..grid.nodes())
                .flat_map(|i| x.at(i).iter().zip(next.at(i)).map(|(a, b)| (1.0 - w) * a + w * b).collect::<Vec<_>>())
                .collect();
            PathFunction::new(grid, x.dim(), values, FunctionClass::Untagged)?
        };
        iterations += 1;
    }
}

/// Picard iteration of the mild equation from `init` (the free solution
/// `e^{-tA} x_0 + Z_t` when `None`).
pub fn solve_mild(
    drift: &DriftSpec,
    op: &SpectralOperator,
    x0: &[f64],
    path: &OUPath,
    init: Option<PathFunction>,
    cfg: &MildSolveConfig,
) -> Result<SolutionPath> {
    if path.grid() != &cfg.grid {
        return Err(Error::UnresolvedGrid("path grid differs from the solver grid".into()));
    }
    let init = match init {
        Some(f) => f,
        None => free_solution(op, x0, path)?,
    };
    check_shapes(drift, op, &cfg.grid, &[&init])?;
    iterate(init, cfg, |x| picard_step_mild(drift, op, x0, path, x))
}

/// Picard iteration of the difference equation around `reference`.
pub fn solve_difference(
    drift: &DriftSpec,
    op: &SpectralOperator,
    reference: &PathFunction,
    u_init: PathFunction,
    cfg: &MildSolveConfig,
) -> Result<SolutionPath> {
    if reference.grid() != &cfg.grid {
        return Err(Error::UnresolvedGrid("reference grid differs from the solver grid".into()));
    }
    check_shapes(drift, op, &cfg.grid, &[reference, &u_init])?;
    iterate(u_init, cfg, |u| picard_step_difference(drift, op, reference, u))
}

/// `e^{-tA} x_0 + Z_t`, the solution for zero drift.
pub fn free_solution(op: &SpectralOperator, x0: &[f64], path: &OUPath) -> Result<PathFunction> {
    picard_step_mild(&DriftSpec::zero(op.dim()), op, x0, path, &path_function(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessConfig {
    pub paths: usize,
    pub inits: usize,
    pub solve: MildSolveConfig,
    pub x0: Vec<f64>,
    /// Range set used to validate the `Φ` perturbations of the initial guess.
    pub gamma: f64,
    pub seed: u64,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub replica: u64,
    pub converged: usize,
    /// Largest pairwise sup-distance among converged runs.
    pub max_distance: f64,
    pub max_iterations: usize,
    pub max_residual: f64,
    /// All initializations converged and agree within `10 · tolerance`.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub paths: usize,
    pub inits: usize,
    pub outcomes: Vec<PathOutcome>,
    pub success_fraction: f64,
    pub nonconverged: usize,
}

/// Initial guesses: the free solution plus `h` for `h = 0`, the ramp
/// `(min(2t, cap_1), 0, …)`, then random `Φ` members. Each `h` is checked
/// against `Φ` first.
pub fn initializations(
    op: &SpectralOperator,
    x0: &[f64],
    path: &OUPath,
    count: usize,
    gamma: f64,
    seed: u64,
) -> Result<Vec<PathFunction>> {
    let range = RangeSet::new(gamma, op)?;
    let caps = range.caps();
    let grid = *path.grid();
    let free = free_solution(op, x0, path)?;
    let mut rng = stream(seed, Purpose::Initialization, path.replica(), 0);
    (0..count)
        .map(|i| {
            let h = match i {
                0 => PathFunction::zero(grid, op.dim()),
                1 => ramp(grid, op.dim(), caps[0]),
                _ => random_phi(grid, &caps, &mut rng),
            };
            if let Some(w) = check_membership(&h, FunctionClass::Phi, &range)? {
                return Err(Error::InvalidArgument(format!("initialization {i} is not in Phi: {w:?}")));
            }
            let values = (0..grid.nodes())
                .flat_map(|j| free.at(j).iter().zip(h.at(j)).map(|(a, b)| a + b).collect::<Vec<_>>())
                .collect();
            PathFunction::new(grid, op.dim(), values, FunctionClass::Untagged)
        })
        .collect()
}

/// Solves the mild equation on `paths` sampled paths from `inits`
/// initializations each and compares the converged solutions.
pub fn uniqueness_experiment(
    drift: &DriftSpec,
    op: &SpectralOperator,
    cfg: &UniquenessConfig,
) -> Result<UniquenessReport> {
    if cfg.inits < 2 {
        return Err(Error::InvalidArgument("at least two initializations required".into()));
    }
    if cfg.paths == 0 {
        return Err(Error::EmptySample);
    }
    cfg.solve.validate()?;
    let outcomes: Vec<PathOutcome> = map_indexed(cfg.exec, cfg.paths, |p| {
        let replica = p as u64;
        let path = crate::spectral::simulate_ou(op, &cfg.solve.grid, cfg.seed, replica);
        let inits = initializations(op, &cfg.x0, &path, cfg.inits, cfg.gamma, cfg.seed)?;
        let sols = inits
            .into_iter()
            .map(|init| solve_mild(drift, op, &cfg.x0, &path, Some(init), &cfg.solve))
            .collect::<Result<Vec<_>>>()?;
        let ok: Vec<&SolutionPath> = sols.iter().filter(|s| s.converged).collect();
        let mut max_distance: f64 = 0.0;
        for a in 0..ok.len() {
            for b in a + 1..ok.len() {
                max_distance = max_distance.max(sup_distance(&ok[a].function, &ok[b].function));
            }
        }
        Ok(PathOutcome {
            replica,
            converged: ok.len(),
            max_distance,
            max_iterations: sols.iter().map(|s| s.iterations).max().unwrap_or(0),
            max_residual: sols.iter().map(|s| s.residual).fold(0.0, f64::max),
            success: ok.len() == sols.len() && max_distance < 10.0 * cfg.solve.tolerance,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let successes = outcomes.iter().filter(|o| o.success).count();
    let nonconverged = outcomes.iter().map(|o| cfg.inits - o.converged).sum();
    Ok(UniquenessReport {
        paths: cfg.paths,
        inits: cfg.inits,
        success_fraction: successes as f64 / cfg.paths as f64,
        nonconverged,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftFamily;
    use crate::spectral::simulate_ou;

    fn setup(dim: usize, level: u32) -> (SpectralOperator, OUPath, MildSolveConfig) {
        let op = SpectralOperator::power_law(dim, 2.0).unwrap();
        let cfg = MildSolveConfig { grid: TimeGrid::dyadic(level), ..Default::default() };
        let path = simulate_ou(&op, &cfg.grid, 11, 0);
        (op, path, cfg)
    }

    #[test]
    fn zero_drift_step_is_free_solution() {
        let (op, path, _) = setup(3, 6);
        let x0 = [0.5, -0.2, 0.1];
        let junk = PathFunction::constant(*path.grid(), &[9.0, 9.0, 9.0], FunctionClass::Untagged);
        let next = picard_step_mild(&DriftSpec::zero(3), &op, &x0, &path, &junk).unwrap();
        for i in 0..path.grid().nodes() {
            let t = path.grid().time(i);
            for j in 0..3 {
                let want = (-op.eigenvalues()[j] * t).exp() * x0[j] + path.at(i)[j];
                assert_eq!(next.at(i)[j], want);
            }
        }
    }

    #[test]
    fn first_cell_weight() {
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let path = OUPath::from_values(grid, 1, vec![0.0; 9]).unwrap();
        let f = DriftSpec::new(DriftFamily::Constant, &[1.0]).unwrap();
        let cur = PathFunction::zero(grid, 1);
        let next = picard_step_mild(&f, &op, &[0.0], &path, &cur).unwrap();
        let h: f64 = 0.125;
        assert!((next.at(1)[0] - (1.0 - (-h).exp())).abs() < 1e-16);
        // constant integrand: the whole convolution is (1 - e^{-t}) exactly
        assert!((next.at(8)[0] - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn zero_drift_converges_in_one_iteration() {
        let (op, path, cfg) = setup(2, 8);
        let s = solve_mild(&DriftSpec::zero(2), &op, &[0.1, 0.0], &path, Some(PathFunction::zero(cfg.grid, 2)), &cfg)
            .unwrap();
        assert!(s.converged);
        assert_eq!(s.iterations, 1);
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn difference_zero_is_fixed() {
        let (op, path, cfg) = setup(4, 8);
        let f = DriftSpec::sign_envelope(7.0, 4, 1.0, 0.0).unwrap();
        let reference = path_function(&path);
        let s = solve_difference(&f, &op, &reference, PathFunction::zero(cfg.grid, 4), &cfg).unwrap();
        assert!(s.converged);
        assert_eq!(s.iterations, 1);
        assert_eq!(s.residual, 0.0);
        assert!(s.function.at(cfg.grid.steps()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn difference_with_zero_drift_vanishes_after_one_step() {
        let (op, path, cfg) = setup(2, 6);
        let u = ramp(cfg.grid, 2, 0.1);
        let next = picard_step_difference(&DriftSpec::zero(2), &op, &path_function(&path), &u).unwrap();
        assert!((0..cfg.grid.nodes()).all(|i| next.at(i) == [0.0, 0.0]));
    }

    #[test]
    fn lipschitz_contraction_iteration_count() {
        let (op, path, cfg) = setup(3, 8);
        let f = DriftSpec::new(DriftFamily::Lipschitz { kappa: 2.0 }, &[0.25, 0.1, 0.05]).unwrap();
        let l = f.lipschitz_constant().unwrap();
        let s = solve_mild(&f, &op, &[0.0; 3], &path, None, &cfg).unwrap();
        assert!(s.converged);
        let bound = (cfg.tolerance.ln() / l.ln()).ceil() as usize + 2;
        assert!(s.iterations <= bound, "{} > {bound}", s.iterations);
    }

    #[test]
    fn uniqueness_controls() {
        let op = SpectralOperator::power_law(3, 2.0).unwrap();
        let cfg = UniquenessConfig {
            paths: 4,
            inits: 3,
            solve: MildSolveConfig { grid: TimeGrid::dyadic(7), ..Default::default() },
            x0: vec![0.0; 3],
            gamma: 7.0,
            seed: 1,
            exec: Execution::Sequential,
        };
        let r = uniqueness_experiment(&DriftSpec::zero(3), &op, &cfg).unwrap();
        assert_eq!(r.success_fraction, 1.0);
        assert!(r.outcomes.iter().all(|o| o.max_distance == 0.0));
        let two = UniquenessConfig { inits: 1, ..cfg };
        assert!(uniqueness_experiment(&DriftSpec::zero(3), &op, &two).is_err());
    }
}
