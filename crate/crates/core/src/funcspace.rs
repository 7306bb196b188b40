//! Path functions `h: [0,1] → Q ∩ Q^A`: the Lipschitz class `Φ`
//! (`|h(s) - h(t)|_∞ ≤ 2|s - t|`), the dyadic step classes `Φ_n`, the floor
//! projection `h ↦ h_n` and the oscillation sum over dyadic half-intervals.
//!
//! A [`PathFunction`] stores values at grid nodes only. Between nodes a `Φ`
//! member is read by linear interpolation and a `Φ_n` member (or an untagged
//! function) as a right-continuous step function.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::component_bound_log;
use crate::spectral::{SpectralOperator, TimeGrid};

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionClass {
    Phi,
    PhiN(u32),
    Untagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFunction {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    class: FunctionClass,
}

impl PathFunction {
    /// `values` is node-major: `dim` entries per grid node.
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>, class: FunctionClass) -> Result<Self> {
        if dim == 0 || values.len() != grid.nodes() * dim {
            return Err(Error::DimensionMismatch { expected: grid.nodes() * dim, got: values.len() });
        }
        Ok(Self { grid, dim, values, class })
    }

    pub fn constant(grid: TimeGrid, x: &[f64], class: FunctionClass) -> Self {
        let values = x.iter().copied().cycle().take(x.len() * grid.nodes()).collect();
        Self { grid, dim: x.len(), values, class }
    }

    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        Self::constant(grid, &vec![0.0; dim], FunctionClass::Phi)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn with_class(mut self, class: FunctionClass) -> Self {
        self.class = class;
        self
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// `h(t)` for `t` in `[0, horizon]`.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let h = self.grid.step();
        let steps = self.grid.steps();
        if let Some(i) = self.grid.node_index(t) {
            return self.at(i).to_vec();
        }
        let x = (t / h).clamp(0.0, steps as f64);
        let i = (x.floor() as usize).min(steps);
        match self.class {
            FunctionClass::Phi if i < steps => {
                let w = x - i as f64;
                self.at(i).iter().zip(self.at(i + 1)).map(|(a, b)| a + w * (b - a)).collect()
            }
            _ => self.at(i).to_vec(),
        }
    }
}

/// `h` is `Q ∩ Q^A`-valued iff every component satisfies both
/// `|x_n| ≤ 2 exp(-e^{n^γ})` and `λ_n e^{2λ_n} x_n² ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSet {
    gamma: f64,
    eigenvalues: Vec<f64>,
}

impl RangeSet {
    pub fn new(gamma: f64, op: &SpectralOperator) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must be > 0")));
        }
        Ok(Self { gamma, eigenvalues: op.eigenvalues().to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `ln|x_n| + ln λ_n/2 + λ_n ≤ 0`.
    pub fn in_qa(&self, n: usize, x: f64) -> bool {
        if x == 0.0 {
            return true;
        }
        let l = self.eigenvalues[n - 1];
        let v = x.abs().ln() + 0.5 * l.ln() + l;
        v <= SLACK * l.max(1.0)
    }

    pub fn in_q(&self, n: usize, x: f64) -> bool {
        if x == 0.0 {
            return true;
        }
        let b = component_bound_log(self.gamma, n);
        x.abs().ln() <= b + SLACK * b.abs().max(1.0)
    }

    /// Largest admissible magnitude per component, `min(2 e^{-e^{n^γ}}, e^{-λ_n}/√λ_n)`.
    pub fn caps(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let q = component_bound_log(self.gamma, i + 1).exp();
                q.min((-l).exp() / l.sqrt())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Lipschitz,
    NotConstant,
    Increment,
    OutsideQ { component: usize },
    OutsideQA { component: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MembershipWitness {
    pub kind: ViolationKind,
    /// Grid node indices of the violating pair (equal for range violations).
    pub nodes: (usize, usize),
}

/// Checks `h` against `class` on its grid nodes. Returns the first violating
/// node pair, or `None` when `h` passes.
pub fn check_membership(
    h: &PathFunction,
    class: FunctionClass,
    range: &RangeSet,
) -> Result<Option<MembershipWitness>> {
    if h.dim != range.dim() {
        return Err(Error::DimensionMismatch { expected: range.dim(), got: h.dim });
    }
    let grid = h.grid;
    let step = grid.step();
    let diff = |i: usize, j: usize| {
        h.at(i).iter().zip(h.at(j)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };

    match class {
        FunctionClass::Phi | FunctionClass::Untagged => {
            if class == FunctionClass::Phi {
                for i in 0..grid.steps() {
                    let allowed = 2.0 * (grid.time(i + 1) - grid.time(i));
                    if diff(i, i + 1) > allowed * (1.0 + SLACK) + SLACK * step {
                        return Ok(Some(MembershipWitness {
                            kind: ViolationKind::Lipschitz,
                            nodes: (i, i + 1),
                        }));
                    }
                }
            }
        }
        FunctionClass::PhiN(n) => {
            let width = (-(n as f64)).exp2();
            if width > grid.horizon() * (1.0 + 1e-12) {
                return Err(Error::UnresolvedGrid(format!("level {n} on horizon {}", grid.horizon())));
            }
            let intervals = (grid.horizon() / width).round() as u64;
            let mut starts = Vec::with_capacity(intervals as usize + 1);
            for k in 0..=intervals {
                starts.push(grid.dyadic_node(n, k)?);
            }
            for w in starts.windows(2) {
                for i in w[0] + 1..w[1] {
                    if diff(w[0], i) != 0.0 {
                        return Ok(Some(MembershipWitness {
                            kind: ViolationKind::NotConstant,
                            nodes: (w[0], i),
                        }));
                    }
                }
                if diff(w[0], w[1]) > 2.0 * width * (1.0 + SLACK) {
                    return Ok(Some(MembershipWitness {
                        kind: ViolationKind::Increment,
                        nodes: (w[0], w[1]),
                    }));
                }
            }
        }
    }

    for i in 0..grid.nodes() {
        for (c, &x) in h.at(i).iter().enumerate() {
            if !range.in_q(c + 1, x) {
                return Ok(Some(MembershipWitness {
                    kind: ViolationKind::OutsideQ { component: c + 1 },
                    nodes: (i, i),
                }));
            }
            if !range.in_qa(c + 1, x) {
                return Ok(Some(MembershipWitness {
                    kind: ViolationKind::OutsideQA { component: c + 1 },
                    nodes: (i, i),
                }));
            }
        }
    }
    Ok(None)
}

/// Index `k` of the dyadic interval `[k 2^{-n}, (k+1) 2^{-n})` holding `t`;
/// `t = 1` falls in the last interval.
fn dyadic_cell(t: f64, n: u32) -> u64 {
    let scale = (n as f64).exp2();
    let k = (t * scale + 1e-9).floor().max(0.0) as u64;
    k.min((1u64 << n) - 1)
}

/// `h_n(t) = ⌊2^n h(k 2^{-n})⌋ / 2^n` on `[k 2^{-n}, (k+1) 2^{-n})`, sampled on
/// the grid of `h`. Floors toward `-∞`.
pub fn dyadic_floor_projection(h: &PathFunction, n: u32) -> PathFunction {
    let scale = (n as f64).exp2();
    let mut cache: Vec<Option<Vec<f64>>> = Vec::new();
    let mut values = Vec::with_capacity(h.values.len());
    for i in 0..h.grid.nodes() {
        let k = dyadic_cell(h.grid.time(i), n) as usize;
        if cache.len() <= k {
            cache.resize(k + 1, None);
        }
        let v = cache[k].get_or_insert_with(|| {
            h.value_at(k as f64 / scale).iter().map(|x| (x * scale).floor() / scale).collect()
        });
        values.extend_from_slice(v);
    }
    PathFunction { grid: h.grid, dim: h.dim, values, class: FunctionClass::PhiN(n) }
}

/// `Σ_{k<2^n} |h((2k+1) 2^{-(n+1)}) - h(2k 2^{-(n+1)})|_∞`, read at grid nodes.
pub fn oscillation_sum(h: &PathFunction, n: u32) -> Result<f64> {
    if n >= 62 {
        return Err(Error::UnresolvedGrid(format!("level {n}")));
    }
    let mut total = 0.0;
    for k in 0..(1u64 << n) {
        let a = h.grid.dyadic_node(n + 1, 2 * k)?;
        let b = h.grid.dyadic_node(n + 1, 2 * k + 1)?;
        total += h.at(a).iter().zip(h.at(b)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    }
    Ok(total)
}

/// `h(t) = (min(2t, cap), 0, …)`, a `Φ` member with Lipschitz constant
/// exactly 2 until it saturates.
pub fn ramp(grid: TimeGrid, dim: usize, cap: f64) -> PathFunction {
    let mut values = vec![0.0; grid.nodes() * dim];
    for i in 0..grid.nodes() {
        values[i * dim] = (2.0 * grid.time(i)).min(cap);
    }
    PathFunction { grid, dim, values, class: FunctionClass::Phi }
}

/// Walk `v_{j+1} = clamp(v_j + δ_j, ±cap)` on the nodes `t_j`, one
/// component at a time. Clamping is 1-Lipschitz, so `|δ_j| ≤ 2Δt_j` keeps
/// the walk in `Φ`.
fn clipped_walk<R, F>(points: usize, caps: &[f64], rng: &mut R, mut delta: F) -> Vec<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R, usize, usize, f64, &mut f64) -> f64,
{
    let dim = caps.len();
    let mut values = vec![0.0; points * dim];
    for (c, &cap) in caps.iter().enumerate() {
        let mut v = if cap > 0.0 { rng.random_range(-cap..=cap) } else { 0.0 };
        let mut dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
        values[c] = v;
        for j in 1..points {
            let d = delta(rng, c, j, cap, &mut dir);
            v = (v + d).clamp(-cap, cap);
            values[j * dim + c] = v;
        }
    }
    values
}

/// Random member of `Φ`: uniform increments in `[-2Δt, 2Δt]`, clipped to
/// `±caps`.
pub fn random_phi<R: Rng + ?Sized>(grid: TimeGrid, caps: &[f64], rng: &mut R) -> PathFunction {
    let h = grid.step();
    let values = clipped_walk(grid.nodes(), caps, rng, |rng, _, _, _, _| {
        2.0 * h * rng.random_range(-1.0..=1.0)
    });
    PathFunction { grid, dim: caps.len(), values, class: FunctionClass::Phi }
}

/// Extremal member of `Φ`: slope `±2` everywhere, reversing at `±cap`.
pub fn zigzag_phi<R: Rng + ?Sized>(grid: TimeGrid, caps: &[f64], rng: &mut R) -> PathFunction {
    let h = grid.step();
    let dim = caps.len();
    let mut values = vec![0.0; grid.nodes() * dim];
    for (c, &cap) in caps.iter().enumerate() {
        let mut v = if cap > 0.0 { rng.random_range(-cap..=cap) } else { 0.0 };
        let mut dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
        values[c] = v;
        for j in 1..grid.nodes() {
            let next = v + dir * 2.0 * h;
            if next.abs() > cap {
                dir = -dir;
                v = (v + dir * 2.0 * h).clamp(-cap, cap);
            } else {
                v = next;
            }
            values[j * dim + c] = v;
        }
    }
    PathFunction { grid, dim, values, class: FunctionClass::Phi }
}

/// Expands dyadic-point values `v_0..v_{2^m}` into a step function on `grid`.
fn steps_on_grid(grid: TimeGrid, dim: usize, m: u32, points: &[f64]) -> PathFunction {
    let mut values = Vec::with_capacity(grid.nodes() * dim);
    for i in 0..grid.nodes() {
        let t = grid.time(i);
        let k = if i == grid.steps() && grid.horizon() == 1.0 {
            (1usize << m) - 1
        } else {
            dyadic_cell(t, m) as usize
        };
        values.extend_from_slice(&points[k * dim..(k + 1) * dim]);
    }
    PathFunction { grid, dim, values, class: FunctionClass::PhiN(m) }
}

fn check_resolves(grid: &TimeGrid, m: u32) -> Result<()> {
    if grid.horizon() != 1.0 || grid.dyadic_node(m, 1).is_err() {
        return Err(Error::UnresolvedGrid(format!("level {m} on a {}-step grid", grid.steps())));
    }
    Ok(())
}

/// Random member of `Φ_m`: values at `k 2^{-m}` follow a clipped walk with
/// increments uniform in `[-2·2^{-m}, 2·2^{-m}]`.
pub fn random_phi_m<R: Rng + ?Sized>(
    grid: TimeGrid,
    m: u32,
    caps: &[f64],
    rng: &mut R,
) -> Result<PathFunction> {
    check_resolves(&grid, m)?;
    let w = (-(m as f64)).exp2();
    let points = clipped_walk((1usize << m) + 1, caps, rng, |rng, _, _, _, _| {
        2.0 * w * rng.random_range(-1.0..=1.0)
    });
    Ok(steps_on_grid(grid, caps.len(), m, &points))
}

/// Extremal member of `Φ_m`: jumps of exactly `±2·2^{-m}`, reversing at the
/// caps.
pub fn zigzag_phi_m<R: Rng + ?Sized>(
    grid: TimeGrid,
    m: u32,
    caps: &[f64],
    rng: &mut R,
) -> Result<PathFunction> {
    check_resolves(&grid, m)?;
    let w = (-(m as f64)).exp2();
    let points = clipped_walk((1usize << m) + 1, caps, rng, |_, _, _, cap, dir| {
        if cap < 2.0 * w {
            *dir = -*dir;
        }
        *dir * 2.0 * w
    });
    Ok(steps_on_grid(grid, caps.len(), m, &points))
}
