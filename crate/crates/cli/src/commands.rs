//! One function per subcommand, each returning a [`Table`].

use regnoise::drift::{envelope_log_scales, validate_assumption, validation_samples, DriftFamily, DriftSpec, LOG_SLACK};
use regnoise::estimates::{
    bdg_check, chain_scan, exp_moment_check, phi_samples, rho_scan, sigma_scan, EstimateReport, IncrementFamily,
    Quantiles, ScanConfig,
};
use regnoise::exec::{map_indexed, Execution};
use regnoise::gronwall::{closed_form_cap, recursion_cap, run_recursion};
use regnoise::lattice::{
    counting_bound, effdim_bound, effective_dimension, enumerate_lattice, lattice_count, QDescriptor, Scale,
};
use regnoise::solver::{solve_mild, uniqueness_experiment, MildSolveConfig, UniquenessConfig};
use regnoise::spectral::{sample_ou_marginal, simulate_ou, SpectralOperator, TimeGrid};
use regnoise::stats::{mean_var, variance_with_se};
use regnoise::{Error, Result};

use crate::config::{DriftKind, Eigenvalues, ExperimentConfig, Increments};

const EXEC: Execution = Execution::Parallel;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Result summaries written as `# key=value` before the header.
    pub meta: Vec<(String, String)>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), ..Default::default() }
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }
}

/// Shortest round-trip form, with an exponent for very large or small values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<Table> {
    match name {
        "simulate-ou" => simulate(cfg),
        "lattice-stats" => lattice_stats(cfg),
        "validate-drift" => validate_drift(cfg),
        "phi-estimate" => phi_estimate(cfg),
        "sigma-scan" => scan_table(cfg, true),
        "rho-scan" => scan_table(cfg, false),
        "euler-chain" => euler_chain(cfg),
        "bdg-check" => bdg(cfg),
        "exp-moment" => exp_moment(cfg),
        "gronwall" => gronwall(cfg),
        "solve" => solve(cfg),
        "uniqueness" => uniqueness(cfg),
        other => Err(Error::InvalidArgument(format!("unknown subcommand {other}"))),
    }
}

pub fn operator(cfg: &ExperimentConfig) -> Result<SpectralOperator> {
    match &cfg.eigenvalues {
        Eigenvalues::PowerLaw { alpha } => SpectralOperator::power_law(cfg.dim, *alpha),
        Eigenvalues::Explicit(v) => SpectralOperator::new(v.clone()),
    }
}

/// Explicit `scales` if given, otherwise the decay envelope times `amplitude`.
pub fn drift(cfg: &ExperimentConfig) -> Result<DriftSpec> {
    let dim = cfg.dim;
    let family = match cfg.drift {
        DriftKind::Zero => return Ok(DriftSpec::zero(dim)),
        DriftKind::Linear => return Ok(DriftSpec::linear_test(dim)),
        DriftKind::Constant => DriftFamily::Constant,
        DriftKind::Lipschitz => DriftFamily::Lipschitz { kappa: cfg.kappa },
        DriftKind::Sign => DriftFamily::Sign { thresholds: vec![cfg.threshold; dim], rate: cfg.rate },
        DriftKind::Piecewise => {
            DriftFamily::PiecewiseRandom { cell: cfg.cell, time_cells: cfg.time_cells, seed: cfg.drift_seed }
        }
    };
    match &cfg.scales {
        Some(s) => DriftSpec::new(family, s),
        None => DriftSpec::with_log_scales(family, envelope_log_scales(cfg.gamma, dim, cfg.amplitude)),
    }
}

fn increments(cfg: &ExperimentConfig) -> IncrementFamily {
    match cfg.increments {
        Increments::Zero => IncrementFamily::Zero,
        Increments::Rademacher => IncrementFamily::Rademacher { c: cfg.c },
        Increments::Uniform => IncrementFamily::Uniform { c: cfg.c },
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<Table> {
    let op = operator(cfg)?;
    let draws: Vec<Vec<f64>> = map_indexed(EXEC, cfg.replicas, |r| sample_ou_marginal(&op, cfg.t, cfg.seed, r as u64))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut table =
        Table::new(&["mode", "lambda", "t", "mean", "variance", "variance_se", "exact_variance", "z_score"]);
    for n in 1..=op.dim() {
        let xs: Vec<f64> = draws.iter().map(|v| v[n - 1]).collect();
        let (mean, _) = mean_var(&xs)?;
        let (var, se) = variance_with_se(&xs)?;
        let exact = op.marginal_variance(n, cfg.t)?;
        table.rows.push(vec![
            n.to_string(),
            num(op.eigenvalue(n)?),
            num(cfg.t),
            num(mean),
            num(var),
            num(se),
            num(exact),
            num((var - exact) / se),
        ]);
    }
    Ok(table)
}

fn lattice_stats(cfg: &ExperimentConfig) -> Result<Table> {
    let q = QDescriptor::new(cfg.gamma, cfg.r, cfg.scale)?;
    let mut table = Table::new(&[
        "gamma",
        "r",
        "m",
        "scale",
        "effdim_bruteforce",
        "effdim_bound",
        "count",
        "enumerated",
        "counting_bound",
    ]);
    if cfg.m < cfg.r {
        return Err(Error::MeshBelowRadius { m: cfg.m, r: cfg.r });
    }
    for m in cfg.r..=cfg.m {
        let d = effective_dimension(&q, m)?.0;
        let count = lattice_count(&q, m)?.map(|c| c.to_string()).unwrap_or_default();
        let enumerated = enumerate_lattice(&q, m, cfg.budget)?.len();
        table.rows.push(vec![
            num(cfg.gamma),
            cfg.r.to_string(),
            m.to_string(),
            if cfg.scale == Scale::Two { "2" } else { "1" }.to_string(),
            d.to_string(),
            effdim_bound(cfg.gamma, m).to_string(),
            count,
            enumerated.to_string(),
            num(counting_bound(&q, m)?),
        ]);
    }
    Ok(table)
}

fn validate_drift(cfg: &ExperimentConfig) -> Result<Table> {
    let op = operator(cfg)?;
    let f = drift(cfg)?;
    let samples = validation_samples(cfg.dim, cfg.samples, cfg.seed);
    let cert = validate_assumption(&f, &op, cfg.gamma, &samples)?;
    let ok = |excess: f64, bound: f64| excess <= LOG_SLACK * bound.abs().max(1.0);
    let mut table = Table::new(&["check", "component", "log_margin", "satisfied"]);
    table.rows.push(vec!["sup_norm".into(), String::new(), num(cert.sup_norm_log), ok(cert.sup_norm_log, 0.0).to_string()]);
    table.rows.push(vec![
        "weighted_sum".into(),
        String::new(),
        num(cert.weighted_sum_log),
        ok(cert.weighted_sum_log, 0.0).to_string(),
    ]);
    for (i, m) in cert.component_log_margins.iter().enumerate() {
        let bound = ((i + 1) as f64).powf(cfg.gamma).exp();
        table.rows.push(vec!["component".into(), (i + 1).to_string(), num(*m), ok(*m, bound).to_string()]);
    }
    table.meta("family", f.family().name());
    table.meta("pass", cert.pass);
    if let Some(w) = &cert.witness {
        let component = w.component.map(|c| c.to_string()).unwrap_or_default();
        let sample = w.sample.map(|s| s.to_string()).unwrap_or_else(|| "closed-form".into());
        table.meta("witness", format!("{:?} component={component} sample={sample}", w.condition));
    }
    Ok(table)
}

fn scan_config(cfg: &ExperimentConfig) -> ScanConfig {
    let max_n = cfg.levels.iter().copied().max().unwrap_or(0);
    ScanConfig {
        beta_a: cfg.beta_a,
        grid_level: max_n + cfg.subnodes.next_power_of_two().ilog2(),
        min_subnodes: cfg.subnodes,
        mesh_offset: cfg.mesh_offset,
        coincident_pairs: cfg.coincident,
        exec: EXEC,
        ..ScanConfig::new(cfg.levels.clone(), cfg.replicas, cfg.gamma, cfg.seed)
    }
}

fn phi_estimate(cfg: &ExperimentConfig) -> Result<Table> {
    let samples = phi_samples(&drift(cfg)?, &operator(cfg)?, &scan_config(cfg))?;
    let mut table = Table::new(&["n", "k", "dist_inf", "phi_norm", "bound_sigma", "bound_rho", "ratio"]);
    for s in samples {
        table.rows.push(vec![
            s.n.to_string(),
            s.k.to_string(),
            num(s.dist_inf),
            num(s.phi_norm),
            num(s.bound_sigma),
            num(s.bound_rho),
            num(s.phi_norm / s.bound_rho),
        ]);
    }
    Ok(table)
}

fn push_quantiles(row: &mut Vec<String>, q: &Quantiles) {
    row.extend([num(q.q50), num(q.q95), num(q.q99)]);
}

fn scan_table(cfg: &ExperimentConfig, sigma: bool) -> Result<Table> {
    let (f, op, sc) = (drift(cfg)?, operator(cfg)?, scan_config(cfg));
    let report: EstimateReport = if sigma { sigma_scan(&f, &op, &sc)? } else { rho_scan(&f, &op, &sc)? };
    let mut table = Table::new(&[
        "n",
        "samples",
        "ratio_q50",
        "ratio_q95",
        "ratio_q99",
        "normalized_q50",
        "normalized_q95",
        "normalized_q99",
        "raw_q50",
        "raw_q95",
        "raw_q99",
        "floor_negligible",
    ]);
    for r in &report.rows {
        let mut row = vec![r.n.to_string(), r.samples.to_string()];
        push_quantiles(&mut row, &r.ratio);
        push_quantiles(&mut row, &r.normalized);
        push_quantiles(&mut row, &r.raw);
        row.push(r.floor_negligible.to_string());
        table.rows.push(row);
    }
    table.meta("theta", num(report.theta));
    table.meta("slope_ratio", num(report.slope_ratio));
    table.meta("slope_normalized", num(report.slope_normalized));
    table.meta("slope_raw", num(report.slope_raw));
    Ok(table)
}

fn euler_chain(cfg: &ExperimentConfig) -> Result<Table> {
    let rows = chain_scan(&drift(cfg)?, &operator(cfg)?, &cfg.levels, cfg.chain_length, cfg.paths, cfg.gamma, cfg.seed, EXEC)?;
    let mut table = Table::new(&["n", "r", "paths", "undefined", "implied_q50", "implied_q95", "implied_q99"]);
    for r in rows {
        let mut row = vec![r.n.to_string(), r.r.to_string(), r.paths.to_string(), r.undefined.to_string()];
        match &r.implied {
            Some(q) => push_quantiles(&mut row, q),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        table.rows.push(row);
    }
    Ok(table)
}

fn bdg(cfg: &ExperimentConfig) -> Result<Table> {
    let family = increments(cfg);
    let mut table = Table::new(&["p", "n", "family", "exact", "moment", "bracket", "ratio", "holds"]);
    for &p in &cfg.p {
        for &n in &cfg.walk {
            let r = bdg_check(p, n, family, cfg.replicas, cfg.seed, EXEC)?;
            table.rows.push(vec![
                num(r.p),
                r.n.to_string(),
                family.name().into(),
                r.exact.to_string(),
                num(r.moment),
                num(r.bracket),
                num(r.ratio),
                r.holds().to_string(),
            ]);
        }
    }
    Ok(table)
}

fn exp_moment(cfg: &ExperimentConfig) -> Result<Table> {
    let family = increments(cfg);
    let mut table = Table::new(&["c", "r", "family", "replicas", "mean", "se", "mean_abs", "se_abs", "passes"]);
    for &r in &cfg.walk {
        let e = exp_moment_check(cfg.c, r, family, cfg.replicas, cfg.seed, EXEC)?;
        table.rows.push(vec![
            num(e.c),
            e.r.to_string(),
            family.name().into(),
            e.replicas.to_string(),
            num(e.mean),
            num(e.se),
            num(e.mean_abs),
            num(e.se_abs),
            e.passes().to_string(),
        ]);
    }
    Ok(table)
}

fn gronwall(cfg: &ExperimentConfig) -> Result<Table> {
    let steps = cfg.steps.unwrap_or(1u64 << cfg.m);
    let s = run_recursion(cfg.k, cfg.m, cfg.beta0, steps)?;
    let mut table = Table::new(&["j", "beta"]);
    table.rows = s.values.iter().enumerate().map(|(j, b)| vec![j.to_string(), num(*b)]).collect();
    table.meta("closed_form_cap", num(closed_form_cap(cfg.k, cfg.beta0)));
    table.meta("recursion_cap", num(recursion_cap(cfg.k, cfg.m, cfg.beta0)));
    Ok(table)
}

fn solve_config(cfg: &ExperimentConfig) -> MildSolveConfig {
    MildSolveConfig {
        grid: TimeGrid::dyadic(cfg.grid),
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iter,
        damping: cfg.damping,
    }
}

fn solve(cfg: &ExperimentConfig) -> Result<Table> {
    let (op, f, sc) = (operator(cfg)?, drift(cfg)?, solve_config(cfg));
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; cfg.dim]);
    let path = simulate_ou(&op, &sc.grid, cfg.seed, 0);
    let sol = solve_mild(&f, &op, &x0, &path, None, &sc)?;
    let mut table = Table::new(&["t", "mode", "value"]);
    for i in 0..sc.grid.nodes() {
        let t = num(sc.grid.time(i));
        for (n, v) in sol.function.at(i).iter().enumerate() {
            table.rows.push(vec![t.clone(), (n + 1).to_string(), num(*v)]);
        }
    }
    table.meta("converged", sol.converged);
    table.meta("iterations", sol.iterations);
    table.meta("residual", num(sol.residual));
    Ok(table)
}

fn uniqueness(cfg: &ExperimentConfig) -> Result<Table> {
    let (op, f) = (operator(cfg)?, drift(cfg)?);
    let ucfg = UniquenessConfig {
        paths: cfg.paths,
        inits: cfg.inits,
        solve: solve_config(cfg),
        x0: cfg.x0.clone().unwrap_or_else(|| vec![0.0; cfg.dim]),
        gamma: cfg.gamma,
        seed: cfg.seed,
        exec: EXEC,
    };
    let report = uniqueness_experiment(&f, &op, &ucfg)?;
    let mut table =
        Table::new(&["replica", "converged", "max_distance", "max_iterations", "max_residual", "success"]);
    for o in &report.outcomes {
        table.rows.push(vec![
            o.replica.to_string(),
            o.converged.to_string(),
            num(o.max_distance),
            o.max_iterations.to_string(),
            num(o.max_residual),
            o.success.to_string(),
        ]);
    }
    table.meta("success_fraction", num(report.success_fraction));
    table.meta("nonconverged", report.nonconverged);
    Ok(table)
}
