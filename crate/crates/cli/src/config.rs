//! `key=value` experiment configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Every
//! key has a default, so the empty text is a valid configuration. Command-line
//! flags use the same key names and override file values. All problems are
//! collected and reported together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use regnoise::lattice::Scale;

pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { name, default, help }
}

/// Every accepted key, in echo order. An empty default means "unset".
pub const KEYS: &[KeySpec] = &[
    key("seed", "0", "master seed"),
    key("workers", "0", "worker threads, 0 for all cores"),
    key("out", "", "output file, stdout if unset"),
    key("alpha", "2", "power-law eigenvalues lambda_n = n^alpha"),
    key("eigenvalues", "", "explicit comma-separated eigenvalues, overrides alpha"),
    key("D", "8", "number of retained modes"),
    key("gamma", "7", "decay exponent of the range set"),
    key("drift", "sign", "zero | constant | lipschitz | sign | piecewise | linear"),
    key("amplitude", "1", "multiplier on the decay envelope"),
    key("scales", "", "explicit comma-separated drift scales, overrides the envelope"),
    key("kappa", "1", "frequency of the lipschitz drift"),
    key("threshold", "0", "switching point of the sign drift"),
    key("rate", "0", "time drift of the sign threshold"),
    key("cell", "0.1", "spatial cell width of the piecewise drift"),
    key("time_cells", "16", "time cells of the piecewise drift"),
    key("drift_seed", "1", "hash seed of the piecewise drift"),
    key("grid", "10", "dyadic level of the time grid"),
    key("replicas", "1000", "Monte Carlo replicas"),
    key("t", "1", "observation time"),
    key("n", "4,5,6,7,8", "comma-separated dyadic levels"),
    key("r", "0", "radius exponent of the lattice"),
    key("m", "8", "mesh exponent (lattice) or level (Gronwall)"),
    key("scale", "1", "lattice scale, 1 or 2"),
    key("budget", "10000000", "largest lattice enumerated before refusing"),
    key("K", "0.5", "Gronwall growth constant"),
    key("beta0", "0.0001", "Gronwall start value"),
    key("steps", "", "Gronwall steps, 2^m if unset"),
    key("p", "2,4,6", "comma-separated moment orders"),
    key("walk", "4,8,12", "comma-separated martingale lengths"),
    key("increments", "rademacher", "zero | rademacher | uniform"),
    key("c", "1", "increment bound"),
    key("beta_a", "1", "constant of the lower spectral bound"),
    key("subnodes", "16", "quadrature nodes per dyadic interval"),
    key("mesh_offset", "4", "lattice mesh 2^-(n + offset) for sampled points"),
    key("coincident", "false", "use y = x in pair samples"),
    key("chain_length", "64", "Euler chain length"),
    key("paths", "50", "sampled paths"),
    key("inits", "3", "initializations per path"),
    key("tolerance", "1e-9", "Picard convergence tolerance"),
    key("max_iter", "200", "Picard iteration cap"),
    key("damping", "1", "Picard damping weight"),
    key("x0", "", "comma-separated initial condition, zero if unset"),
    key("samples", "1000", "random validation samples"),
];

pub fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub enum Eigenvalues {
    PowerLaw { alpha: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    Zero,
    Constant,
    Lipschitz,
    Sign,
    Piecewise,
    Linear,
}

impl FromStr for DriftKind {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "zero" => Self::Zero,
            "constant" => Self::Constant,
            "lipschitz" => Self::Lipschitz,
            "sign" => Self::Sign,
            "piecewise" => Self::Piecewise,
            "linear" => Self::Linear,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Increments {
    Zero,
    Rademacher,
    Uniform,
}

impl FromStr for Increments {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "zero" => Self::Zero,
            "rademacher" => Self::Rademacher,
            "uniform" => Self::Uniform,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub eigenvalues: Eigenvalues,
    pub dim: usize,
    pub gamma: f64,
    pub drift: DriftKind,
    pub amplitude: f64,
    pub scales: Option<Vec<f64>>,
    pub kappa: f64,
    pub threshold: f64,
    pub rate: f64,
    pub cell: f64,
    pub time_cells: u32,
    pub drift_seed: u64,
    pub grid: u32,
    pub replicas: usize,
    pub t: f64,
    pub levels: Vec<u32>,
    pub r: u32,
    pub m: u32,
    pub scale: Scale,
    pub budget: u64,
    pub k: f64,
    pub beta0: f64,
    pub steps: Option<u64>,
    pub p: Vec<f64>,
    pub walk: Vec<u32>,
    pub increments: Increments,
    pub c: f64,
    pub beta_a: f64,
    pub subnodes: usize,
    pub mesh_offset: u32,
    pub coincident: bool,
    pub chain_length: usize,
    pub paths: usize,
    pub inits: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub x0: Option<Vec<f64>>,
    pub samples: usize,
    /// The effective `key=value` pairs, defaults included, in [`KEYS`] order.
    pub echo: Vec<(String, String)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

/// Splits the text into pairs. Unknown keys, malformed and repeated lines
/// are reported.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigErrors> {
    let (map, errors) = split_pairs(text);
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(ConfigErrors(errors))
    }
}

fn split_pairs(text: &str) -> (BTreeMap<String, String>, Vec<ConfigError>) {
    let mut map = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |key: &str, message: String| ConfigError { line: Some(i + 1), key: key.into(), message };
        let Some((k, v)) = line.split_once('=') else {
            errors.push(err(line, "expected key=value".into()));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if key_spec(k).is_none() {
            errors.push(err(k, "unknown key".into()));
        } else if map.insert(k.to_string(), v.to_string()).is_some() {
            errors.push(err(k, "repeated key".into()));
        }
    }
    (map, errors)
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    build(text, &[])
}

/// Parses `text`, applies `overrides` on top and validates the result.
pub fn build(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigErrors> {
    let (mut map, mut errors) = split_pairs(text);
    for (k, v) in overrides {
        if key_spec(k).is_none() {
            errors.push(ConfigError { line: None, key: k.clone(), message: "unknown key".into() });
        } else {
            map.insert(k.clone(), v.clone());
        }
    }
    let mut rd = Reader { map: &map, errors: Vec::new() };
    let cfg = rd.read();
    errors.extend(rd.errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errors: Vec<ConfigError>,
}

impl Reader<'_> {
    fn text(&self, key: &str) -> &str {
        self.map
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| key_spec(key).expect("known key").default)
    }

    fn is_set(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn fail(&mut self, key: &str, message: String) {
        self.errors.push(ConfigError { line: None, key: key.into(), message });
    }

    fn scalar<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let text = self.text(key).to_string();
        match text.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(key, format!("expected {what}, got {text:?}"));
                None
            }
        }
    }

    /// Parses and checks `ok`, describing the constraint as `rule`.
    fn checked<T: FromStr + Copy + fmt::Display>(
        &mut self,
        key: &str,
        what: &str,
        rule: &str,
        ok: impl Fn(T) -> bool,
        fallback: T,
    ) -> T {
        match self.scalar::<T>(key, what) {
            Some(v) if ok(v) => v,
            Some(v) => {
                self.fail(key, format!("constraint violated: {rule} (got {v})"));
                fallback
            }
            None => fallback,
        }
    }

    fn float(&mut self, key: &str, rule: &str, ok: impl Fn(f64) -> bool) -> f64 {
        self.checked(key, "a number", rule, move |v: f64| v.is_finite() && ok(v), 1.0)
    }

    fn int<T: FromStr + Copy + fmt::Display + From<u8>>(&mut self, key: &str, rule: &str, ok: impl Fn(T) -> bool) -> T {
        self.checked(key, "a nonnegative integer", rule, ok, T::from(1))
    }

    fn list<T: FromStr>(&mut self, key: &str, what: &str) -> Option<Vec<T>> {
        let text = self.text(key).to_string();
        if text.is_empty() {
            return None;
        }
        let parsed: Result<Vec<T>, _> = text.split(',').map(|s| s.trim().parse()).collect();
        match parsed {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(key, format!("expected a comma-separated list of {what}, got {text:?}"));
                None
            }
        }
    }

    fn float_list(&mut self, key: &str, rule: &str, ok: impl Fn(f64) -> bool) -> Option<Vec<f64>> {
        let v = self.list::<f64>(key, "numbers")?;
        if v.iter().all(|x| x.is_finite() && ok(*x)) {
            Some(v)
        } else {
            self.fail(key, format!("constraint violated: {rule}"));
            None
        }
    }

    fn choice<T: FromStr>(&mut self, key: &str, options: &str) -> Option<T> {
        let text = self.text(key).to_string();
        match text.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(key, format!("expected one of {options}, got {text:?}"));
                None
            }
        }
    }

    fn read(&mut self) -> ExperimentConfig {
        let seed = self.scalar::<u64>("seed", "an unsigned 64-bit integer").unwrap_or(0);
        let workers = self.int("workers", "workers >= 0", |_: usize| true);
        let out = Some(self.text("out")).filter(|s| !s.is_empty()).map(PathBuf::from);
        let alpha = self.float("alpha", "alpha > 0", |v| v > 0.0);
        let mut dim = self.int("D", "1 <= D <= 4096", |v: usize| (1..=4096).contains(&v));
        let explicit = self.float_list("eigenvalues", "eigenvalues > 0", |v| v > 0.0);
        let eigenvalues = match explicit {
            Some(ev) => {
                if self.is_set("D") && dim != ev.len() {
                    self.fail("D", format!("constraint violated: D = {dim} must equal the number of eigenvalues ({})", ev.len()));
                }
                dim = ev.len();
                Eigenvalues::Explicit(ev)
            }
            None => Eigenvalues::PowerLaw { alpha },
        };
        let gamma = self.float("gamma", "gamma > 0", |v| v > 0.0);
        let drift = self
            .choice("drift", "zero, constant, lipschitz, sign, piecewise, linear")
            .unwrap_or(DriftKind::Sign);
        let amplitude = self.float("amplitude", "amplitude > 0", |v| v > 0.0);
        let scales = self.float_list("scales", "scales >= 0", |v| v >= 0.0);
        if let Some(s) = &scales {
            if s.len() != dim {
                let len = s.len();
                self.fail("scales", format!("constraint violated: {len} scales for D = {dim} modes"));
            }
        }
        let kappa = self.float("kappa", "kappa >= 0", |v| v >= 0.0);
        let threshold = self.float("threshold", "threshold finite", |_| true);
        let rate = self.float("rate", "rate finite", |_| true);
        let cell = self.float("cell", "cell > 0", |v| v > 0.0);
        let time_cells = self.int("time_cells", "time_cells >= 1", |v: u32| v >= 1);
        let drift_seed = self.scalar::<u64>("drift_seed", "an unsigned 64-bit integer").unwrap_or(0);
        let grid = self.int("grid", "1 <= grid <= 24", |v: u32| (1..=24).contains(&v));
        let replicas = self.int("replicas", "replicas >= 1", |v: usize| v >= 1);
        let t = self.float("t", "t >= 0", |v| v >= 0.0);
        let levels = self.list::<u32>("n", "levels").unwrap_or_default();
        if levels.is_empty() || levels.iter().any(|&n| !(1..=20).contains(&n)) {
            self.fail("n", "constraint violated: nonempty list with 1 <= n <= 20".into());
        }
        let r = self.int("r", "r <= 30", |v: u32| v <= 30);
        let m = self.int("m", "m <= 30", |v: u32| v <= 30);
        let scale = match self.int("scale", "scale in {1, 2}", |v: u32| v == 1 || v == 2) {
            2 => Scale::Two,
            _ => Scale::One,
        };
        let budget = self.scalar::<u64>("budget", "an unsigned 64-bit integer").unwrap_or(0);
        let k = self.float("K", "K >= 0", |v| v >= 0.0);
        let beta0 = self.float("beta0", "0 < beta0 < 1", |v| v > 0.0 && v < 1.0);
        let steps = if self.text("steps").is_empty() {
            None
        } else {
            self.scalar::<u64>("steps", "a nonnegative integer")
        };
        let p = self.float_list("p", "p >= 2", |v| v >= 2.0).unwrap_or_default();
        let walk = self.list::<u32>("walk", "lengths").unwrap_or_default();
        if walk.is_empty() || walk.iter().any(|&w| w == 0 || w > 1_000_000) {
            self.fail("walk", "constraint violated: nonempty list with 1 <= length <= 1000000".into());
        }
        let increments = self.choice("increments", "zero, rademacher, uniform").unwrap_or(Increments::Rademacher);
        let c = self.float("c", "c > 0", |v| v > 0.0);
        let beta_a = self.float("beta_a", "beta_a > 0", |v| v > 0.0);
        let subnodes = self.int("subnodes", "1 <= subnodes <= 1024", |v: usize| (1..=1024).contains(&v));
        let mesh_offset = self.int("mesh_offset", "mesh_offset <= 20", |v: u32| v <= 20);
        let coincident = self.choice("coincident", "true, false").unwrap_or(false);
        let chain_length = self.int("chain_length", "chain_length >= 1", |v: usize| v >= 1);
        let paths = self.int("paths", "paths >= 1", |v: usize| v >= 1);
        let inits = self.int("inits", "inits >= 2", |v: usize| v >= 2);
        let tolerance = self.float("tolerance", "tolerance > 0", |v| v > 0.0);
        let max_iter = self.int("max_iter", "max_iter >= 1", |v: usize| v >= 1);
        let damping = self.float("damping", "0 < damping <= 1", |v| v > 0.0 && v <= 1.0);
        let x0 = self.float_list("x0", "x0 finite", |_| true);
        if let Some(x) = &x0 {
            if x.len() != dim {
                let len = x.len();
                self.fail("x0", format!("constraint violated: {len} components for D = {dim} modes"));
            }
        }
        let samples = self.int("samples", "samples >= 0", |_: usize| true);
        let echo = KEYS.iter().map(|k| (k.name.to_string(), self.text(k.name).to_string())).collect();
        ExperimentConfig {
            seed,
            workers,
            out,
            eigenvalues,
            dim,
            gamma,
            drift,
            amplitude,
            scales,
            kappa,
            threshold,
            rate,
            cell,
            time_cells,
            drift_seed,
            grid,
            replicas,
            t,
            levels,
            r,
            m,
            scale,
            budget,
            k,
            beta0,
            steps,
            p,
            walk,
            increments,
            c,
            beta_a,
            subnodes,
            mesh_offset,
            coincident,
            chain_length,
            paths,
            inits,
            tolerance,
            max_iter,
            damping,
            x0,
            samples,
            echo,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.gamma, 7.0);
        assert_eq!(c.dim, 8);
        assert_eq!(c.drift, DriftKind::Sign);
        assert_eq!(c.eigenvalues, Eigenvalues::PowerLaw { alpha: 2.0 });
        assert_eq!(c.echo.len(), KEYS.len());
    }

    #[test]
    fn two_keys_override() {
        let c = parse_config("gamma=7\nD=8").unwrap();
        assert_eq!((c.gamma, c.dim), (7.0, 8));
        let c = parse_config("# header\ngamma = 2   # inline\n\nD=3\n").unwrap();
        assert_eq!((c.gamma, c.dim), (2.0, 3));
    }

    #[test]
    fn constraint_is_named() {
        let e = parse_config("gamma=-1").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert!(e.to_string().contains("gamma > 0"), "{e}");
    }

    #[test]
    fn all_errors_are_reported() {
        let e = parse_config("gamma=-1\nbogus=3\nD=x\nnot a pair").unwrap_err();
        assert_eq!(e.0.len(), 4);
        assert_eq!(e.0[0].line, Some(2));
        assert_eq!(e.0[1].line, Some(4));
        let e = parse_config("gamma=-1\nD=x\nbeta0=1\ndrift=wiggly").unwrap_err();
        let keys: Vec<&str> = e.0.iter().map(|x| x.key.as_str()).collect();
        assert_eq!(keys, ["D", "gamma", "drift", "beta0"]);
    }

    #[test]
    fn overrides_win() {
        let c = build("gamma=2\nm=3", &[("m".into(), "10".into())]).unwrap();
        assert_eq!((c.gamma, c.m), (2.0, 10));
        assert!(build("", &[("nope".into(), "1".into())]).is_err());
    }

    #[test]
    fn explicit_eigenvalues_set_dimension() {
        let c = parse_config("eigenvalues=1,4,9").unwrap();
        assert_eq!(c.dim, 3);
        assert!(parse_config("eigenvalues=1,4,9\nD=2").is_err());
        assert!(parse_config("eigenvalues=1,-4").is_err());
    }

    #[test]
    fn list_lengths_are_checked() {
        assert!(parse_config("D=2\nx0=1,2,3").is_err());
        assert!(parse_config("D=2\nscales=1").is_err());
        assert_eq!(parse_config("D=2\nx0=1,2").unwrap().x0, Some(vec![1.0, 2.0]));
    }
}
