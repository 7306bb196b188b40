use std::path::PathBuf;
use std::process::{Command, Output};

fn regnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regnoise")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<csv::StringRecord> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(Result::unwrap).collect()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("regnoise-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn gronwall_with_zero_growth_is_constant() {
    let o = regnoise(&["gronwall", "--K", "0", "--beta0", "0.5", "--m", "4"]);
    assert!(o.status.success());
    let rows = rows(&stdout(&o));
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| &r[1] == "0.5"));
}

#[test]
fn lattice_stats_reports_effective_dimension() {
    let o = regnoise(&["lattice-stats", "--gamma", "1", "--m", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    let col = header.split(',').position(|h| h == "effdim_bruteforce").unwrap();
    let last = rows(&text).into_iter().find(|r| &r[2] == "10").unwrap();
    assert_eq!(&last[col], "3");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = regnoise(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn invalid_config_lists_every_error() {
    let cfg = scratch("bad.cfg");
    std::fs::write(&cfg, "gamma=-1\nbeta0=2\nbogus=1\n").unwrap();
    let o = regnoise(&["gronwall", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gamma > 0") && err.contains("0 < beta0 < 1") && err.contains("bogus"), "{err}");
}

#[test]
fn budget_refusal_exits_three() {
    let o = regnoise(&["lattice-stats", "--gamma", "1", "--m", "12", "--budget", "100"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn precondition_failure_exits_two() {
    let o = regnoise(&["gronwall", "--K", "50", "--m", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metadata_echoes_version_seed_and_config() {
    let o = regnoise(&["gronwall", "--seed", "42", "--K", "0.25"]);
    let text = stdout(&o);
    let meta: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(meta[0].starts_with("# regnoise "));
    assert!(meta.contains(&"# seed=42"));
    assert!(meta.contains(&"# K=0.25"));
    assert!(meta.iter().any(|l| l.starts_with("# closed_form_cap=")));
    assert_eq!(text.lines().nth(meta.len()), Some("j,beta"));
}

#[test]
fn flags_override_config_file() {
    let cfg = scratch("over.cfg");
    std::fs::write(&cfg, "# comment\nm = 2\nbeta0 = 0.25\n").unwrap();
    let o = regnoise(&["gronwall", "--config", cfg.to_str().unwrap(), "--m", "3"]);
    assert!(o.status.success());
    let rows = rows(&stdout(&o));
    assert_eq!(rows.len(), 9);
    assert_eq!(&rows[0][1], "0.25");
}

#[test]
fn out_flag_matches_stdout() {
    let path = scratch("sim.csv");
    let args = ["simulate-ou", "--replicas", "300", "--D", "3", "--seed", "5"];
    let direct = stdout(&regnoise(&args));
    let mut with_out = args.to_vec();
    let p = path.to_str().unwrap();
    with_out.extend(["--out", p]);
    let o = regnoise(&with_out);
    assert!(o.status.success() && o.stdout.is_empty());
    let strip = |t: &str| t.lines().filter(|l| !l.starts_with("# out=")).map(String::from).collect::<Vec<_>>();
    assert_eq!(strip(&std::fs::read_to_string(&path).unwrap()), strip(&direct));
}

#[test]
fn solve_emits_time_mode_value() {
    let o = regnoise(&["solve", "--D", "2", "--grid", "4", "--drift", "lipschitz", "--scales", "0.2,0.1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# converged=true"));
    let rows = rows(&text);
    assert_eq!(rows.len(), 17 * 2);
    assert_eq!((&rows[0][0], &rows[0][1]), ("0.0", "1"));
    assert_eq!((&rows[33][0], &rows[33][1]), ("1.0", "2"));
}

#[test]
fn phi_estimate_columns() {
    let o = regnoise(&["phi-estimate", "--n", "3", "--replicas", "5", "--D", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "n,k,dist_inf,phi_norm,bound_sigma,bound_rho,ratio");
    assert_eq!(rows(&text).len(), 5);
}

#[test]
fn same_seed_same_output() {
    let args = ["bdg-check", "--increments", "uniform", "--replicas", "500", "--walk", "30", "--seed", "3"];
    assert_eq!(stdout(&regnoise(&args)), stdout(&regnoise(&args)));
}
