use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn sdemem(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_sdemem"))
        .current_dir(dir)
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = sdemem(dir, args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn csv_rows(dir: &Path, name: &str) -> usize {
    read(dir, name).lines().count() - 1
}

const SMALL_OU: &str = "[model]\nname = \"ou\"\nunits = 3\nn_obs = 30\n[mcmc]\niterations = 300\nburn_in = 50\n";

fn small_ou(extra: &str) -> (TempDir, String) {
    let tmp = TempDir::new().unwrap();
    let config = format!("{SMALL_OU}{extra}");
    write(tmp.path(), "run.toml", &config);
    ok(tmp.path(), &["simulate", "--config", "run.toml", "--out", "sim"]);
    (tmp, config)
}

#[test]
fn simulate_row_counts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--out", "ou"]);
    assert_eq!(csv_rows(d, "ou/data.csv"), 8000);
    assert!(read(d, "ou/data.csv").starts_with("unit_id,time,y1\n"));
    write(d, "tumor.toml", "[model]\nname = \"tumor\"\n[scheme]\nname = \"pmmh\"\n");
    ok(d, &["simulate", "--config", "tumor.toml", "--out", "tumor"]);
    assert_eq!(csv_rows(d, "tumor/data.csv"), 210);
    // 10 units x 4 random effects, xi, 4 mu, 4 tau.
    assert_eq!(csv_rows(d, "tumor/truth.csv"), 49);
}

#[test]
fn reruns_are_byte_identical() {
    let (tmp, _) = small_ou("");
    let d = tmp.path();
    ok(d, &["simulate", "--config", "run.toml", "--out", "sim2"]);
    assert_eq!(read(d, "sim/data.csv"), read(d, "sim2/data.csv"));
    assert_eq!(read(d, "sim/truth.csv"), read(d, "sim2/truth.csv"));
    ok(d, &["simulate", "--config", "run.toml", "--out", "sim3", "--seed", "9"]);
    assert_ne!(read(d, "sim/data.csv"), read(d, "sim3/data.csv"));

    for out in ["a", "b"] {
        ok(d, &["infer", "--config", "run.toml", "--data", "sim/data.csv", "--out", out]);
    }
    assert_eq!(read(d, "a/chain.csv"), read(d, "b/chain.csv"));
    assert_eq!(read(d, "a/acceptance.csv"), read(d, "b/acceptance.csv"));
    assert_eq!(csv_rows(d, "a/chain.csv"), 300);
    let header = read(d, "a/chain.csv").lines().next().unwrap().to_string();
    assert!(header.starts_with("iteration,phi_1_1,phi_1_2,phi_1_3,phi_2_1"));
    assert!(header.ends_with("xi_1,mu_1,mu_2,mu_3,tau_1,tau_2,tau_3,loglik"));

    ok(d, &["tune", "--config", "run.toml", "--data", "sim/data.csv", "--out", "t1"]);
    ok(d, &["tune", "--config", "run.toml", "--data", "sim/data.csv", "--out", "t2"]);
    assert_eq!(read(d, "t1/tuning.csv"), read(d, "t2/tuning.csv"));
}

#[test]
fn zero_correlation_reproduces_pmmh() {
    let (tmp, _) = small_ou("");
    let d = tmp.path();
    write(d, "c.toml", &format!("{SMALL_OU}[scheme]\nname = \"cpmmh\"\nrho = 0.0\nparticles = 15\n"));
    write(d, "p.toml", &format!("{SMALL_OU}[scheme]\nname = \"pmmh\"\nparticles = 15\n"));
    ok(d, &["infer", "--config", "c.toml", "--data", "sim/data.csv", "--out", "c"]);
    ok(d, &["infer", "--config", "p.toml", "--data", "sim/data.csv", "--out", "p"]);
    assert_eq!(read(d, "c/chain.csv"), read(d, "p/chain.csv"));
}

#[test]
fn kalman_inference_and_self_diagnosis() {
    let (tmp, _) = small_ou("");
    let d = tmp.path();
    write(d, "k.toml", &format!("{SMALL_OU}[scheme]\nname = \"kalman\"\n"));
    ok(d, &["infer", "--config", "k.toml", "--data", "sim/data.csv", "--out", "k"]);
    let summary = read(d, "k/summary.toml");
    assert!(summary.contains("algorithm = \"kalman\""), "{summary}");
    let chain = read(d, "k/chain.csv");
    assert!(chain.lines().skip(1).all(|l| l.split(',').all(|f| f.parse::<f64>().unwrap().is_finite())));

    ok(d, &["diagnose", "--out", "diag", "k", "k/chain.csv"]);
    let w1 = read(d, "diag/wasserstein.csv");
    assert!(w1.starts_with("run,parameter,w1,w1_sd,w1_runtime\n"));
    for line in w1.lines().skip(1) {
        assert_eq!(line.split(',').nth(2).unwrap(), "0", "{line}");
    }
    let table = read(d, "diag/efficiency.csv");
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "Algorithm,rho,N,CPU(m),mESS,mESS/m,Rel.");
    for line in lines {
        assert!(line.ends_with(",1.00"), "{line}");
    }
    for f in ["ess.csv", "histogram.csv", "density.csv"] {
        assert!(csv_rows(d, &format!("diag/{f}")) > 0);
    }
}

#[test]
fn independent_kalman_runs_agree() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    // The slowest posterior direction has an ESS near 4% of the run length,
    // so 0.05 sd resolution needs about 1e5 iterations.
    let cfg =
        "[model]\nunits = 5\nn_obs = 50\n[scheme]\nname = \"kalman\"\n[mcmc]\niterations = 100000\nburn_in = 5000\n";
    write(d, "k.toml", cfg);
    ok(d, &["simulate", "--config", "k.toml", "--out", "sim"]);
    ok(d, &["infer", "--config", "k.toml", "--data", "sim/data.csv", "--out", "a", "--seed", "21"]);
    ok(d, &["infer", "--config", "k.toml", "--data", "sim/data.csv", "--out", "b", "--seed", "22"]);
    ok(d, &["diagnose", "--out", "diag", "b", "--baseline", "a"]);
    for line in read(d, "diag/wasserstein.csv").lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let w1_sd: f64 = f[3].parse().unwrap();
        assert!(w1_sd < 0.05, "{line}");
    }
}

#[test]
fn truncated_chain_is_diagnosable() {
    let (tmp, _) = small_ou("");
    let d = tmp.path();
    ok(d, &["infer", "--config", "run.toml", "--data", "sim/data.csv", "--out", "full"]);
    let text = read(d, "full/chain.csv");
    fs::create_dir(d.join("cut")).unwrap();
    write(d, "cut/chain.csv", &text[..text.len() * 2 / 3]);
    ok(d, &["diagnose", "--config", "run.toml", "--out", "diag", "cut"]);
    assert!(csv_rows(d, "diag/ess.csv") > 0);
}

#[test]
fn malformed_chain_reports_row() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut text = String::from("iteration,mu_1,loglik\n");
    for k in 1..=30 {
        text.push_str(&format!("{k},{},-1\n", if k == 7 { "oops".to_string() } else { (k as f64).sin().to_string() }));
    }
    write(d, "chain.csv", &text);
    let o = sdemem(d, &["diagnose", "--out", "diag", "chain.csv"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("row 8"), "{}", o.stderr);
}

#[test]
fn input_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "bad.toml", "[model]\nname = \"tumor\"\n[scheme]\nname = \"kalman\"\n");
    let o = sdemem(d, &["simulate", "--config", "bad.toml"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("kalman") && o.stderr.contains("tumor"), "{}", o.stderr);

    write(d, "typo.toml", "[mcmc]\niteratons = 5\n");
    assert_eq!(sdemem(d, &["simulate", "--config", "typo.toml"]).code, 2);
    assert_eq!(sdemem(d, &["infer"]).code, 2);
    assert_eq!(sdemem(d, &["infer", "--data", "missing.csv"]).code, 2);
    write(d, "data.csv", "unit_id,time,y1\n1,0,0.5\n1,0,0.7\n");
    let o = sdemem(d, &["infer", "--data", "data.csv"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("unit 1"), "{}", o.stderr);
}

#[test]
fn kalman_tuning_recommends_one_particle() {
    let (tmp, _) = small_ou("");
    let d = tmp.path();
    write(d, "k.toml", &format!("{SMALL_OU}[scheme]\nname = \"kalman\"\n"));
    ok(d, &["tune", "--config", "k.toml", "--data", "sim/data.csv", "--out", "t"]);
    let report = read(d, "t/tuning.csv");
    let chosen: Vec<&str> = report.lines().filter(|l| l.ends_with(",true")).collect();
    assert_eq!(chosen.len(), 3);
    assert!(chosen.iter().all(|l| l.split(',').nth(2) == Some("1")), "{report}");
}

#[test]
fn tuning_cap_exits_3() {
    let (tmp, _) = small_ou("[scheme]\nname = \"pmmh\"\n[tune]\ncap = 2\n");
    let d = tmp.path();
    let o = sdemem(d, &["tune", "--config", "run.toml", "--data", "sim/data.csv", "--out", "t"]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert!(o.stderr.contains("unit 1"), "{}", o.stderr);
}

#[test]
fn pmmh_rule_needs_more_particles() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let base = "[model]\nunits = 5\nn_obs = 100\n";
    write(d, "p.toml", &format!("{base}[scheme]\nname = \"pmmh\"\n"));
    write(d, "c.toml", &format!("{base}[scheme]\nname = \"cpmmh\"\nrho = 0.999\n"));
    ok(d, &["simulate", "--config", "p.toml", "--out", "sim"]);
    ok(d, &["tune", "--config", "p.toml", "--data", "sim/data.csv", "--out", "p"]);
    ok(d, &["tune", "--config", "c.toml", "--data", "sim/data.csv", "--out", "c"]);
    let max_n = |name: &str| -> usize {
        read(d, name)
            .lines()
            .filter(|l| l.ends_with(",true"))
            .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
            .max()
            .unwrap()
    };
    assert!(max_n("p/tuning.csv") > max_n("c/tuning.csv"));
}

#[test]
fn degenerate_start_exits_4_naming_unit() {
    let (tmp, _) = small_ou("");
    let d = tmp.path();
    let truth = read(d, "sim/truth.csv").replace("phi,phi_2_2,", "phi,phi_2_2,800#");
    let truth: String = truth
        .lines()
        .map(|l| match l.split_once("800#") {
            Some((head, _)) => format!("{head}800\n"),
            None => format!("{l}\n"),
        })
        .collect();
    write(d, "sim/truth.csv", &truth);
    let o = sdemem(d, &["infer", "--config", "run.toml", "--data", "sim/data.csv", "--out", "run"]);
    assert_eq!(o.code, 4, "{}", o.stderr);
    assert!(o.stderr.contains("unit 2"), "{}", o.stderr);
}

#[test]
fn quiet_suppresses_stdout() {
    let tmp = TempDir::new().unwrap();
    let o = ok(tmp.path(), &["simulate"]);
    assert!(o.stdout.is_empty());
}
