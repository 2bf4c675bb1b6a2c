use std::path::Path;
use std::process::{Command, Output};

use pairsp::io::store_dataset;
use pairsp_core::model::Dataset;
use pairsp_core::models::ar1::simulate_ar1;
use pairsp_core::models::mvn::simulate_equicorr;
use pairsp_core::models::{Ar1Params, ContaminationSpec, MvnParams};
use pairsp_core::numerics::RngStream;

fn pairsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairsp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn mvn_file(dir: &Path) -> String {
    let mut rng = RngStream::new(3, 0).rng();
    let rows = simulate_equicorr(&MvnParams::new(0.0, 1.0, 0.5), 40, 20, &mut rng).unwrap();
    let path = dir.join("mvn.csv");
    store_dataset(&path, &Dataset::Rows(rows)).unwrap();
    path.to_str().unwrap().to_owned()
}

const CONFIG: &str = r#"{"model":"mvn","true_params":{"mu":0,"sigma2":1,"rho":0.5},
    "shape":{"n":10,"q":30},"replications":30,"master_seed":1,
    "statistics":["wald","score","sp"],"matrix_mode":"empirical"}"#;

#[test]
fn bad_usage_exits_with_two() {
    assert_eq!(pairsp(&["estimate", "--no-such-flag"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model":"mvn","replications":0}"#).unwrap();
    let o = pairsp(&["coverage", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let missing = dir.path().join("missing.csv");
    let o = pairsp(&["estimate", "--model", "mvn", "--data", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_prints_one_row_per_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let data = mvn_file(dir.path());
    let out = stdout(&pairsp(&["estimate", "--model", "mvn", "--data", &data]));
    let names: Vec<&str> = out.lines().skip(1).filter(|l| !l.starts_with('#')).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["mu", "sigma2", "rho"]);
    for line in out.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let se: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!(se > 0.0 && se < 1.0, "{line}");
    }
}

#[test]
fn test_prints_every_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let data = mvn_file(dir.path());
    let out = stdout(&pairsp(&["test", "--model", "mvn", "--data", &data, "--null", "mu=0,sigma2=1,rho=0.5"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 8, "{out}");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["pw", "wald", "score", "moment", "cb", "inv", "sp"]);
    let sp_p: f64 = lines[7].split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&sp_p));

    let o = pairsp(&["test", "--model", "mvn", "--data", &data, "--null", "mu=0,rho=0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn test_on_a_series_with_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(4, 0).rng();
    let series = simulate_ar1(&Ar1Params::new(0.0, 0.5, 1.0), 60, &ContaminationSpec::none(), &mut rng).unwrap();
    let path = dir.path().join("ar1.csv");
    store_dataset(&path, &Dataset::Series(series)).unwrap();
    let args = [
        "test", "--model", "ar1", "--data", path.to_str().unwrap(), "--null", "phi0=0,phi1=0.5,sigma2=1",
        "--tuning", "1.3,1.3,1.3", "--bootstrap", "49", "--seed", "2",
    ];
    let a = stdout(&pairsp(&args));
    assert!(a.lines().any(|l| l.starts_with("sp_boot")), "{a}");
    assert_eq!(a, stdout(&pairsp(&args)));
}

#[test]
fn coverage_is_reproducible_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();
    let a = stdout(&pairsp(&["coverage", "--config", cfg, "--seed", "7", "--threads", "1"]));
    let b = stdout(&pairsp(&["coverage", "--config", cfg, "--seed", "7", "--threads", "3"]));
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert!(lines.next().unwrap().starts_with("# config={"));
    assert!(a.contains("\"master_seed\":7"));
    assert_eq!(lines.next().unwrap(), "statistic,level,coverage,mc_se,failures");
    assert_eq!(lines.count(), 9);

    let out = dir.path().join("size.csv");
    let o = pairsp(&["sizecurve", "--config", cfg, "--statistic", "sp", "--alphas", "0.05,0.1", "--out", out.to_str().unwrap()]);
    stdout(&o);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");

    let o = pairsp(&["qq", "--config", cfg, "--statistic", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn region_emits_boundary_points() {
    let dir = tempfile::tempdir().unwrap();
    let data = mvn_file(dir.path());
    let out = stdout(&pairsp(&["region", "--data", &data, "--sigma2", "0.3:2.5:8", "--rho", "0:0.9:8", "--boundary"]));
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "statistic,sigma2,rho,p_value,inside,boundary");
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.ends_with(",1,1")));
    assert_eq!(pairsp(&["region", "--data", &data, "--rho", "1:0:5"]).status.code(), Some(2));
}
