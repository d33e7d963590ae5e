use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_robreg");

fn robreg(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("robreg runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

const SMALL: &str = "seed = 3\n[data]\nn = 400\np = 3\neps = 0.1\n[fit]\nbuckets = 8\nouter_rounds = 8\ninner_rounds = 8\n";

#[test]
fn generate_writes_both_halves_and_the_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = out_dir(tmp.path(), "gen");
    let res = robreg(&["generate", "--config", &cfg, "--out", &out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let text = fs::read_to_string(Path::new(&out).join("dataset.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "y,x_1,x_2,x_3,corrupted");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 800);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
    let flagged = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert_eq!(flagged, 40);

    let manifest = fs::read_to_string(Path::new(&out).join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.lines().any(|l| l.starts_with("config_hash = ") && l.len() == "config_hash = ".len() + 64));
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = out_dir(tmp.path(), "a");
    let b = out_dir(tmp.path(), "b");
    let c = out_dir(tmp.path(), "c");
    assert!(robreg(&["generate", "--config", &cfg, "--out", &a]).status.success());
    assert!(robreg(&["generate", "--config", &cfg, "--out", &b]).status.success());
    assert!(robreg(&["generate", "--config", &cfg, "--out", &c, "--seed", "4"]).status.success());
    for f in ["dataset.csv", "dataset.rrds", "manifest.txt"] {
        assert_eq!(fs::read(Path::new(&a).join(f)).unwrap(), fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
    let seeded = fs::read(Path::new(&c).join("dataset.csv")).unwrap();
    assert_ne!(fs::read(Path::new(&a).join("dataset.csv")).unwrap(), seeded);
}

fn final_error_and_accepted(log: &str) -> (f64, usize) {
    let rows: Vec<Vec<&str>> = log.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let last: f64 = rows.last().unwrap()[4].parse().unwrap();
    let accepted = rows.iter().filter(|r| r[2] == "1").count();
    (last, accepted)
}

#[test]
fn noiseless_fit_from_binary_reports_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 5\n[data]\nn = 400\np = 3\nnoise_law = { kind = \"gaussian\", sigma = 0.0 }\nb_star = [1.0, -2.0, 0.5]\n\
         [fit]\nbuckets = 8\nouter_rounds = 6\ninner_rounds = 6\nzeta = 1e-6\n",
    );
    let gen = out_dir(tmp.path(), "gen");
    assert!(robreg(&["generate", "--config", &cfg, "--out", &gen]).status.success());
    let fit = out_dir(tmp.path(), "fit");
    let data = Path::new(&gen).join("dataset.rrds");
    let res = robreg(&["fit", "--config", &cfg, "--data", data.to_str().unwrap(), "--out", &fit]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let log = fs::read_to_string(Path::new(&fit).join("fit_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "t,theta,accepted,step_norm,error");
    let (last, _) = final_error_and_accepted(&log);
    // Every bucket least-squares fit is exact without noise.
    assert!(last < 1e-6, "final error {last}");
    let b_hat = fs::read_to_string(Path::new(&fit).join("b_hat.csv")).unwrap();
    assert_eq!(b_hat.lines().count(), 4);
}

#[test]
fn adaptive_mode_writes_lepski_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}zeta0 = 8.0\ngamma = 0.5\n"));
    let gen = out_dir(tmp.path(), "gen");
    assert!(robreg(&["generate", "--config", &cfg, "--out", &gen]).status.success());
    let data = Path::new(&gen).join("dataset.csv");
    let fit = out_dir(tmp.path(), "fit");
    let args = ["fit", "--config", &cfg, "--data", data.to_str().unwrap(), "--out", &fit, "--mode", "adaptive"];
    let res = robreg(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(Path::new(&fit).join("lepski.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "level,zeta,radius,error,prefix_feasible,chosen");
    assert_eq!(lines.count(), 3);
    let manifest = fs::read_to_string(Path::new(&fit).join("manifest.txt")).unwrap();
    assert!(manifest.contains("mode = adaptive"));

    let again = out_dir(tmp.path(), "again");
    let mut rerun = args;
    rerun[6] = &again;
    assert!(robreg(&rerun).status.success());
    for f in ["fit_log.csv", "b_hat.csv", "lepski.csv", "manifest.txt"] {
        assert_eq!(fs::read(Path::new(&fit).join(f)).unwrap(), fs::read(Path::new(&again).join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_summary_has_fixed_schema_and_is_order_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 9\n[data]\nn = 400\np = 2\n[fit]\nouter_rounds = 4\ninner_rounds = 4\n\
         [sweep]\nn = [400]\np = [2, 3]\neps = [0.0, 0.05]\nstrategies = [\"label_flip_large\"]\nseeds = 2\n",
    );
    let one = out_dir(tmp.path(), "one");
    let two = out_dir(tmp.path(), "two");
    assert!(robreg(&["sweep", "--config", &cfg, "--out", &one, "--jobs", "1"]).status.success());
    assert!(robreg(&["sweep", "--config", &cfg, "--out", &two, "--jobs", "3"]).status.success());
    let a = fs::read_to_string(Path::new(&one).join("summary.csv")).unwrap();
    assert_eq!(a.lines().next().unwrap(), "n,p,eps,strategy,seed,err_robust,err_ols,err_oracle_ols");
    assert_eq!(a.lines().count(), 1 + 8);
    assert_eq!(a, fs::read_to_string(Path::new(&two).join("summary.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "x");

    let cfg = write_config(tmp.path(), "[data]\nn = 100\np = 2\neps = 0.7\n");
    assert_eq!(robreg(&["generate", "--config", &cfg, "--out", &out]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "[data]\nn = 100\n");
    assert_eq!(robreg(&["generate", "--config", &cfg, "--out", &out]).status.code(), Some(2));

    assert_eq!(robreg(&["verify", "--suite", "nope"]).status.code(), Some(2));

    let missing = tmp.path().join("missing.csv");
    let cfg = write_config(tmp.path(), SMALL);
    let res = robreg(&["fit", "--config", &cfg, "--data", missing.to_str().unwrap(), "--out", &out]);
    assert_eq!(res.status.code(), Some(1));

    assert!(robreg(&["verify", "--suite", "kl", "--quick"]).status.success());
}
