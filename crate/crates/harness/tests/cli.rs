use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use porflow::export::read_trajectory;
use porflow::{load_config, parse_config};
use proptest::prelude::*;

fn tiny() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny.case")
}

fn porflow(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porflow"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {stderr}"))
}

fn write_case(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("case.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn malformed_config_exits_with_parse_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_case(dir.path(), "[grid]\nnx = 8\nny = \n");
    let out = porflow(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "parse");
    assert_eq!(rec["exit_code"], 2);
    assert!(rec["message"].as_str().unwrap().contains(":3:"), "{rec}");
}

#[test]
fn invalid_well_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(tiny()).unwrap().replace("i = 7", "i = 8");
    let cfg = write_case(dir.path(), &text);
    let out = porflow(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "validation");
    assert!(rec["message"].as_str().unwrap().contains("wells.P1"), "{rec}");
}

#[test]
fn missing_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = porflow(&["simulate"], &dir.path().join("absent.case"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stalled_newton_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(tiny()).unwrap()
        + "\n[solver]\nmax_newton_iters = 1\nmax_step_cuts = 0\nresidual_tol = 1e-14\n";
    let cfg = write_case(dir.path(), &text);
    let out = porflow(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["exit_code"], 3);
}

#[test]
fn compare_of_identical_trajectories_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = porflow(&["simulate"], &tiny(), dir.path());
    assert!(out.status.success());
    let reference = dir.path().join("reference.pftr");
    let out = Command::new(env!("CARGO_BIN_EXE_porflow"))
        .args(["compare", "--config"])
        .arg(tiny())
        .arg("--out")
        .arg(dir.path())
        .arg("--predicted")
        .arg(&reference)
        .arg("--reference")
        .arg(&reference)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("mape.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn infer_replays_training_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let out = porflow(&["train", "--max-epochs", "10"], &tiny(), &train_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let infer_dir = dir.path().join("infer");
    let out = Command::new(env!("CARGO_BIN_EXE_porflow"))
        .args(["infer", "--config"])
        .arg(tiny())
        .arg("--out")
        .arg(&infer_dir)
        .arg("--checkpoints")
        .arg(train_dir.join("checkpoints"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trained = read_trajectory(&train_dir.join("prediction.pftr")).unwrap();
    let replayed = read_trajectory(&infer_dir.join("prediction.pftr")).unwrap();
    assert_eq!(trained, replayed);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(train_dir.join("train.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn bundled_baseline_case_loads() {
    let cfg = load_config(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/baseline_64.case")).unwrap();
    assert_eq!((cfg.grid.nx, cfg.grid.ny), (64, 64));
    let case = cfg.to_case().unwrap();
    assert_eq!(case.injectors().count(), 3);
    assert_eq!(case.producers().count(), 2);
    assert_eq!(cfg.schedule.dt, 2.0);
    assert_eq!(cfg.n_steps(), 50);
    assert_eq!(case.rock.perm.len(), 64 * 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn resolved_config_round_trips(
        nx in 2usize..20,
        ny in 2usize..20,
        dt in prop::sample::select(vec![0.5, 1.0, 2.0, 2.5, 5.0]),
        steps in 1usize..10,
        rate in 1000.0f64..1500.0,
        bhp in 2300.0f64..2500.0,
        seed in any::<u32>(),
    ) {
        let text = format!(
            "seed = {seed}\n[grid]\nnx = {nx}\nny = {ny}\n\
             [[wells]]\nname = \"I\"\nkind = \"injector\"\ni = 0\nj = 0\n\
             [[wells]]\nname = \"P\"\nkind = \"producer\"\ni = {}\nj = {}\n\
             [schedule]\ndt = {dt}\ntotal_time = {}\n\
             [schedule.controls]\nI = [{rate}]\nP = [{bhp}]\n",
            nx - 1, ny - 1, dt * steps as f64,
        );
        let cfg = parse_config(&text, "case", Path::new(".")).unwrap();
        prop_assert_eq!(cfg.n_steps(), steps);
        let again = parse_config(&cfg.resolved_toml(), "resolved", Path::new(".")).unwrap();
        prop_assert_eq!(again, cfg);
    }
}
