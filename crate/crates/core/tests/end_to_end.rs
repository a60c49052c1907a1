mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use adafl::attacks::Strategy;
use adafl::harness::output::{parse_rounds_csv, read_summary, ATTACKS_CSV, CONFIG_DUMP, INCOMPLETE, PCA_CSV, ROUNDS_CSV};
use adafl::harness::{self, compare, ExperimentConfig};

fn run_into(cfg: &ExperimentConfig, dir: &Path) -> adafl::harness::RunSummary {
    let mut c = cfg.clone();
    c.out = dir.to_path_buf();
    harness::run(&c).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn same_seed_gives_identical_outputs() {
    let cfg = common::desk(4, 0.01);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_into(&cfg, a.path());
    run_into(&cfg, b.path());
    for f in [ROUNDS_CSV, ATTACKS_CSV, PCA_CSV] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
    // the dumps differ only in the output directory
    let strip = |d: &Path| read(d, CONFIG_DUMP).lines().filter(|l| !l.starts_with("out =")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(a.path()), strip(b.path()));
    assert!(!a.path().join(INCOMPLETE).exists());
}

#[test]
fn summary_agrees_with_round_table() {
    let cfg = common::desk(2, 0.01);
    let dir = tempfile::tempdir().unwrap();
    let s = run_into(&cfg, dir.path());
    let rows = parse_rounds_csv(&read(dir.path(), ROUNDS_CSV)).unwrap();
    let window: Vec<_> = rows
        .iter()
        .filter(|r| r.round > s.horizon_start && r.round <= s.horizon_end)
        .collect();
    assert_eq!(window.len(), s.horizon_end - s.horizon_start);
    let best_mta = window.iter().map(|r| r.mta).fold(f64::NEG_INFINITY, f64::max);
    let best_ata = window.iter().filter_map(|r| r.ts_ata).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(s.best_mta, best_mta);
    assert_eq!(s.best_ata, Some(best_ata));
    assert_eq!(read_summary(dir.path()).unwrap(), s);
    let dump: ExperimentConfig = ExperimentConfig::from_toml_str(&read(dir.path(), CONFIG_DUMP)).unwrap();
    assert_eq!(dump.seed, 2);
}

#[test]
fn label_flip_sweep_and_compare() {
    let mut lf = common::desk(3, 0.01);
    lf.attack.strategy = Strategy::LabelFlip;
    lf.attack.target = None;
    let ada = common::desk(3, 0.01);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = run_into(&lf, a.path());
    assert_eq!(s.variants.len(), 9);
    assert!(a.path().join("target-0").join(ROUNDS_CSV).exists());
    run_into(&ada, b.path());
    let table = compare(&[a.path().into(), b.path().into()], false).unwrap();
    assert_eq!(table.columns, vec!["label-flip eps=0.01", "ada-full eps=0.01"]);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adafl"))
}

#[test]
fn cli_presets_run_and_compare() {
    let out = cli().args(["presets", "list"]).output().unwrap();
    assert!(out.status.success());
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(listing.contains("desk-synth") && listing.contains("full-mnist-eps01"));

    let tmp = tempfile::tempdir().unwrap();
    let shown = cli().args(["presets", "show", "desk-synth"]).output().unwrap();
    let config = tmp.path().join("desk.toml");
    fs::write(&config, &shown.stdout).unwrap();
    let dirs: Vec<_> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        let st = cli()
            .arg("run")
            .arg(&config)
            .args(["--seed", "5", "--rounds", "30", "--epsilon", "0.05", "--out"])
            .arg(d)
            .status()
            .unwrap();
        assert!(st.success());
    }
    let s = read_summary(&dirs[0]).unwrap();
    assert_eq!((s.seed, s.epsilon, s.rounds), (5, 0.05, 30));
    let cmp = cli().arg("compare").args(&dirs).output().unwrap();
    assert!(cmp.status.success());
    assert!(String::from_utf8(cmp.stdout).unwrap().contains("MTA"));
}

#[test]
fn cli_rejects_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "preset = \"desk-synth\"\nepsilon = 0.01\nbogus = 1\n").unwrap();
    let out = cli().arg("run").arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("bogus"));
    assert!(!cli().args(["compare", "only-one"]).status().unwrap().success());
}
