use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adammcmc::config::{RunConfig, SamplerKind, TargetKind};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adammcmc"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env("ADAMMCMC_OUTPUT_ROOT", std::env::temp_dir())
        .output()
        .expect("binary runs")
}

fn small_mlp() -> RunConfig {
    RunConfig {
        target: TargetKind::Mlp,
        n_train: 100,
        n_test: 40,
        layers: vec![2, 6, 2],
        sigma: 0.02,
        sigma_dir: Some(5.0),
        steps: 60,
        burn_in: 20,
        gap: 4,
        n_samples: 10,
        ..RunConfig::default()
    }
}

fn write_config(dir: &Path, config: &RunConfig) -> String {
    let path = dir.join("config.in.json");
    fs::write(&path, config.to_json()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_is_deterministic_with_stable_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_mlp());
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = run(&[
                "run",
                "--config",
                &cfg,
                "--seed",
                "4",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", stderr(&o));
            out
        })
        .collect();
    for file in ["record.csv", "samples.csv", "samples.json", "summary.json"] {
        assert_eq!(
            fs::read(outs[0].join(file)).unwrap(),
            fs::read(outs[1].join(file)).unwrap(),
            "{file} differs"
        );
    }
    let manifest = |d: &Path| -> serde_json::Value {
        serde_json::from_slice(&fs::read(d.join("manifest.json")).unwrap()).unwrap()
    };
    let (ma, mb) = (manifest(&outs[0]), manifest(&outs[1]));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seed"], 4);
    assert_eq!(ma["command"], "run");

    let record = fs::read_to_string(outs[0].join("record.csv")).unwrap();
    assert_eq!(
        record.lines().next().unwrap(),
        "step,loss,log_alpha,accepted,theta_norm,u_norm"
    );
    assert_eq!(record.lines().count(), 61);
    let samples = fs::read_to_string(outs[0].join("samples.csv")).unwrap();
    assert_eq!(samples.lines().filter(|l| !l.is_empty()).count(), 10);

    // The written config reproduces the run.
    let again = dir.path().join("c");
    let o = run(&[
        "run",
        "--config",
        outs[0].join("config.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(outs[0].join("record.csv")).unwrap(),
        fs::read(again.join("record.csv")).unwrap()
    );
}

#[test]
fn different_seeds_differ() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_mlp());
    let read = |seed: &str| {
        let out = dir.path().join(seed);
        let o = run(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out.join("record.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn nonpositive_sigma_exits_2_naming_the_field() {
    let dir = TempDir::new().unwrap();
    for sigma in [0.0, -1.0] {
        let cfg = write_config(
            dir.path(),
            &RunConfig {
                sigma,
                ..small_mlp()
            },
        );
        let o = run(&[
            "run",
            "--config",
            &cfg,
            "--out",
            dir.path().join("x").to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("sigma"), "{}", stderr(&o));
    }
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"sigma": 1.0, "sigmaa": 2.0}"#).unwrap();
    let o = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigmaa"));
}

#[test]
fn missing_config_file_exits_1() {
    let o = run(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scan_writes_one_row_per_grid_value_and_seed() {
    let dir = TempDir::new().unwrap();
    let config = RunConfig {
        target: TargetKind::Quadratic,
        dim: 2,
        sigma: 0.5,
        sigma_dir: Some(1.0),
        gamma: 0.05,
        steps: 100,
        burn_in: 50,
        gap: 5,
        n_samples: 10,
        replicates: 2,
        ..RunConfig::default()
    };
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("scan");
    let o = run(&[
        "scan",
        "--config",
        &cfg,
        "--param",
        "sigma",
        "--grid",
        "0.1,0.3,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(out.join("scan.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let seeds: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(seeds, ["0", "1", "0", "1", "0", "1"]);
    let table = fs::read_to_string(out.join("scan_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn scan_rejects_empty_grid_and_unknown_param() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s");
    let o = run(&[
        "scan",
        "--param",
        "sigma",
        "--grid",
        "",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("grid"));
    let o = run(&[
        "scan",
        "--param",
        "width",
        "--grid",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("param"));
}

#[test]
fn compare_mh_needs_a_batch_size_and_writes_both_records() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_mlp());
    let out = dir.path().join("cmp");
    let o = run(&[
        "compare-mh",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batch_size"));

    let cfg = write_config(
        dir.path(),
        &RunConfig {
            batch_size: Some(25),
            ..small_mlp()
        },
    );
    let o = run(&[
        "compare-mh",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "full_record.csv",
        "stochastic_record.csv",
        "comparison.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn baselines_run_through_the_cli() {
    let dir = TempDir::new().unwrap();
    for sampler in [
        SamplerKind::Mala,
        SamplerKind::Adam,
        SamplerKind::Sgd,
        SamplerKind::Sghmc,
    ] {
        let cfg = write_config(
            dir.path(),
            &RunConfig {
                sampler,
                gamma: 1e-3,
                ..small_mlp()
            },
        );
        let out = dir.path().join(format!("{sampler:?}"));
        let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{sampler:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_quick_passes() {
    let o = run(&["verify", "--quick"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.matches("[PASS]").count(), 5);
}

#[test]
fn verify_rejects_unknown_criterion() {
    let o = run(&["verify", "--criterion", "11"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_round_trips() {
    let c = RunConfig {
        batch_size: Some(32),
        init: Some(vec![0.5; 3]),
        ..small_mlp()
    };
    let text = c.to_json();
    let back = RunConfig::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back.hash(), c.hash());
    assert!(RunConfig::from_json("{}").is_ok());
}
