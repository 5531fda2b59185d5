use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
version = 1
seeds = [1, 2]

[train]
strategy = "auto"
epochs = 3
embed_dim = 8
hidden_dim = 8

[train.corpus]
num_languages = 4
alphabet_size = 12
sizes = [400, 200, 60, 40]
min_len = 3
max_len = 6
relatedness = 0.7
valid_size = 16
trial_fraction = 0.1
seed = 7
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn pmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmd"))
        .args(args)
        .env("PMD_LOG_LEVEL", "error")
        .output()
        .unwrap()
}

fn run_in(dir: &Path, verb: &str, extra: &[&str]) -> Output {
    let config = write_config(dir, TINY);
    let out = dir.join("out");
    let mut args = vec![verb, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pmd(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "run", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["baseline-t1", "baseline-thigh", "vanilla-md", "bi-pmd", "auto-pmd"] {
        let csv = read(dir.path(), &format!("{name}.csv"));
        assert!(csv.starts_with("seed,step,model,language,dev_ce,accuracy,alpha,mu\n"));
        let models = if name.starts_with("baseline") { 1 } else { 2 };
        assert_eq!(csv.lines().count(), 1 + 2 * 4 * models * 4, "{name}");
        for seed in [1, 2] {
            for m in 1..=models {
                let ckpt = dir.path().join(format!("out/checkpoints/{name}-seed{seed}-model{m}.ckpt"));
                assert!(ckpt.exists(), "{}", ckpt.display());
            }
        }
    }
    let pareto = read(dir.path(), "pareto-points.csv");
    assert_eq!(pareto.lines().count(), 1 + 2 * 8);
    let weights = read(dir.path(), "weight-evolution.csv");
    assert!(weights.starts_with("run,seed,k,step,model,mu,language,action,alpha\n"));
    assert!(weights.lines().any(|l| l.starts_with("auto-pmd,1,1,")));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout, read(dir.path(), "summary.txt"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), "run", &[]).status.success());
    assert!(run_in(b.path(), "run", &["--sequential", "--jobs", "1"]).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.path().join("out").join(&name), b.path().join("out").join(&name));
        if pa.is_file() {
            assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn temperature_below_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &TINY.replace("strategy = \"auto\"", "strategy = \"auto\"\ntau1 = 0.5"));
    let o = pmd(&["run", "--config", config.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("train.tau1") && err.contains("τ ≥ 1"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_and_log_levels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &TINY.replace("epochs = 3", "epochs = 3\nepoch = 3"));
    let o = pmd(&["dump-corpus", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_pmd"))
        .args(["dump-corpus", "--out", dir.path().to_str().unwrap()])
        .env("PMD_LOG_LEVEL", "verbose")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("PMD_LOG_LEVEL"));
}

#[test]
fn alpha_sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &TINY.replace("\"auto\"", "\"bi\""));
    let out = dir.path().join("out");
    let o = pmd(&["sweep-alpha", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seeds", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = read(dir.path(), "sweep-alpha.csv");
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, a) in rows.iter().zip(["0.2", "0.4", "0.6", "0.8"]) {
        assert!(row.starts_with(&format!("{a},1,")), "{row}");
    }

    let o = run_in(dir.path(), "sweep-alpha", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha-hyper not applicable"));
}

#[test]
fn scheduler_comparison_covers_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "compare-schedulers", &["--seeds", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = read(dir.path(), "schedulers.csv");
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["fixed-1", "variant-2", "variant-3", "default"]);

    let weights = read(dir.path(), "weight-evolution.csv");
    let mus = |run: &str| -> Vec<f64> {
        weights
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == run)
            .map(|f| f[5].parse().unwrap())
            .collect()
    };
    let fixed = mus("fixed-1");
    assert!(!fixed.is_empty() && fixed.iter().all(|&m| m == 1.0));
    let default = mus("default");
    assert!(default.windows(2).all(|w| w[1] <= w[0]));
    assert!(default.last().unwrap() < &1.0);
}

#[test]
fn checkpoints_evaluate_on_dumped_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "dump-corpus", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = dir.path().join("out/corpus.tsv");
    assert!(data.exists() && dir.path().join("out/corpus.tsv.meta.toml").exists());

    assert!(run_in(dir.path(), "run", &["--seeds", "1"]).status.success());
    let ckpt = dir.path().join("out/checkpoints/auto-pmd-seed1-model1.ckpt");
    let config = dir.path().join("config.toml");
    let o = pmd(&[
        "eval-checkpoint",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--corpus",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "language,dev_ce,accuracy");
    assert_eq!(lines.len(), 5);

    let run_csv = read(dir.path(), "auto-pmd.csv");
    let last_step = run_csv.lines().last().unwrap().split(',').nth(1).unwrap().to_string();
    for (l, line) in lines[1..].iter().enumerate() {
        let ce = line.split(',').nth(1).unwrap();
        let expected = format!("1,{last_step},1,{l},{ce},");
        assert!(run_csv.lines().any(|r| r.starts_with(&expected)), "{expected}");
    }

    let o = pmd(&["eval-checkpoint", "--checkpoint", dir.path().join("missing.ckpt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
