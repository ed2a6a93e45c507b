//! End-to-end runs of the compiled binary: the full pipeline on a synthetic
//! corpus, plus the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use caprice::midi_io::{elements_to_midi, write_midi, ScoreElement};
use caprice::ql::QuarterLength;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_caprice"))
}

fn run_ok(args: &[String]) -> Output {
    let output = bin().args(args).output().unwrap();
    assert!(
        output.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn write_test_corpus(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let mut manifest = String::new();
    for n in 1u8..=4 {
        let elements: Vec<ScoreElement> = (0..24)
            .map(|k| ScoreElement::Note {
                pitch: 55 + n * 4 + (k % 7),
                duration: if k % 3 == 0 {
                    QuarterLength::new(1, 2)
                } else {
                    QuarterLength::new(1, 4)
                },
            })
            .collect();
        let doc = elements_to_midi(&elements, 480, 500_000).unwrap();
        let name = format!("caprice{n}.mid");
        fs::write(dir.join(&name), write_midi(&doc).unwrap()).unwrap();
        manifest.push_str(&format!("{n},{name}\n"));
    }
    fs::write(dir.join("manifest.csv"), manifest).unwrap();
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let corpus_dir = root.join("corpus");
    write_test_corpus(&corpus_dir);
    let store = root.join("store.bin").display().to_string();
    let out = root.join("out").display().to_string();
    let corpus = corpus_dir.display().to_string();
    let corpus_key = format!("corpus_dir={corpus}");
    let store_key = format!("store_path={store}");
    let out_key = format!("output_dir={out}");
    let base = ["--set", &corpus_key, "--set", &store_key, "--set", &out_key];

    let with = |extra: &[&str]| -> Vec<String> {
        base.iter().chain(extra).map(|s| s.to_string()).collect()
    };

    run_ok(&with(&["ingest"]));
    assert!(Path::new(&store).exists());
    assert!(root.join("out/manifest-ingest.json").exists());

    let train_args = with(&[
        "--set",
        "split=Paganini",
        "--set",
        "hidden_dim=12",
        "--set",
        "pitch_embed_dim=6",
        "--set",
        "duration_embed_dim=3",
        "--set",
        "seq_len=4",
        "--set",
        "epochs=3",
        "--set",
        "checkpoint_every=2",
        "train",
    ]);
    let output = run_ok(&train_args);
    let checkpoint_hash = String::from_utf8(output.stdout).unwrap().trim().to_string();
    assert_eq!(checkpoint_hash.len(), 16);
    let final_checkpoint = root.join("out/checkpoint-final.bin");
    assert!(final_checkpoint.exists());
    assert!(root.join("out/checkpoint-00002.bin").exists());

    let ck = final_checkpoint.display().to_string();
    let generate_args = with(&[
        "--set",
        "total_notes=20",
        "--set",
        "seq_len=4",
        "generate",
        "--checkpoint",
        &ck,
        "--count",
        "3",
    ]);
    run_ok(&generate_args);
    let midi_count = fs::read_dir(root.join("out"))
        .unwrap()
        .filter_map(Result::ok)
        .filter(|e| e.path().extension().is_some_and(|x| x == "mid"))
        .count();
    assert_eq!(midi_count, 3);
    assert!(root.join("out/diagnostics/generated-42/distributions.csv").exists());

    let gen_dir = root.join("gen");
    fs::create_dir_all(&gen_dir).unwrap();
    for entry in fs::read_dir(root.join("out")).unwrap().filter_map(Result::ok) {
        if entry.path().extension().is_some_and(|x| x == "mid") {
            fs::copy(entry.path(), gen_dir.join(entry.file_name())).unwrap();
        }
    }
    let gen = gen_dir.display().to_string();

    let encode_args = with(&["--set", "width=32", "encode", "--generated", &gen]);
    run_ok(&encode_args);
    let features = root.join("out/features.csv");
    assert!(features.exists());
    let header = fs::read_to_string(&features).unwrap();
    assert!(header.starts_with("piece_id,label,"));

    let features_str = features.display().to_string();
    let target = corpus_dir.join("caprice1.mid").display().to_string();
    let classify_args = with(&[
        "--set",
        "width=32",
        "--set",
        "rounds=10",
        "--set",
        "lambda=0.1",
        "classify",
        "--features",
        &features_str,
        "--pool",
        &features_str,
        "--target",
        &target,
    ]);
    let output = run_ok(&classify_args);
    let rate: f64 = String::from_utf8(output.stdout).unwrap().trim().parse().unwrap();
    assert!((0.0..=100.0).contains(&rate));

    let evaluate_args = with(&[
        "--set",
        "width=32",
        "--set",
        "rounds=5",
        "--set",
        "lambda=0.1",
        "evaluate",
        "--generated",
        &gen,
        "--checkpoint",
        &ck,
    ]);
    let output = run_ok(&evaluate_args);
    let line = String::from_utf8(output.stdout).unwrap();
    assert!(line.contains("full=") && line.contains("delta="), "stdout: {line}");
    let evaluation = fs::read_to_string(root.join("out/evaluation.csv")).unwrap();
    assert!(evaluation.starts_with("piece_id,mode,encoding,checkpoint,rate_percent\n"));
    assert!(evaluation.contains(&checkpoint_hash));

    run_ok(&with(&["gradcheck"]));
    assert!(root.join("out/manifest-gradcheck.json").exists());
}

#[test]
fn config_echo_and_log_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out").display().to_string();
    let output = bin()
        .args(["--set", &format!("output_dir={out}"), "--set", "seed=7", "gradcheck"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let config_line = stderr
        .lines()
        .find(|l| l.contains("event=config"))
        .expect("resolved config echoed");
    assert!(config_line.starts_with("INFO "));
    assert!(config_line.contains("seed=7"));
    assert!(config_line.contains("epochs=250"));
    assert!(stderr.lines().all(|l| {
        l.is_empty()
            || ["INFO ", "WARN ", "ERROR ", "DEBUG ", "TRACE "]
                .iter()
                .any(|lvl| l.starts_with(lvl))
    }));
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = format!("output_dir={}", tmp.path().join("out").display());

    assert_eq!(exit_code(&["--set", "temprature=1.0", "gradcheck"]), 1);
    assert_eq!(exit_code(&["--set", "epochs=fast", "gradcheck"]), 1);
    assert_eq!(exit_code(&["--set", &out, "train"]), 1);

    let missing = tmp.path().join("absent.bin").display().to_string();
    assert_eq!(
        exit_code(&["--set", &out, "--set", &format!("store_path={missing}"), "train"]),
        2
    );

    assert_eq!(exit_code(&["frobnicate"]), 1);
    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["--version"]), 0);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out").display().to_string();
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, "# test config\nseed = 99\nrounds = 3\n").unwrap();
    let output = bin()
        .args([
            "--config",
            &conf.display().to_string(),
            "--set",
            "seed=5",
            "--set",
            &format!("output_dir={out}"),
            "gradcheck",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let config_line = stderr.lines().find(|l| l.contains("event=config")).unwrap();
    assert!(config_line.contains("seed=5"));
    assert!(config_line.contains("rounds=3"));
}
