use std::path::Path;
use std::process::Command;

use retformer::cli::{run, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};
use retformer::format::{header_len, load, ModelFile};
use retformer::model::ModelConfig;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn call(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("retformer").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn init(dir: &Path, name: &str, config: &str, seed: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let r = call(&["init", "--config", config, "--seed", seed, "--out", p(&path)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    path
}

#[test]
fn init_writes_full_precision_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = init(dir.path(), "m.retf", "paper-baseline", "0");
    let size = std::fs::metadata(&path).unwrap().len() as usize;
    let file = load(&path).unwrap();
    assert_eq!(file.version(), 1);
    assert_eq!(size - header_len(&file).unwrap(), 140_288 * 8);
}

#[test]
fn init_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(init(dir.path(), "a", "tiny", "3")).unwrap();
    let b = std::fs::read(init(dir.path(), "b", "tiny", "3")).unwrap();
    let c = std::fs::read(init(dir.path(), "c", "tiny", "4")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn config_file_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, serde_json::to_string(&ModelConfig::paper_reduced()).unwrap()).unwrap();
    let r = call(&["count", "--config", p(&good)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("parameters 67072"), "{}", r.out);
    assert!(r.out.contains("param_bytes 536576"));

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"vocab_size":10,"max_seq_len":4,"d_model":8,"n_heads":2,"d_ff":8,"n_layers":1,"dropout":0.1}"#,
    )
    .unwrap();
    let r = call(&["count", "--config", p(&bad)]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("dropout"), "{}", r.err);

    let indivisible = dir.path().join("h.json");
    std::fs::write(
        &indivisible,
        r#"{"vocab_size":10,"max_seq_len":4,"d_model":10,"n_heads":3,"d_ff":8,"n_layers":1}"#,
    )
    .unwrap();
    assert_eq!(call(&["count", "--config", p(&indivisible)]).code, EXIT_USAGE);

    let missing = dir.path().join("nope.json");
    assert_eq!(call(&["count", "--config", p(&missing)]).code, EXIT_USAGE);
    assert_eq!(call(&["compress", "quantize", "--model", p(&missing), "--out", p(&good)]).code, EXIT_USAGE);
    assert_eq!(call(&["frobnicate"]).code, EXIT_USAGE);
}

#[test]
fn corrupt_model_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = init(dir.path(), "m", "tiny", "0");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    let out = dir.path().join("o");
    let r = call(&["compress", "quantize", "--model", p(&path), "--out", p(&out)]);
    assert_eq!(r.code, EXIT_USAGE);
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert_eq!(call(&["compress", "quantize", "--model", p(&path), "--out", p(&out)]).code, EXIT_USAGE);
}

#[test]
fn compare_prints_the_table() {
    let r = call(&[
        "compare", "--baseline", "paper-baseline", "--variant", "paper-reduced", "--reps", "3", "--warmup", "1",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("Memory Usage (Bytes)"));
    assert!(r.out.contains("Execution Time (Seconds)"));
    assert!(r.out.contains("1,122,304") && r.out.contains("536,576"), "{}", r.out);
    assert!(r.out.contains("140,288") && r.out.contains("67,072"));
}

#[test]
fn compare_with_itself_reports_no_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("cmp.json");
    let r = call(&[
        "compare", "--baseline", "tiny", "--variant", "tiny", "--reps", "3", "--warmup", "0", "--seq", "4", "--json",
        p(&json),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["reductions_pct"]["param_count"], 0.0);
    assert_eq!(doc["reductions_pct"]["param_bytes"], 0.0);
    assert_eq!(doc["ratios"]["param_count"], 1.0);
}

#[test]
fn timing_arguments_are_validated() {
    assert_eq!(call(&["bench", "--config", "tiny", "--reps", "0"]).code, EXIT_USAGE);
    assert_eq!(call(&["bench", "--config", "tiny", "--seq", "5"]).code, EXIT_USAGE);
    let r = call(&["bench", "--config", "tiny", "--reps", "2", "--warmup", "0", "--seq", "4"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let doc: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(doc["param_count"], 188);
}

#[test]
fn training_lowers_the_loss() {
    let r = call(&["train", "--config", "small"]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert_eq!(r.out.lines().filter(|l| l.starts_with("iter ")).count(), 10);
    assert!(r.out.contains("final loss"));
}

#[test]
fn training_without_progress_fails() {
    let r = call(&["train", "--config", "tiny", "--lr", "0", "--iters", "2"]);
    assert_eq!(r.code, EXIT_CHECK_FAILED);
    let r = call(&["train", "--config", "tiny", "--iters", "1"]);
    assert_eq!(r.out.lines().filter(|l| l.starts_with("iter ")).count(), 1);
    assert_eq!(call(&["train", "--config", "tiny", "--iters", "0"]).code, EXIT_USAGE);
}

#[test]
fn quantize_writes_one_byte_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let src = init(dir.path(), "m", "paper-baseline", "0");
    let dst = dir.path().join("q");
    let r = call(&["compress", "quantize", "--model", p(&src), "--out", p(&dst)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let file = load(&dst).unwrap();
    assert_eq!(file.version(), 2);
    let size = std::fs::metadata(&dst).unwrap().len() as usize;
    let tensors = retformer::model::tensor_specs(&ModelConfig::paper_baseline()).len();
    assert_eq!(size - header_len(&file).unwrap(), 140_288 + 8 * tensors);

    let again = dir.path().join("qq");
    let r = call(&["compress", "prune-heads", "--model", p(&dst), "--out", p(&again), "--layer", "0", "--keep", "0"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(!again.exists());
}

#[test]
fn zero_threshold_leaves_the_model_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let src = init(dir.path(), "m", "tiny", "1");
    let dst = dir.path().join("p");
    let r = call(&["compress", "prune-magnitude", "--model", p(&src), "--out", p(&dst), "--threshold", "0"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());
    assert_eq!(
        call(&["compress", "prune-magnitude", "--model", p(&src), "--out", p(&dst), "--threshold", "-1"]).code,
        EXIT_USAGE
    );
}

#[test]
fn prune_heads_drops_exact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let src = init(dir.path(), "m", "paper-baseline", "0");
    let dst = dir.path().join("h");
    let r = call(&["compress", "prune-heads", "--model", p(&src), "--out", p(&dst), "--layer", "0", "--keep", "0,1,2,3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("140288 -> 138240"), "{}", r.out);
    match load(&dst).unwrap() {
        ModelFile::Float { config, params } => {
            assert_eq!(retformer::model::param_count(&config), 138_240);
            assert_eq!(retformer::model::param_count_enumerated(&params), 138_240);
        }
        other => panic!("unexpected file {other:?}"),
    }
    let r = call(&["compress", "prune-heads", "--model", p(&src), "--out", p(&dst), "--layer", "0", "--keep-top", "2"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("head scores"));
    let r = call(&["compress", "prune-heads", "--model", p(&src), "--out", p(&dst), "--layer", "0", "--keep", "8"]);
    assert_eq!(r.code, EXIT_USAGE);
    let r = call(&["compress", "prune-heads", "--model", p(&src), "--out", p(&dst), "--layer", "1", "--keep", "0"]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn prune_layers_removes_a_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("two.json");
    std::fs::write(&cfg, serde_json::to_string(&ModelConfig::new(3990, 10, 32, 8, 128, 2)).unwrap()).unwrap();
    let src = init(dir.path(), "m", p(&cfg), "0");
    let dst = dir.path().join("l");
    let r = call(&["compress", "prune-layers", "--model", p(&src), "--out", p(&dst), "--keep", "1"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(retformer::model::param_count(load(&dst).unwrap().config()), 140_288);
    assert_eq!(
        call(&["compress", "prune-layers", "--model", p(&src), "--out", p(&dst), "--keep", "1,0"]).code,
        EXIT_USAGE
    );
}

#[test]
fn search_finds_the_baseline_family() {
    let r = call(&["search", "--target-base", "140288", "--target-variant", "67072"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let found = r.out.lines().any(|l| {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        v["base"]["vocab_size"] == 3990 && v["base"]["d_model"] == 32 && v["base"]["d_ff"] == 128
    });
    assert!(found, "{}", r.out);
    assert_eq!(call(&["search", "--target-base", "1", "--target-variant", "1"]).code, EXIT_CHECK_FAILED);
    assert_eq!(call(&["search", "--target-base", "abc", "--target-variant", "1"]).code, EXIT_USAGE);
    assert_eq!(call(&["search", "--target-base", "0", "--target-variant", "1"]).code, EXIT_USAGE);
}

#[test]
fn gradcheck_exit_codes() {
    let r = call(&["gradcheck", "--config", "tiny"]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert!(r.out.contains("max relative error"));
    assert_eq!(call(&["gradcheck", "--config", "tiny", "--eps", "0"]).code, EXIT_USAGE);
    assert_eq!(call(&["gradcheck", "--config", "paper-baseline"]).code, EXIT_USAGE);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_retformer");
    let ok = Command::new(bin).args(["count", "--config", "paper-baseline"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("parameters 140288"));
    let bad = Command::new(bin).args(["count", "--config", "/nonexistent/x.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(!bad.stderr.is_empty());
    let fail = Command::new(bin)
        .args(["train", "--config", "tiny", "--lr", "0", "--iters", "1"])
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(EXIT_CHECK_FAILED));
}
