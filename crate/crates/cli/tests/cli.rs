use std::path::Path;
use std::process::{Command, Output};

fn rigidseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigidseg"))
        .current_dir(dir)
        .env_remove("RIGIDSEG_RUN_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rigidseg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, bodies: &str, seed: &str, file: &str) {
    ok(dir, &["synth", "--bodies", bodies, "--points", "150", "--frames", "6", "--seed", seed, "--out", file]);
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid json")
}

#[test]
fn subset_recovers_three_motions() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3", "1", "s3.tsv");
    let out = ok(
        dir.path(),
        &["segment", "--input", "s3.tsv", "--models", "a,h,f", "--fusion", "subset", "--num-motions", "3", "--per-pair", "200"],
    );
    let v = json(&out.stdout);
    assert_eq!(v["num_motions"], 3);
    assert_eq!(v["classification_error"], 0.0);
}

#[test]
fn coreg_selects_two_motions() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "2", "s2.tsv");
    let out = ok(
        dir.path(),
        &[
            "segment", "--input", "s2.tsv", "--fusion", "coreg", "--num-motions", "auto", "--delta", "0.1", "--m-max", "5",
            "--per-pair", "200",
        ],
    );
    let v = json(&out.stdout);
    assert_eq!(v["selection"]["best_m"], 2);
    assert_eq!(v["classification_error"], 0.0);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "3", "s.json");
    let args = ["segment", "--input", "s.json", "--seed", "7", "--m-max", "4", "--per-pair", "100"];
    let a = ok(dir.path(), &[&args[..], &["--run-dir", "ra"]].concat());
    let b = ok(dir.path(), &[&args[..], &["--run-dir", "rb"]].concat());
    assert_eq!(a.stdout, b.stdout);
    for file in ["run.json", "result.json", "selection.csv", "kernel_a.bin", "kernel_h.bin", "kernel_f.bin", "residuals_f.bin"] {
        let x = std::fs::read(dir.path().join("ra").join(file)).unwrap();
        let y = std::fs::read(dir.path().join("rb").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn staged_commands_match_segment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "4", "s.tsv");
    ok(d, &["hypothesize", "--input", "s.tsv", "--per-pair", "100", "--out-dir", "k"]);
    ok(
        d,
        &["kernel", "--input", "s.tsv", "--residuals", "k/residuals_a.bin", "k/residuals_h.bin", "k/residuals_f.bin", "--out-dir", "k"],
    );
    let kernels = ["k/kernel_a.bin", "k/kernel_h.bin", "k/kernel_f.bin"];
    let staged = ok(d, &[&["segment", "--input", "s.tsv", "--m-max", "4", "--kernels"][..], &kernels[..]].concat());
    let direct = ok(d, &["segment", "--input", "s.tsv", "--m-max", "4", "--per-pair", "100", "--run-dir", "r"]);
    let (s, t) = (json(&staged.stdout), json(&direct.stdout));
    assert_eq!(s["labels"], t["labels"]);
    assert_eq!(s["selection"], t["selection"]);

    let sel = ok(d, &[&["select", "--m-max", "4", "--csv", "sel.csv", "--kernels"][..], &kernels[..]].concat());
    assert_eq!(json(&sel.stdout)["best_m"], t["selection"]["best_m"]);
    assert!(std::fs::read_to_string(d.join("sel.csv")).unwrap().starts_with("m,"));
}

#[test]
fn pipeline_and_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("seqs")).unwrap();
    synth(d, "2", "5", "seqs/a.tsv");
    synth(d, "3", "1", "seqs/b.json");
    ok(d, &["pipeline", "--input", "seqs", "--out-dir", "out", "--m-max", "5", "--per-pair", "200"]);
    let report = json(&std::fs::read(d.join("out/report.json")).unwrap());
    assert_eq!(report["sequences"].as_array().unwrap().len(), 2);
    assert_eq!(report["mean_error"], 0.0);
    assert_eq!(report["correct_rate"], 1.0);

    let out = ok(
        d,
        &["eval", "--truth", "seqs/a.tsv", "seqs/b.json", "--pred", "out/a/result.json", "out/b/result.json", "--csv", "e.csv"],
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("mean error   0.000%"), "{table}");
    assert!(table.contains("prevalence baseline"));
    assert_eq!(std::fs::read_to_string(d.join("e.csv")).unwrap().lines().count(), 3);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(rigidseg(d, &["segment", "--input", "missing.tsv"]).status.code(), Some(2));
    std::fs::write(d.join("junk.tsv"), "not a track file\n").unwrap();
    assert_eq!(rigidseg(d, &["segment", "--input", "junk.tsv"]).status.code(), Some(2));
    synth(d, "2", "1", "s.tsv");
    assert_eq!(rigidseg(d, &["segment", "--input", "s.tsv", "--h-frac", "0"]).status.code(), Some(2));
    assert_eq!(rigidseg(d, &["segment", "--input", "s.tsv", "--models", "a,h", "--fusion", "subset"]).status.code(), Some(2));
}
