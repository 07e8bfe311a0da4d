use std::path::Path;
use std::process::{Command, Output};

fn kimura(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kimura"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("kimura-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn counts_six_leaf_flows() {
    let o = kimura(&["flows", "--leaves", "6", "--count-only"], Path::new("."));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "1024");
}

#[test]
fn corpus_passes() {
    let o = kimura(&["verify-moves"], Path::new("."));
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn self_pair_gives_empty_trace() {
    let d = tmp("self");
    std::fs::write(
        d.join("selfpair.json"),
        r#"{"t0":["aa00","0bb0","c00c"],"t1":["c00c","aa00","0bb0"]}"#,
    )
    .unwrap();
    let o = kimura(
        &["reduce", "--input", "selfpair.json", "--trace", "t.jsonl"],
        &d,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(d.join("t.jsonl")).unwrap(), "");
}

#[test]
fn traces_verify_independently() {
    let d = tmp("verify");
    std::fs::write(
        d.join("pair.json"),
        r#"{"t0":["aa00","0bb0","c00c"],"t1":["0000","cab0","ab0c"]}"#,
    )
    .unwrap();
    let o = kimura(
        &[
            "reduce",
            "--input",
            "pair.json",
            "--trace",
            "t.jsonl",
            "--out",
            "r.json",
        ],
        &d,
    );
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["subcommand"], "reduce");
    assert_eq!(report["config"]["max_degree"], 4);
    assert_eq!(report["result"]["reduced"], true);
    let ok = kimura(
        &[
            "reduce",
            "--input",
            "pair.json",
            "--verify-trace",
            "t.jsonl",
        ],
        &d,
    );
    assert_eq!(ok.status.code(), Some(0));
    let tight = kimura(
        &[
            "reduce",
            "--input",
            "pair.json",
            "--verify-trace",
            "t.jsonl",
            "--max-degree",
            "2",
        ],
        &d,
    );
    assert_eq!(tight.status.code(), Some(1));
}

#[test]
fn exhausted_budget_exits_two() {
    // A disconnected fiber under quadratic moves.
    let d = tmp("budget");
    std::fs::write(
        d.join("pair.json"),
        r#"{"t0":["000","abc","bca"],"t1":["0cc","a0a","bb0"]}"#,
    )
    .unwrap();
    let o = kimura(&["reduce", "--input", "pair.json", "--max-degree", "2"], &d);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let o = kimura(&["reduce", "--input", "pair.json"], &d);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn invalid_input_exits_one() {
    let d = tmp("invalid");
    std::fs::write(d.join("pair.json"), r#"{"t0":["aa00"],"t1":["0000"]}"#).unwrap();
    assert_eq!(
        kimura(&["reduce", "--input", "pair.json"], &d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        kimura(&["reduce", "--input", "missing.json"], &d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        kimura(&["flows", "--leaves", "4", "--face", "7:q"], &d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(kimura(&["census"], &d).status.code(), Some(1));
}

#[test]
fn fuzz_reports_are_reproducible() {
    let d = tmp("fuzz");
    let run = |out: &str| {
        let o = kimura(&["fuzz", "--count", "50", "--seed", "9", "--out", out], &d);
        assert_eq!(o.status.code(), Some(0));
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(out)).unwrap()).unwrap();
        v["result"]["elapsed_s"] = serde_json::Value::Null;
        v["config"]["outputs"] = serde_json::Value::Null;
        v
    };
    let a = run("a.json");
    assert_eq!(a["config"]["seed"], 9);
    assert_eq!(a["result"]["validated"], 50);
    assert_eq!(a, run("b.json"));
}

#[test]
fn series_expands_bundled_numerator() {
    let o = kimura(
        &["series", "--builtin", "P", "--expand", "1"],
        Path::new("."),
    );
    assert_eq!(stdout(&o), "1 1024");
    let d = tmp("series");
    std::fs::write(d.join("n.json"), "[1]").unwrap();
    let o = kimura(
        &[
            "series",
            "--numerator-file",
            "n.json",
            "--denom-exp",
            "2",
            "--expand",
            "3",
        ],
        &d,
    );
    assert_eq!(stdout(&o), "1 2 3 4");
}

#[test]
fn cache_spills_to_the_configured_directory() {
    let d = tmp("cache");
    std::fs::write(
        d.join("pair.json"),
        r#"{"t0":["000","abc","bca"],"t1":["0cc","a0a","bb0"]}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kimura"))
        .args([
            "reduce",
            "--input",
            "pair.json",
            "--rules",
            "direct",
            "--max-degree",
            "2",
        ])
        .env("KIMURA_CACHE_DIR", d.join("cache"))
        .current_dir(&d)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(d.join("cache").join("fibers.jsonl").exists());
}
