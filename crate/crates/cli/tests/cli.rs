//! Drives the `localshare` binary end to end on a generated fixture.

use std::path::Path;
use std::process::{Command, Output};

fn localshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localshare")).args(args).output().expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
[input]
market = "market.csv"
categories = "categories.csv"
segment = "segment.csv"

[figures]
highlight = ["MSP-ANC"]

[[methods]]
method = "hc-dtw"
k = 4
normalize = true

[[methods]]
method = "som"
rows = 2
cols = 3
normalize = false
"#;

/// Writes the fixture and a small config into `dir`, returning the config
/// path.
fn setup(dir: &Path) -> String {
    ok(localshare(&["fixture", "--out", dir.to_str().unwrap()]));
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    cfg.to_string_lossy().into_owned()
}

#[test]
fn fixture_then_run_writes_manifest_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    let stdout = ok(localshare(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]));
    assert!(stdout.starts_with("Method,Clusters,Norm.,Silhouette,D-B,Dunn,C-H\n"), "{stdout}");
    assert!(stdout.contains("HC with DTW,4,Yes,"), "{stdout}");
    assert!(stdout.contains("SOM,2x3=6"), "{stdout}");
    for f in ["manifest.json", "summary.json", "metrics.csv", "series/segments.csv", "series/clustering.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn staged_commands_match_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let staged = tmp.path().join("staged");
    let whole = tmp.path().join("whole");
    let s = staged.to_str().unwrap();

    let ingest = ok(localshare(&["ingest", "--config", &cfg, "--out", s]));
    assert!(ingest.contains("itinerary records"), "{ingest}");
    assert!(staged.join("ledger.csv").is_file());
    ok(localshare(&["series", "--config", &cfg, "--out", s]));
    assert!(staged.join("series/all-quarterly.csv").is_file());
    ok(localshare(&["select", "--config", &cfg, "--out", s]));
    assert!(staged.join("selected.txt").is_file());
    ok(localshare(&["cluster", "--config", &cfg, "--out", s]));
    let evaluated = ok(localshare(&["evaluate", "--config", &cfg, "--out", s]));
    let reported = ok(localshare(&["report", "--config", &cfg, "--out", s]));
    assert_eq!(evaluated, reported);

    ok(localshare(&["run", "--config", &cfg, "--out", whole.to_str().unwrap()]));
    // membership documents differ by design: the single run embeds scores
    for f in ["metrics.csv", "size-distribution.svg", "methods/02-som-2x3-raw/cluster-means.svg"] {
        let a = std::fs::read(staged.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        let b = std::fs::read(whole.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        assert!(a == b, "{f} differs between staged and single run");
    }
}

#[test]
fn seed_override_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(localshare(&["run", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]));
        std::fs::read(out.join("manifest.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn errors_name_the_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = localshare(&["run"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--config is required"));

    let cfg = setup(tmp.path());
    std::fs::remove_file(tmp.path().join("market.csv")).unwrap();
    let out = localshare(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert!(stderr.contains("market.csv"), "{stderr}");
}
