//! End-to-end runs of the `causal-probe` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use causal_probe::grid::load_grid;
use causal_probe::intervention::{adjusted_score, InterventionConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-probe"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CATALOG: &str = "\
prompt capital p1 default The capital of [S] is [A].
prompt capital p2 - [S] has its capital in [A].
name us n0 default United States
name us n1 - USA
name fr n0 default France
";

fn grid_text(skip_last: bool) -> String {
    let mut rows = vec![causal_probe::grid::GRID_HEADER.to_string()];
    for m in ["A", "B"] {
        for p in ["p1", "p2"] {
            for (inst, names, gold) in [("us", &["n0", "n1"][..], "Washington"), ("fr", &["n0"][..], "Paris")] {
                for v in names {
                    let pred = if m == "A" || p == "p1" { gold } else { "London" };
                    rows.push(format!("{m}\tcapital\t{inst}\t{p}\t{v}\t{pred}\t{gold}"));
                }
            }
        }
    }
    if skip_last {
        rows.pop();
    }
    rows.join("\n") + "\n"
}

fn small_inputs(dir: &Path, skip_last: bool) -> (PathBuf, PathBuf) {
    let grid = dir.join("grid.tsv");
    let catalog = dir.join("catalog.txt");
    std::fs::write(&grid, grid_text(skip_last)).unwrap();
    std::fs::write(&catalog, CATALOG).unwrap();
    (grid, catalog)
}

#[test]
fn backdoor_paths_lists_open_paths_first() {
    let out = run(&[
        "graph",
        "backdoor-paths",
        "--treatment",
        "M",
        "--outcome",
        "E",
        s(&fixture("probing_scm.graph")),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let open: Vec<&str> = text.lines().filter(|l| l.starts_with("open")).collect();
    assert_eq!(open.len(), 3);
    for path in ["M←C←L→P→I→E", "M←C←L→X→E", "M←C←D_a→D_b→T→X→E"] {
        assert!(open.iter().any(|l| l.ends_with(path)), "{path} missing from\n{text}");
    }
    let first_blocked = text.lines().position(|l| l.starts_with("blocked")).unwrap();
    assert!(text.lines().take(first_blocked).all(|l| l.starts_with("open")));
}

#[test]
fn criterion_verdicts() {
    let graph = fixture("probing_scm.graph");
    let base = ["graph", "criterion", "--treatment", "M", "--outcome", "E"];
    let out = run(&[&base[..], &["--adjust", "P,X", s(&graph)]].concat());
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "VALID");
    let out = run(&[&base[..], &["--adjust", "P", s(&graph)]].concat());
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().next(), Some("INVALID: open path M<-C<-L->X->E"));
}

#[test]
fn adjustment_sets_output() {
    let graph = fixture("probing_scm.graph");
    let base = ["graph", "adjustment-sets", "--treatment", "M", "--outcome", "E"];
    let out = run(&[&base[..], &[s(&graph)]].concat());
    assert_eq!(stdout(&out), "{P, X}\n");
    let out = run(&[&base[..], &["--adjustable", "C", s(&graph)]].concat());
    assert_eq!(stdout(&out), "{C}\n{P, X}\n");
}

#[test]
fn cyclic_graph_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cycle.graph");
    std::fs::write(&file, "nodes:\nA a true true\nB b true true\nedges:\nA -> B\nB -> A\n").unwrap();
    let out = run(&["graph", "check", s(&file)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn unknown_node_is_a_query_error() {
    let out = run(&[
        "graph",
        "criterion",
        "--treatment",
        "M",
        "--outcome",
        "Q",
        s(&fixture("probing_scm.graph")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_graph_file_is_an_io_error() {
    let out = run(&["graph", "check", "/nonexistent/scm.graph"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn missing_record_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let (grid, catalog) = small_inputs(dir.path(), true);
    let out = run(&["eval", "metrics", s(&grid), s(&catalog)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("(B, capital, fr, p2, n0)"), "{}", stderr(&out));
}

#[test]
fn metrics_reports_have_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (grid, catalog) = small_inputs(dir.path(), false);
    let out = run(&["eval", "metrics", s(&grid), s(&catalog), "--report", "prompt-spread"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("model_id,relation_id,mean,min,max,std"));
    // B gets both right with p1 and nothing with p2
    assert!(text.contains("B,capital,0.5,0,1,0.5"), "{text}");

    let out_dir = dir.path().join("reports");
    let out = run(&["eval", "metrics", s(&grid), s(&catalog), "--out", s(&out_dir)]);
    assert!(out.status.success());
    for f in [
        "prompt_spread.csv",
        "verbalization_stability.csv",
        "rank_instability.csv",
        "prompt_plot.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn exhaustive_intervention_equals_cell_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (grid, catalog) = small_inputs(dir.path(), false);
    let out = run(&[
        "eval",
        "intervene",
        s(&grid),
        s(&catalog),
        "--modes",
        "intervention",
        "--kp",
        "ALL",
        "--kx",
        "ALL",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let loaded = load_grid(&grid, &catalog).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("mode,model_id,relation_id,score"));
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let score: f64 = f[3].parse().unwrap();
        assert_eq!(
            score,
            adjusted_score(&loaded, f[1], f[2], &InterventionConfig::default()).unwrap()
        );
    }
    // by hand: A is always right, B only with p1
    assert!(text.contains("intervention,A,capital,1\n"));
    assert!(text.contains("intervention,B,capital,0.5\n"));
}

#[test]
fn experiment_errors_and_single_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let (grid, catalog) = small_inputs(dir.path(), false);
    let out = run(&["experiment", s(&grid), s(&catalog), "--subset-size", "999"]);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&[
        "experiment",
        s(&grid),
        s(&catalog),
        "--runtimes",
        "1",
        "--subset-size",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let body: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with("runtimes")).collect();
    assert!(!body.is_empty());
    for line in body {
        let values: Vec<&str> = line.split_whitespace().rev().take(3).collect();
        assert!(values.iter().all(|v| *v == "100.0"), "{line}");
    }
}

#[test]
fn write_failure_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&[
        "synth",
        "--scenario",
        "paper-like",
        "--models",
        "2",
        "--relations",
        "1",
        "--out",
        s(&blocker.join("sub")),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn jobs_zero_is_rejected() {
    let out = run(&["--jobs", "0", "graph", "check", s(&fixture("probing_scm.graph"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn minimal_scenario_has_a_two_model_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("synth");
    let out = run(&[
        "synth",
        "--scenario",
        "paper-like",
        "--models",
        "2",
        "--relations",
        "1",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let truth = std::fs::read_to_string(out_dir.join("truth.txt")).unwrap();
    let overall = truth.lines().find(|l| l.starts_with("overall ")).unwrap();
    let models: Vec<&str> = overall.split_whitespace().skip(1).collect();
    assert_eq!(models.len(), 2);
    assert!(truth.lines().any(|l| l.starts_with("relation R1 ")));
    load_grid(out_dir.join("grid.tsv"), out_dir.join("catalog.txt")).unwrap();
}

#[test]
fn scenario_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("synth");
    let out = run(&["synth", "--scenario", "paper-like", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let shipped = std::fs::read_to_string(fixture("scenario_paper_like.scenario")).unwrap();
    assert_eq!(std::fs::read_to_string(out_dir.join("scenario.txt")).unwrap(), shipped);

    let (grid, catalog) = (out_dir.join("grid.tsv"), out_dir.join("catalog.txt"));
    let out = run(&[
        "eval",
        "metrics",
        s(&grid),
        s(&catalog),
        "--format",
        "text",
        "--report",
        "prompt-spread",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    // default flags: 1000 runtimes of 20 relations
    let out = run(&["experiment", s(&grid), s(&catalog)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().skip(1).collect();
    assert_eq!(header, ["original", "random", "intervention"]);
    let overall: Vec<f64> = text
        .lines()
        .find(|l| l.starts_with("Overall Rank"))
        .unwrap()
        .split_whitespace()
        .skip(2)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(overall[2] > overall[1], "{text}");
}
