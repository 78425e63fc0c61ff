use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use uabs_core::decode::{exhaustive_decode, step_scores, DecodeConfig, UncertaintyKind};
use uabs_core::model::{load_ensemble, load_world, InputId};
use uabs_core::prob::TokenId;

fn uabs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uabs"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = uabs(dir, args);
    assert!(
        out.status.success(),
        "uabs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary json")
}

/// Runs a failing command and returns the reported error category.
fn fails(dir: &Path, args: &[&str]) -> String {
    let out = uabs(dir, args);
    assert!(!out.status.success(), "uabs {args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(&out.stderr).expect("error json on stderr");
    assert!(err["message"].is_string());
    err["category"].as_str().unwrap().to_string()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TINY: &[&str] = &[
    "--seed", "4", "--vocab-size", "8", "--content-tokens", "4", "--inputs", "6", "--max-len", "4",
];

/// World `w/` and ensemble `e/` inside a fresh directory.
fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["world", "--out", "w", "--leak", "0.6"];
    args.extend_from_slice(TINY);
    ok(tmp.path(), &args);
    ok(tmp.path(), &["ensemble", "--world", "w/world.json", "--out", "e", "--seed", "9"]);
    tmp
}

#[test]
fn world_is_deterministic_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["world", "--out", "a", "--seed", "3"]);
    ok(tmp.path(), &["world", "--out", "b", "--seed", "3"]);
    let a = fs::read(tmp.path().join("a/world.json")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/world.json")).unwrap());
    let ma = read_json(tmp.path().join("a/manifest.json"));
    assert_eq!(ma["outputs"], read_json(tmp.path().join("b/manifest.json"))["outputs"]);
    assert_eq!(ma["seeds"]["world"], 3);
    let w = load_world(tmp.path().join("a/world.json")).unwrap();
    assert_eq!(w.seed(), 3);
}

#[test]
fn zero_grounded_fraction_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(fails(tmp.path(), &["world", "--out", "w", "--grounded-fraction", "0"]), "invalid_config");
    assert!(!tmp.path().join("w/world.json").exists());
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("w.toml"), "seed = 5\n[world]\ninputs = 3\nvocab_size = 9\ncontent_tokens = 5\n").unwrap();
    ok(tmp.path(), &["world", "--config", "w.toml", "--out", "w", "--inputs", "4"]);
    let w = load_world(tmp.path().join("w/world.json")).unwrap();
    assert_eq!((w.seed(), w.num_inputs(), w.vocab().len()), (5, 4, 9));
    let m = read_json(tmp.path().join("w/manifest.json"));
    assert_eq!(m["config"]["world"]["inputs"], 4);
    fs::write(tmp.path().join("bad.toml"), "sed = 5\n").unwrap();
    assert_eq!(fails(tmp.path(), &["world", "--config", "bad.toml", "--out", "x"]), "format");
}

#[test]
fn occupied_output_directories_are_never_overwritten() {
    let tmp = setup();
    let before = fs::read(tmp.path().join("w/world.json")).unwrap();
    let summary = ok(tmp.path(), &["world", "--out", "w", "--seed", "11"]);
    let fresh = summary["out"].as_str().unwrap();
    assert_ne!(fresh, "w");
    assert!(fresh.starts_with("w-"));
    assert_eq!(fs::read(tmp.path().join("w/world.json")).unwrap(), before);
    ok(tmp.path(), &["world", "--out", "w", "--seed", "11", "--overwrite"]);
    assert_ne!(fs::read(tmp.path().join("w/world.json")).unwrap(), before);
}

#[test]
fn zero_lambda_ignores_kind() {
    let tmp = setup();
    for kind in ["total", "aleatoric", "epistemic"] {
        let out = format!("d-{kind}");
        ok(
            tmp.path(),
            &["decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", &out, "--kind", kind, "--lambda", "0"],
        );
    }
    let total = fs::read(tmp.path().join("d-total/decode.json")).unwrap();
    let decode: Value = serde_json::from_slice(&total).unwrap();
    assert_eq!(decode["records"].as_array().unwrap().len(), 6);
    for kind in ["aleatoric", "epistemic"] {
        let other: Value = read_json(tmp.path().join(format!("d-{kind}/decode.json")));
        assert_eq!(other["records"], decode["records"]);
    }
}

#[test]
fn width_one_is_greedy() {
    let tmp = setup();
    ok(
        tmp.path(),
        &["decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", "d", "-b", "1", "--inputs", "0,2,5"],
    );
    let e = load_ensemble(tmp.path().join("e/ensemble.json")).unwrap();
    let records = read_json(tmp.path().join("d/decode.json"))["records"].clone();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 3);
    for (r, input) in records.iter().zip([0u32, 2, 5]) {
        assert_eq!(r["input"], input);
        let mut tokens: Vec<TokenId> = Vec::new();
        while tokens.len() < 4 && tokens.last() != Some(&TokenId::EOS) {
            let (agg, _) = step_scores(&e, InputId(input), &tokens).unwrap();
            let mut best = 0;
            for (t, &p) in agg.probs().iter().enumerate() {
                if p > agg.probs()[best] {
                    best = t;
                }
            }
            tokens.push(TokenId(best as u32));
        }
        let got: Vec<u32> = serde_json::from_value(r["tokens"].clone()).unwrap();
        assert_eq!(got, tokens.iter().map(|t| t.0).collect::<Vec<_>>());
    }
}

#[test]
fn exhaustive_flag_matches_oracle() {
    let tmp = setup();
    ok(
        tmp.path(),
        &[
            "decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", "d", "--exhaustive", "--lambda", "2",
            "--kind", "epistemic", "--trace",
        ],
    );
    let e = load_ensemble(tmp.path().join("e/ensemble.json")).unwrap();
    let file = read_json(tmp.path().join("d/decode.json"));
    assert_eq!(file["settings"]["decoder"]["type"], "exhaustive");
    let cfg = DecodeConfig { lambda: 2.0, kind: UncertaintyKind::Epistemic, max_len: 4, ..Default::default() };
    for r in file["records"].as_array().unwrap() {
        let input = InputId(r["input"].as_u64().unwrap() as u32);
        let oracle = exhaustive_decode(&e, input, &cfg).unwrap();
        let tokens: Vec<TokenId> = serde_json::from_value(r["tokens"].clone()).unwrap();
        assert_eq!(tokens, oracle.tokens);
        assert_eq!(r["cum_logp"].as_f64().unwrap(), oracle.cum_logp);
        assert_eq!(r["epistemic"].as_f64().unwrap(), oracle.cum_unc.epistemic);
        assert_eq!(r["steps"].as_array().unwrap().len(), tokens.len());
    }
}

#[test]
fn mismatched_world_is_rejected() {
    let tmp = setup();
    ok(tmp.path(), &["world", "--out", "w2", "--seed", "4", "--inputs", "7", "--vocab-size", "8", "--content-tokens", "4", "--max-len", "4"]);
    let args = ["decode", "--world", "w2/world.json", "--ensemble", "e/ensemble.json", "--out", "d"];
    assert_eq!(fails(tmp.path(), &args), "world_mismatch");

    ok(tmp.path(), &["decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", "d", "--trace"]);
    let mut same_shape = vec!["world", "--out", "w3", "--leak", "0.1"];
    same_shape.extend_from_slice(TINY);
    ok(tmp.path(), &same_shape);
    let category = fails(tmp.path(), &["analyze", "--world", "w3/world.json", "-d", "d/decode.json", "--out", "a"]);
    assert_eq!(category, "world_mismatch");
}

#[test]
fn unknown_input_is_reported() {
    let tmp = setup();
    let args = ["decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", "d", "--inputs", "6"];
    assert_eq!(fails(tmp.path(), &args), "unknown_input");
}

#[test]
fn sweep_grids() {
    let tmp = setup();
    let base = ["sweep", "--world", "w/world.json", "--ensemble", "e/ensemble.json"];
    let run = |out: &str, extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(&["--out", out]);
        args.extend_from_slice(extra);
        args.iter().map(|s| s.to_string()).collect::<Vec<_>>()
    };

    assert_eq!(fails(tmp.path(), &refs(&run("s0", &["--grid", ""]))), "invalid_config");

    ok(tmp.path(), &refs(&run("s1", &["--grid", "total:0.5"])));
    let table = fs::read_to_string(tmp.path().join("s1/tradeoff.tsv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("0.5\ttotal\t"));
    assert!(tmp.path().join("s1/points/00-total-0.5.json").exists());

    ok(tmp.path(), &refs(&run("s2", &["--workers", "2"])));
    let table = fs::read_to_string(tmp.path().join("s2/tradeoff.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 21);
    let lambdas = |kind: &str| -> Vec<&str> { rows.iter().filter(|r| r[1] == kind).map(|r| r[0]).collect() };
    assert_eq!(lambdas("total"), ["0.0", "0.1", "0.2", "0.4", "0.8", "1.0", "2.0", "4.0"]);
    assert_eq!(lambdas("aleatoric"), lambdas("total"));
    assert_eq!(lambdas("epistemic"), ["0.0", "10.0", "20.0", "40.0", "80.0"]);

    ok(tmp.path(), &refs(&run("s3", &["--workers", "1"])));
    assert_eq!(table, fs::read_to_string(tmp.path().join("s3/tradeoff.tsv")).unwrap());
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn sha256(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn step(token: u32, total: f64, aleatoric: f64) -> Value {
    json!({
        "token": token,
        "logp": -0.5,
        "uncertainty": { "total": total, "aleatoric": aleatoric, "epistemic": total - aleatoric },
    })
}

#[test]
fn analyze_hand_built_file() {
    let tmp = setup();
    let wpath = tmp.path().join("w/world.json");
    let w = load_world(&wpath).unwrap();
    let grounded = *w.grounded(InputId(0)).unwrap().iter().next().unwrap();
    let hallucinated = *w.hallucination_set_for(InputId(0)).unwrap().iter().next().unwrap();
    let function = w.vocab().function_tokens().next().unwrap();
    let (g, h, f, eos) = (grounded.0, hallucinated.0, function.0, TokenId::EOS.0);
    let record = |tokens: Vec<u32>, steps: Vec<Value>| {
        json!({
            "input": 0, "tokens": tokens, "text": "", "cum_logp": -1.0, "total": 0.0, "aleatoric": 0.0,
            "epistemic": 0.0, "finished": true, "steps": steps,
        })
    };
    let file = json!({
        "schema_version": 1,
        "kind": "decode",
        "world_sha256": sha256(&wpath),
        "ensemble_sha256": "none",
        "settings": { "decoder": { "type": "beam", "width": 1 }, "lambda": 0.0, "kind": "total", "max_len": 4, "strict": false },
        "records": [
            record(vec![f, g, eos], vec![step(f, 0.1, 0.1), step(g, 0.5, 0.25), step(eos, 0.0, 0.0)]),
            record(vec![h, eos], vec![step(h, 2.0, 0.5), step(eos, 0.0, 0.0)]),
        ],
    });
    fs::write(tmp.path().join("hand.json"), serde_json::to_string(&file).unwrap()).unwrap();
    ok(tmp.path(), &["analyze", "--world", "w/world.json", "-d", "hand.json", "--out", "a"]);

    let summary = read_json(tmp.path().join("a/summary.json"));
    assert_eq!(summary["outputs"], 2);
    assert_eq!(summary["hallucination"]["mentions"], 2);
    assert_eq!(summary["hallucination"]["hallucinated"], 1);
    assert_eq!(summary["hallucination"]["rate"], 0.5);
    assert_eq!(summary["stats"]["avg_len"], 1.5);
    assert_eq!(summary["stats"]["generic_rate"], 0.0);

    let bins = fs::read_to_string(tmp.path().join("a/bins.tsv")).unwrap();
    let total: Vec<&str> = bins.lines().filter(|l| l.starts_with("total\t")).collect();
    assert_eq!(total.len(), 6);
    assert_eq!(total[0], "total\t<=0.8\tNA\t0.8\t1\t0\t0");
    assert_eq!(total[1], "total\t(0.8,1.6]\t0.8\t1.6\t0\t0\tNA");
    assert_eq!(total[2], "total\t(1.6,2.4]\t1.6\t2.4\t1\t1\t1");
    let epistemic: Vec<&str> = bins.lines().filter(|l| l.starts_with("epistemic\t")).collect();
    assert_eq!(epistemic[0], "epistemic\t<=0.8\tNA\t0.8\t1\t0\t0");
    assert_eq!(epistemic[1], "epistemic\t(0.8,1.6]\t0.8\t1.6\t1\t1\t1");

    // Two mentions with distinct values correlate perfectly with the flag.
    let corr = fs::read_to_string(tmp.path().join("a/correlations.tsv")).unwrap();
    for kind in ["total", "aleatoric", "epistemic"] {
        let row: Vec<&str> = corr.lines().find(|l| l.starts_with(kind)).unwrap().split('\t').collect();
        assert!((row[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{kind}");
        assert_eq!(row[3], "2");
    }
    let mentions = fs::read_to_string(tmp.path().join("a/mentions.tsv")).unwrap();
    assert_eq!(mentions.lines().count(), 3);
    assert!(mentions.lines().nth(1).unwrap().starts_with(&format!("0\t1\t{g}\t")));
}

#[test]
fn analyze_recomputes_missing_traces() {
    let tmp = setup();
    let args = ["decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--lambda", "1"];
    ok(tmp.path(), &[&args[..], &["--out", "traced", "--trace"]].concat());
    ok(tmp.path(), &[&args[..], &["--out", "bare"]].concat());
    assert_eq!(
        fails(tmp.path(), &["analyze", "--world", "w/world.json", "-d", "bare/decode.json", "--out", "x"]),
        "invalid_config"
    );
    ok(tmp.path(), &["analyze", "--world", "w/world.json", "-d", "traced/decode.json", "--out", "a1"]);
    ok(
        tmp.path(),
        &["analyze", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "-d", "bare/decode.json", "--out", "a2"],
    );
    for f in ["bins.tsv", "correlations.tsv", "mentions.tsv", "summary.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a1").join(f)).unwrap(),
            fs::read(tmp.path().join("a2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn report_embeds_provenance() {
    let tmp = setup();
    ok(tmp.path(), &["sweep", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", "s", "--grid", "epistemic:0,10", "--trace"]);
    ok(tmp.path(), &["analyze", "--world", "w/world.json", "-d", "s/points/00-epistemic-0.json", "--out", "a"]);
    ok(tmp.path(), &["report", "--sweep", "s", "--analysis", "a", "--out", "r"]);
    let report = read_json(tmp.path().join("r/report.json"));
    assert_eq!(report["seeds"]["world"], 4);
    assert_eq!(report["seeds"]["ensemble"], 9);
    assert_eq!(report["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["grid"].as_array().unwrap().len(), 2);
    assert_eq!(report["tradeoff"].as_array().unwrap().len(), 2);
    assert!(report["analysis"]["kinds"].is_array());
    let md = fs::read_to_string(tmp.path().join("r/report.md")).unwrap();
    assert!(md.contains("world = 4") && md.contains("ensemble = 9"));

    fs::write(tmp.path().join("s/tradeoff.tsv"), "tampered\n").unwrap();
    assert_eq!(fails(tmp.path(), &["report", "--sweep", "s", "--out", "r2"]), "input_changed");
}

#[test]
fn replay_detects_changed_inputs() {
    let tmp = setup();
    ok(tmp.path(), &["decode", "--world", "w/world.json", "--ensemble", "e/ensemble.json", "--out", "d"]);
    let again = ok(tmp.path(), &["replay", "d/manifest.json", "--out", "d2"]);
    assert_eq!(again["subcommand"], "decode");
    assert_eq!(
        fs::read(tmp.path().join("d/decode.json")).unwrap(),
        fs::read(tmp.path().join("d2/decode.json")).unwrap()
    );
    let mut args = vec!["world", "--out", "w", "--overwrite", "--leak", "0.2"];
    args.extend_from_slice(TINY);
    ok(tmp.path(), &args);
    assert_eq!(fails(tmp.path(), &["replay", "d/manifest.json", "--out", "d3"]), "input_changed");
}
