use std::collections::BTreeMap;
use std::process::{Command, Output};

use serde_json::Value;

fn arclift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arclift"))
        .args(args)
        .env_remove("ARCLIFT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn json_lines(o: &Output) -> Vec<Value> {
    stdout(o)
        .lines()
        .map(|l| serde_json::from_str(l).expect("valid json line"))
        .collect()
}

#[test]
fn enumerate_lists_trees_and_count() {
    let o = arclift(&["enumerate", "--size", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3], "count=3");
    assert!(lines.contains(&"{1}({2}({3}))"));

    let o = arclift(&["enumerate", "--size", "4"]);
    assert_eq!(stdout(&o).lines().last(), Some("count=15"));

    let o = arclift(&["enumerate", "--labels", "{1,3}|{2}|{4}"]);
    assert_eq!(stdout(&o).lines().last(), Some("count=3"));
}

#[test]
fn enumerate_cap_is_a_usage_error() {
    let o = arclift(&["enumerate", "--size", "99"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
    assert!(o.stdout.is_empty());
}

#[test]
fn lift_chain_size_one_emits_no_changes() {
    let o = arclift(&["lift-chain", "--size", "1", "--seed", "3"]);
    assert!(o.status.success());
    let lines = json_lines(&o);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["header"]["command"], "lift-chain");
    assert_eq!(lines[0]["header"]["rng"]["seed"], 3);
}

#[test]
fn lift_chain_is_deterministic() {
    let args = ["lift-chain", "--size", "4", "--seed", "7", "--reps", "2"];
    let a = arclift(&args);
    assert_eq!(a.stdout, arclift(&args).stdout);
    let records = json_lines(&a);
    // each replicate ends absorbed after at most three mergers
    for rep in 0..2 {
        let mine: Vec<&Value> = records[1..].iter().filter(|r| r["rep"] == rep).collect();
        assert!(!mine.is_empty() && mine.len() <= 3);
        assert_eq!(mine.last().unwrap()["partition"], "{1,2,3,4}");
    }

    let threads = |t: &str| {
        arclift(&["--threads", t, "lift-chain", "--size", "12", "--seed", "1", "--reps", "5000", "--emit", "events"]).stdout
    };
    assert_eq!(threads("1"), threads("4"));
}

#[test]
fn lift_chain_csv_has_columns() {
    let o = arclift(&["lift-chain", "--size", "3", "--seed", "2", "--format", "csv"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    assert_eq!(lines.next(), Some("t,partition,k,rep"));
    assert!(lines.all(|l| l.ends_with(",0")));
}

/// First-merger sizes read back from `lift-chain` output. The lifting chain's
/// first jump follows its enumerated law (71/90, 11/90, 4/45), not the
/// arcsine merger-size law (18/25, 4/25, 3/25).
#[test]
fn lift_chain_first_mergers_follow_enumerated_law() {
    let reps = 40_000;
    let o = arclift(&["lift-chain", "--size", "4", "--seed", "5", "--reps", &reps.to_string()]);
    let mut first: BTreeMap<u64, u64> = BTreeMap::new();
    let mut counts = [0u64; 5];
    for r in &json_lines(&o)[1..] {
        let rep = r["rep"].as_u64().unwrap();
        if first.insert(rep, 0).is_none() {
            let blocks = r["partition"].as_str().unwrap().split('|').count();
            counts[4 - blocks + 1] += 1;
        }
    }
    assert_eq!(first.len(), reps);
    let emp: Vec<f64> = counts[2..].iter().map(|&c| c as f64 / reps as f64).collect();
    let tv = |p: [f64; 3]| emp.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv([71.0 / 90.0, 11.0 / 90.0, 4.0 / 45.0]) < 0.01);
    assert!(tv([18.0 / 25.0, 4.0 / 25.0, 3.0 / 25.0]) > 0.05);
}

#[test]
fn coalescent_two_blocks_merge_once() {
    let o = arclift(&["coalescent", "--n", "2", "--lambda", "arcsine", "--seed", "4", "--reps", "5"]);
    assert!(o.status.success());
    let lines = json_lines(&o);
    assert_eq!(lines.len(), 6);
    for (i, r) in lines[1..].iter().enumerate() {
        assert_eq!(r["rep"], i as u64);
        assert_eq!(r["k"], 2);
        assert_eq!(r["partition"], "{1,2}");
    }
}

#[test]
fn coalescent_headers_carry_rates() {
    let header = |lambda: &str| json_lines(&arclift(&["coalescent", "--n", "4", "--lambda", lambda]))[0].clone();
    assert_eq!(header("beta:0.5,0.5"), header("arcsine"));

    let h = header("uniform");
    let rate = h["header"]["rates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["b"] == 4 && r["k"] == 2)
        .unwrap()
        .clone();
    assert_eq!(rate["exact"], "1/3");
    let (v, q) = (rate["value"].as_f64().unwrap(), rate["quadrature"].as_f64().unwrap());
    assert!((v - 1.0 / 3.0).abs() < 1e-15 && (v - q).abs() < 1e-12);

    let h = header("kingman");
    assert!(h["header"]["rates"][0]["exact"].is_null() || h["header"]["rates"][0]["exact"] == "1/1");
}

#[test]
fn malformed_lambda_is_a_usage_error() {
    let o = arclift(&["coalescent", "--n", "4", "--lambda", "beta:x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_exact_experiments() {
    for args in [
        &["verify", "lemma1", "--size", "5"][..],
        &["verify", "rates-exact", "--size", "7"],
        &["verify", "port-count", "--size", "7"],
    ] {
        let o = arclift(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        let lines = json_lines(&o);
        assert!(lines[1..].iter().all(|r| r["pass"] == true), "{args:?}");
    }
}

#[test]
fn verify_paper_check_reports_discrepancies() {
    let o = arclift(&["verify", "paper-check", "--size", "6"]);
    assert!(o.status.success());
    let lines = json_lines(&o);
    let rate = &lines[1]["exact_checks"][0];
    assert_eq!((rate["expected"].as_str(), rate["actual"].as_str()), (Some("1/8"), Some("1/4")));
    let time = &lines[2]["exact_checks"][0];
    assert_eq!((time["expected"].as_str(), time["actual"].as_str()), (Some("2/3"), Some("1/24")));
    assert_eq!(time["ratio"], "1/16");
}

#[test]
fn verify_unknown_experiment_is_a_usage_error() {
    let o = arclift(&["verify", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_failure_exits_one() {
    let o = arclift(&["verify", "first-merger-size", "--reps", "20000", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let lines = json_lines(&o);
    let by_check = |c: &str| lines.iter().find(|r| r["check"] == c).unwrap().clone();
    assert_eq!(by_check("lifted-chain-vs-arcsine")["pass"], false);
    assert_eq!(by_check("lambda-coalescent")["pass"], true);
    assert_eq!(by_check("lifted-chain-vs-enumerated-first-jump")["pass"], true);
}

#[test]
fn verify_is_thread_count_invariant() {
    let run = |t: &str, format: &str| {
        arclift(&[
            "--threads", t, "verify", "jump-chain-equality", "--reps", "5000", "--seed", "9", "--format", format,
        ])
        .stdout
    };
    assert_eq!(run("1", "json"), run("3", "json"));
    assert_eq!(run("1", "csv"), run("5", "csv"));
    let env = |t: &str| {
        Command::new(env!("CARGO_BIN_EXE_arclift"))
            .args(["verify", "gem-moments", "--reps", "5000"])
            .env("ARCLIFT_THREADS", t)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(env("1"), env("6"));
}

#[test]
fn rates_csv() {
    let o = arclift(&["rates", "--lambda", "uniform", "--b-max", "4"]);
    let text = stdout(&o);
    assert!(text.contains("\nb,k,exact,float\n"));
    assert!(text.contains("\n4,2,1/3,0.3333333333333333\n"));
}

#[test]
fn gem_and_block_one_csv() {
    let o = arclift(&["gem", "--count", "3", "--reps", "4", "--seed", "1", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 12);

    let o = arclift(&["gem", "--alpha", "1.0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = arclift(&["block-one", "--size", "20", "--reps", "3", "--seed", "2", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert!(!rows.is_empty());
    // growth fractions of each replicate add up to (n - 1) / n
    for rep in 0..3 {
        let total: f64 = rows
            .iter()
            .filter(|l| l.starts_with(&format!("{rep},")))
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 19.0 / 20.0).abs() < 1e-9);
    }
}
