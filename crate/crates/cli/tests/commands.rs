use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use fairpb_cli::{run, Cli, CliError};
use fairpb_core::cohesion::brute_force_cohesive_groups;
use fairpb_core::data::{rejection, write_pabulib, DatasetEntry};
use fairpb_core::model::{BallotKind, Ballots, Profile, Rat};
use fairpb_core::testkit::{random_allocation, random_case, rng, Shape};
use num_traits::Zero;

fn fairpb(root: &Path, args: &[&str]) -> (Result<(), CliError>, String) {
    let mut argv = vec!["fairpb", "--data-root", root.to_str().unwrap()];
    argv.extend_from_slice(args);
    let cli = Cli::try_parse_from(argv).expect("arguments parse");
    let mut out = Vec::new();
    let res = run(cli, &mut out);
    (res, String::from_utf8(out).unwrap())
}

/// Cumulative ballots sum to at most 1, so cardinal cases are normalized.
fn cumulative(prof: Profile) -> Profile {
    match prof.ballots() {
        Ballots::Approval(_) => prof,
        Ballots::Cardinal(ballots) => {
            let scaled = ballots
                .iter()
                .map(|b| {
                    let total: Rat = b.iter().cloned().sum();
                    if total.is_zero() {
                        b.clone()
                    } else {
                        b.iter().map(|s| s / &total).collect()
                    }
                })
                .collect();
            Profile::cardinal(prof.num_projects(), scaled).unwrap()
        }
    }
}

/// Small instances that pass the corpus filters, written as .pb files.
fn write_corpus(dir: &Path, kind: BallotKind, count: usize, country: &str, seed: u64) -> Vec<PathBuf> {
    fs::create_dir_all(dir).unwrap();
    let mut r = rng(seed);
    let mut paths = Vec::new();
    while paths.len() < count {
        let (inst, prof) = random_case(&mut r, Shape::small(kind));
        let prof = cumulative(prof);
        let meta = BTreeMap::from([("country".to_string(), country.to_string())]);
        let entry = DatasetEntry::new(inst, prof, meta);
        if rejection(&entry).is_some() {
            continue;
        }
        let path = dir.join(format!("i{}.pb", paths.len()));
        fs::write(&path, write_pabulib(&entry).unwrap()).unwrap();
        paths.push(path);
    }
    paths
}

#[test]
fn validate_empty_dir_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let (res, out) = fairpb(tmp.path(), &["validate", "empty"]);
    res.unwrap();
    assert!(out.contains("files: 0"));
    assert!(out.contains("kept: 0"));
}

#[test]
fn validate_reports_split_counts_and_parse_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_corpus(&data, BallotKind::Approval, 3, "US", 1);
    write_corpus(&data.join("pl"), BallotKind::Approval, 2, "Poland", 2);
    let (res, out) = fairpb(tmp.path(), &["validate", "data"]);
    res.unwrap();
    assert!(out.contains("| approval | train | 3 |"), "{out}");
    assert!(out.contains("| approval | test-id | 2 |"), "{out}");

    fs::write(data.join("bad.pb"), "META\nkey;value\nbudget;ten\n").unwrap();
    let (res, out) = fairpb(tmp.path(), &["validate", "data"]);
    let err = res.unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(out.contains("bad.pb: line"), "{out}");
}

#[test]
fn mine_uses_the_cache_and_matches_brute_force() {
    let tmp = tempfile::tempdir().unwrap();
    let paths = write_corpus(&tmp.path().join("data"), BallotKind::Approval, 4, "US", 3);
    let (res, out) = fairpb(tmp.path(), &["mine", "data"]);
    res.unwrap();
    assert!(out.contains("mined: 4  cache hits: 0"), "{out}");
    let (res, out) = fairpb(tmp.path(), &["mine", "data", "--csv", "mine.csv"]);
    res.unwrap();
    assert!(out.contains("mined: 0  cache hits: 4"), "{out}");

    let mut rows = csv::Reader::from_path(tmp.path().join("mine.csv")).unwrap();
    let header = rows.headers().unwrap().clone();
    let s_col = header.iter().position(|h| h == "s").unwrap();
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 4);
    for (path, rec) in paths.iter().zip(&records) {
        let entry = fairpb_core::data::parse_pabulib(&fs::read_to_string(path).unwrap()).unwrap();
        let brute = brute_force_cohesive_groups(&entry.instance, &entry.profile).unwrap();
        assert_eq!(rec[s_col].parse::<usize>().unwrap(), brute.len());
    }
}

#[test]
fn eval_tables() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(&tmp.path().join("data"), BallotKind::Approval, 5, "US", 4);
    fs::write(tmp.path().join("a.dsl"), "app_count / cost\n").unwrap();
    fs::write(tmp.path().join("b.dsl"), "app_count / cost\n").unwrap();
    let (res, out) = fairpb(
        tmp.path(),
        &["eval", "data", "--rules", "max-util,dsl:a.dsl,dsl:b.dsl,mes-cost+dsl:a.dsl", "--csv", "rows.csv", "--pareto"],
    );
    res.unwrap();
    assert!(out.contains("| max-util | 1.000 |"), "{out}");
    let line = |name: &str| out.lines().find(|l| l.starts_with(&format!("| {name} |"))).unwrap().replace(name, "X");
    assert_eq!(line("dsl:a.dsl"), line("dsl:b.dsl"));
    let csv_text = fs::read_to_string(tmp.path().join("rows.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 1 + 5 * 4);
    assert!(csv_text.starts_with("schema,instance,rule,objective,omega,omega_prime,phi"));

    let (res, _) = fairpb(tmp.path(), &["eval", "data", "--rules", "nonsense"]);
    assert_eq!(res.unwrap_err().exit_code(), 1);
}

#[test]
fn eval_rejects_approval_rules_on_cardinal() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(&tmp.path().join("data"), BallotKind::Cardinal, 2, "PL", 5);
    let (res, _) = fairpb(tmp.path(), &["eval", "data", "--objective", "cardinal", "--rules", "seq-phrag"]);
    assert_eq!(res.unwrap_err().exit_code(), 1);
    let (res, out) = fairpb(tmp.path(), &["eval", "data", "--objective", "cardinal"]);
    res.unwrap();
    assert!(out.contains("| mes-add1um |"), "{out}");
}

#[test]
fn verify_prints_verdicts_and_guards() {
    let tmp = tempfile::tempdir().unwrap();
    let paths = write_corpus(&tmp.path().join("data"), BallotKind::Approval, 1, "US", 6);
    let file = paths[0].to_str().unwrap();
    let (res, out) = fairpb(tmp.path(), &["verify", file, "--rule", "max-util", "--brute"]);
    res.unwrap();
    assert!(out.contains("strong-ejr (maximal groups):"), "{out}");
    assert!(out.contains("brute force: strong-ejr"), "{out}");

    // 13 voters exceed the brute-force guard
    let entry = fairpb_core::data::parse_pabulib(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
    let m = entry.num_projects();
    let big = fairpb_core::model::Profile::approval(m, vec![(0..m).collect(); 13]).unwrap();
    let mut inst_costs = entry.instance.costs();
    inst_costs[0] = entry.instance.budget() + 1;
    let inst = fairpb_core::model::Instance::from_costs(&inst_costs, entry.instance.budget()).unwrap();
    let big_entry = DatasetEntry::new(inst, big, BTreeMap::new());
    fs::write(tmp.path().join("big.pb"), write_pabulib(&big_entry).unwrap()).unwrap();
    let (res, out) = fairpb(tmp.path(), &["verify", "big.pb", "--allocation", "p1", "--brute"]);
    res.unwrap();
    assert!(out.contains("brute force refused"), "{out}");
    assert!(out.contains("n ≤ 12"), "{out}");

    let all: Vec<String> = (0..m).map(|k| format!("p{k}")).collect();
    let (res, _) = fairpb(tmp.path(), &["verify", "big.pb", "--allocation", &all.join(",")]);
    assert_eq!(res.unwrap_err().exit_code(), 1);
}

#[test]
fn verify_verdicts_are_consistent_on_random_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = rng(77);
    for k in 0..40 {
        let kind = if k % 2 == 0 { BallotKind::Approval } else { BallotKind::Cardinal };
        let (inst, prof) = random_case(&mut r, Shape::small(kind));
        let prof = cumulative(prof);
        let pi = random_allocation(&mut r, &inst);
        let ids: Vec<String> = pi.selected().iter().map(|&p| inst.projects()[p].id.clone()).collect();
        let entry = DatasetEntry::new(inst, prof, BTreeMap::new());
        fs::write(tmp.path().join("x.pb"), write_pabulib(&entry).unwrap()).unwrap();
        let mut args = vec!["verify", "x.pb", "--brute"];
        let joined = ids.join(",");
        if ids.is_empty() {
            args.extend(["--rule", "mes"]);
        } else {
            args.extend(["--allocation", &joined]);
        }
        let (res, out) = fairpb(tmp.path(), &args);
        res.unwrap_or_else(|e| panic!("case {k}: {e}\n{out}"));
        let line = out.lines().find(|l| l.starts_with("brute force:")).unwrap();
        let flag = |name: &str| line.contains(&format!("{name} true"));
        assert!(!flag("strong-ejr") || flag("ejr"), "{line}");
        assert!(!flag(" ejr") || flag("pjr"), "{line}");
    }
}

#[test]
fn evolve_with_mock_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(&tmp.path().join("data"), BallotKind::Cardinal, 3, "PL", 8);
    let replies = [
        "{favour cheap projects}\n```\nscore_sum / cost\n```",
        "{favour popular projects}\n```\nscore_sum\n```",
        "{prefer well supported cheap ones}\n```\napp_count / sqrt(cost)\n```",
        "{mix support and cost}\n```\nscore_mean * budget / cost\n```",
    ];
    fs::write(tmp.path().join("mock.json"), serde_json::to_string(&replies).unwrap()).unwrap();
    fs::write(tmp.path().join("engine.toml"), "schema_version = 1\npopulation_size = 4\ngenerations = 3\nseed = 5\n").unwrap();
    let run_into = |dir: &str| {
        let (res, out) = fairpb(
            tmp.path(),
            &[
                "evolve", "data", "--objective", "cardinal", "--config", "engine.toml", "--mock", "mock.json", "--runs",
                "2", "--out", dir,
            ],
        );
        res.unwrap_or_else(|e| panic!("{e}\n{out}"));
        out
    };
    let first = run_into("out1");
    let second = run_into("out2");
    // the second run finds the groups cached
    assert!(first.starts_with("mined groups for 3 instance(s)"), "{first}");
    assert!(!second.contains("mined groups"), "{second}");
    let report = |dir: &str| fs::read_to_string(tmp.path().join(dir).join("report.md")).unwrap();
    assert_eq!(report("out1"), report("out2"));
    assert!(first.contains("run 1 (seed 6)"), "{first}");
    assert!(first.contains("| evolved |"), "{first}");
    for f in ["events.ndjson", "best_rule.dsl", "checkpoint.json"] {
        let a = fs::read(tmp.path().join("out1/run-0").join(f)).unwrap();
        let b = fs::read(tmp.path().join("out2/run-0").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn synth_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        let (res, _) = fairpb(tmp.path(), &["synth", "--out", dir, "--count", "2", "--seed", "11", "--kind", "cardinal"]);
        res.unwrap();
    }
    let a = fs::read(tmp.path().join("a/synthetic-cardinal-12.pb")).unwrap();
    let b = fs::read(tmp.path().join("b/synthetic-cardinal-12.pb")).unwrap();
    assert_eq!(a, b);
    let (res, out) = fairpb(tmp.path(), &["validate", "a"]);
    res.unwrap();
    assert!(out.contains("kept: 2"), "{out}");
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_fairpb");
    let status = |args: &[&str]| {
        Command::new(bin).arg("--data-root").arg(tmp.path()).args(args).output().unwrap().status.code()
    };
    fs::create_dir(tmp.path().join("d")).unwrap();
    assert_eq!(status(&["validate", "d"]), Some(0));
    fs::write(tmp.path().join("d/x.pb"), "garbage\n").unwrap();
    assert_eq!(status(&["validate", "d"]), Some(1));
    assert_eq!(status(&["no-such-command"]), Some(1));
    assert_eq!(status(&["--help"]), Some(0));
}
