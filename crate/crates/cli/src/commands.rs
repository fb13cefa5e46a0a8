//! The subcommands. Each writes its human-readable report to `out` and
//! returns an error carrying the exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fairpb_core::cohesion::{mine_cohesive_groups, GroupIndex};
use fairpb_core::data::{
    generate_synthetic, parse_pabulib, write_pabulib, Cache, ManifestRow, Rejection, SplitRole, SynthConfig,
};
use fairpb_core::dsl::DslRule;
use fairpb_core::fairness::oracle::{
    verify_ejr_bruteforce, verify_pjr_bruteforce, verify_strong_ejr_bruteforce, within_guard, MAX_PROJECTS,
    MAX_VOTERS,
};
use fairpb_core::fairness::{strong_ejr_approx, verify_strong_ejr_maximal};
use fairpb_core::model::{Allocation, BallotKind, Objective, Sat};
use fairpb_core::rules::{self, RuleId};
use fairpb_evolve::{run_evolution, EngineConfig, EvalContext, HttpClient, LlmClient, ScriptedClient};
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{collect_files, load_all, load_filtered, Loaded};
use crate::error::CliError;
use crate::eval::{self, EvalInput, EvalRow};
use crate::rulespec::parse_rule_spec;

/// Settings shared by every subcommand.
pub struct Env {
    pub root: PathBuf,
    pub cache: Cache,
}

impl Env {
    pub fn new(root: PathBuf, cache_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let cache_dir = cache_dir.map(|c| crate::corpus::resolve(&root, &c)).unwrap_or_else(|| root.join(".fairpb-cache"));
        Ok(Self { cache: Cache::open(cache_dir)?, root })
    }
}

fn kind_name(kind: BallotKind) -> &'static str {
    match kind {
        BallotKind::Approval => "approval",
        BallotKind::Cardinal => "cardinal",
    }
}

fn default_objective(kind: BallotKind) -> Objective {
    match kind {
        BallotKind::Approval => Objective::ApprovalSat(Sat::Cost),
        BallotKind::Cardinal => Objective::CardinalUtility,
    }
}

// ---------------------------------------------------------------- validate

/// Parses every file and reports per-split counts of the instances that
/// pass the filters. Any parse failure makes the command fail.
pub fn cmd_validate(env: &Env, paths: &[PathBuf], out: &mut dyn Write) -> Result<(), CliError> {
    let files = collect_files(&env.root, paths)?;
    let (loaded, failed) = load_all(&env.cache, &env.root, &files);

    let mut kept: BTreeMap<(&'static str, String), usize> = BTreeMap::new();
    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    for l in &loaded {
        match l.rejection {
            None => *kept.entry((kind_name(l.entry.kind()), l.split.to_string())).or_default() += 1,
            Some(r) => *rejected.entry(format!("{r:?}")).or_default() += 1,
        }
    }
    writeln!(out, "files: {}  parsed: {}  failed: {}", files.len(), loaded.len(), failed.len())?;
    writeln!(out, "| ballots | split | instances |\n|---|---|---|")?;
    for ((kind, split), count) in &kept {
        writeln!(out, "| {kind} | {split} | {count} |")?;
    }
    let total: usize = kept.values().sum();
    writeln!(out, "kept: {total}")?;
    for (reason, count) in &rejected {
        writeln!(out, "rejected {reason}: {count}")?;
    }
    for (name, e) in &failed {
        writeln!(out, "error {name}: {e}")?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::input(format!("{} file(s) failed to parse", failed.len())))
    }
}

// ---------------------------------------------------------------- mine

#[derive(Debug, Clone, Serialize)]
pub struct MineRow {
    pub instance: String,
    pub hash: String,
    pub n: usize,
    pub m: usize,
    /// all maximal cohesive groups
    pub s: usize,
    /// groups past σ are dropped
    pub truncated: bool,
    pub mining_ms: f64,
    pub cached: bool,
}

pub struct MineReport {
    pub rows: Vec<MineRow>,
    pub mined: usize,
    pub hits: usize,
}

fn group_of(env: &Env, l: &Loaded) -> Result<(GroupIndex, f64, bool), CliError> {
    let cached = env.cache.has_groups(&l.hash);
    let start = Instant::now();
    let groups = env.cache.groups(&l.hash, &l.entry)?;
    Ok((groups, start.elapsed().as_secs_f64() * 1e3, cached))
}

/// Mines (or reads back) the groups of every filtered instance and rewrites
/// the manifest with the instances that have at least one group.
pub fn mine_corpus(env: &Env, paths: &[PathBuf], sigma: usize) -> Result<MineReport, CliError> {
    let files = collect_files(&env.root, paths)?;
    let (loaded, failed) = load_all(&env.cache, &env.root, &files);
    if let Some((name, e)) = failed.into_iter().next() {
        return Err(CliError::input(format!("{name}: {e}")));
    }
    let candidates: Vec<Loaded> = loaded
        .into_iter()
        .filter(|l| matches!(l.rejection, None | Some(Rejection::NoCohesiveGroup)))
        .collect();
    let mined: Vec<Result<(MineRow, ManifestRow), CliError>> = candidates
        .par_iter()
        .map(|l| {
            let (groups, ms, cached) = group_of(env, l)?;
            let row = MineRow {
                instance: l.name.clone(),
                hash: l.hash.clone(),
                n: l.entry.num_voters(),
                m: l.entry.num_projects(),
                s: groups.len(),
                truncated: groups.len() > sigma,
                mining_ms: ms,
                cached,
            };
            let manifest = ManifestRow {
                path: l.name.clone(),
                hash: l.hash.clone(),
                split: l.split.to_string(),
                n: row.n,
                m: row.m,
                budget: l.entry.instance.budget(),
            };
            Ok((row, manifest))
        })
        .collect();
    let mut rows = Vec::new();
    let mut manifest = Vec::new();
    for r in mined {
        let (row, man) = r?;
        if row.s == 0 {
            log::warn!("{}: no cohesive group, excluded from the manifest", row.instance);
        } else {
            manifest.push(man);
        }
        rows.push(row);
    }
    env.cache.write_manifest(&manifest)?;
    let hits = rows.iter().filter(|r| r.cached).count();
    Ok(MineReport { mined: rows.len() - hits, hits, rows })
}

pub fn cmd_mine(env: &Env, paths: &[PathBuf], sigma: usize, csv_path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let report = mine_corpus(env, paths, sigma)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(r)?;
    }
    let text = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    match csv_path {
        Some(p) => fs::write(crate::corpus::resolve(&env.root, p), &text)?,
        None => out.write_all(&text)?,
    }
    let flagged: Vec<&str> = report.rows.iter().filter(|r| r.s == 0).map(|r| r.instance.as_str()).collect();
    let truncated = report.rows.iter().filter(|r| r.truncated).count();
    writeln!(
        out,
        "instances: {}  mined: {}  cache hits: {}  truncated at σ={sigma}: {truncated}",
        report.rows.len(),
        report.mined,
        report.hits
    )?;
    for name in flagged {
        writeln!(out, "no cohesive group: {name}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------- eval

/// Instances of the objective's ballot kind, with their groups.
fn instances_for(env: &Env, loaded: Vec<Loaded>, objective: Objective, out: &mut dyn Write) -> Result<Vec<(Loaded, GroupIndex)>, CliError> {
    let (keep, skip): (Vec<Loaded>, Vec<Loaded>) = loaded.into_iter().partition(|l| l.entry.kind() == objective.kind());
    if !skip.is_empty() {
        writeln!(out, "skipping {} instance(s) whose ballots do not fit objective {}", skip.len(), objective.name())?;
    }
    keep.into_par_iter()
        .map(|l| {
            let groups = env.cache.groups(&l.hash, &l.entry)?;
            Ok((l, groups))
        })
        .collect()
}

fn evaluate_loaded(items: &[(Loaded, GroupIndex)], rules: &[RuleId], objective: Objective, sigma: usize) -> Result<Vec<EvalRow>, CliError> {
    let inputs: Vec<EvalInput> = items
        .iter()
        .map(|(l, g)| EvalInput { name: &l.name, instance: &l.entry.instance, profile: &l.entry.profile, groups: g })
        .collect();
    eval::evaluate(&inputs, rules, objective, sigma)
}

pub struct EvalArgs<'a> {
    pub paths: &'a [PathBuf],
    pub rules: &'a [String],
    pub objective: Objective,
    pub split: Option<SplitRole>,
    pub sigma: usize,
    pub csv: Option<&'a Path>,
    pub markdown: Option<&'a Path>,
    pub pareto: bool,
}

pub fn cmd_eval(env: &Env, args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rules: Vec<RuleId> = if args.rules.is_empty() {
        rules::baselines(args.objective.kind())
    } else {
        args.rules.iter().map(|s| parse_rule_spec(s, &env.root)).collect::<Result<_, _>>()?
    };
    let loaded = load_filtered(&env.cache, &env.root, args.paths, args.split)?;
    let items = instances_for(env, loaded, args.objective, out)?;
    let rows = evaluate_loaded(&items, &rules, args.objective, args.sigma)?;
    let csv_text = eval::rows_to_csv(&rows)?;
    if let Some(p) = args.csv {
        fs::write(crate::corpus::resolve(&env.root, p), &csv_text)?;
    }
    if rows.is_empty() {
        writeln!(out, "no instances to evaluate")?;
        return Ok(());
    }
    let md = eval::markdown_from_csv(&csv_text, args.pareto)?;
    if let Some(p) = args.markdown {
        fs::write(crate::corpus::resolve(&env.root, p), &md)?;
    }
    writeln!(out, "{} instance(s), objective {}", items.len(), args.objective.name())?;
    out.write_all(md.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------- evolve

pub enum ChatBackend {
    /// JSON array of replies, served in request order and cycled
    Mock(PathBuf),
    Http { endpoint: String, model: String, token_var: Option<String> },
}

pub struct EvolveArgs<'a> {
    pub config: Option<&'a Path>,
    pub objective: Objective,
    pub paths: &'a [PathBuf],
    pub backend: ChatBackend,
    pub runs: usize,
    pub seed: Option<u64>,
    pub out_dir: &'a Path,
}

fn load_config(env: &Env, path: Option<&Path>) -> Result<EngineConfig, CliError> {
    match path {
        Some(p) => {
            let p = crate::corpus::resolve(&env.root, p);
            let text = fs::read_to_string(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            Ok(EngineConfig::from_toml(&text)?)
        }
        None => Ok(EngineConfig::default()),
    }
}

fn mock_client(env: &Env, path: &Path) -> Result<ScriptedClient, CliError> {
    let p = crate::corpus::resolve(&env.root, path);
    let text = fs::read_to_string(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
    let replies: Vec<String> = serde_json::from_str(&text)?;
    if replies.is_empty() {
        return Err(CliError::input(format!("{}: no replies", p.display())));
    }
    Ok(ScriptedClient::with_fallback(Vec::new(), move |req| {
        usize::try_from(req.seq).ok().map(|k| replies[k % replies.len()].clone())
    }))
}

const SPLITS: [SplitRole; 3] = [SplitRole::Train, SplitRole::TestId, SplitRole::TestOod];

pub fn cmd_evolve(env: &Env, args: &EvolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let base = load_config(env, args.config)?;
    base.validate()?;
    if args.runs == 0 {
        return Err(CliError::input("--runs must be at least 1"));
    }
    // groups are built on demand; mining first keeps the manifest current
    let report = mine_corpus(env, args.paths, base.sigma)?;
    if report.mined > 0 {
        writeln!(out, "mined groups for {} instance(s)", report.mined)?;
    }
    let loaded = load_filtered(&env.cache, &env.root, args.paths, None)?;
    let items = instances_for(env, loaded, args.objective, out)?;
    let mut by_split: BTreeMap<String, Vec<(Loaded, GroupIndex)>> = BTreeMap::new();
    for (l, g) in items {
        by_split.entry(l.split.to_string()).or_default().push((l, g));
    }
    let train = by_split.get("train").map(Vec::as_slice).unwrap_or(&[]);
    if train.is_empty() {
        return Err(CliError::input(format!("no training instances for objective {}", args.objective.name())));
    }
    let ctx = EvalContext::build(
        train
            .iter()
            .map(|(l, g)| (l.name.clone(), l.entry.instance.clone(), l.entry.profile.clone(), Some(g.clone())))
            .collect(),
        args.objective,
        base.sigma,
    )
    .map_err(|e| CliError::input(e.to_string()))?;

    fs::create_dir_all(args.out_dir)?;
    let mut split_rows: BTreeMap<String, Vec<EvalRow>> = BTreeMap::new();
    let mut summary = String::new();
    for run in 0..args.runs {
        let mut config = base.clone();
        config.seed = args.seed.unwrap_or(base.seed) + run as u64;
        let dir = args.out_dir.join(format!("run-{run}"));
        fs::create_dir_all(&dir)?;
        let client: Box<dyn LlmClient> = match &args.backend {
            ChatBackend::Mock(p) => Box::new(mock_client(env, p)?),
            ChatBackend::Http { endpoint, model, token_var } => Box::new(
                HttpClient::new(endpoint, model, token_var.as_deref(), Duration::from_secs(120))
                    .map_err(|e| CliError::input(e.to_string()))?
                    .with_retries(config.retries.max(1), Duration::from_secs(2))
                    .with_transcript(&dir.join("transcript.jsonl"))?,
            ),
        };
        let sink = fs::File::create(dir.join("events.ndjson"))?;
        let outcome = run_evolution(&config, &ctx, client.as_ref(), std::io::BufWriter::new(sink), Some(&dir.join("checkpoint.json")))?;
        let best = outcome
            .population
            .best()
            .ok_or_else(|| CliError::input(format!("run {run}: no valid rule survived")))?;
        fs::write(dir.join("best_rule.dsl"), format!("{}\n", best.source))?;
        let q = best.fitness().unwrap_or(f64::NAN);
        summary.push_str(&format!("run {run} (seed {}): q = {q:.4}, {} chat call(s)\n", config.seed, outcome.chat_calls));
        summary.push_str(&format!("  {}\n  {}\n", best.description, best.source));

        let label = format!("evolved-run{run}");
        let rule = DslRule::parse(label, &best.source).map_err(|e| CliError::Internal(format!("best rule does not parse: {e}")))?;
        let rule = RuleId::Scored(Arc::new(rule));
        for split in SPLITS {
            if let Some(items) = by_split.get(&split.to_string()) {
                let rows = evaluate_loaded(items, std::slice::from_ref(&rule), args.objective, base.sigma)?;
                split_rows.entry(split.to_string()).or_default().extend(rows);
            }
        }
    }

    let mut report = format!("# Evolution report ({})\n\n{summary}\n", args.objective.name());
    for split in SPLITS {
        let Some(items) = by_split.get(&split.to_string()) else { continue };
        let mut rows: Vec<EvalRow> = split_rows.remove(&split.to_string()).unwrap_or_default();
        // one line for the evolved rule averaged over runs
        for r in &mut rows {
            r.rule = "evolved".into();
        }
        rows.extend(evaluate_loaded(items, &rules::baselines(args.objective.kind()), args.objective, base.sigma)?);
        let csv_text = eval::rows_to_csv(&rows)?;
        fs::write(args.out_dir.join(format!("{split}.csv")), &csv_text)?;
        report.push_str(&format!("## {split} ({} instances)\n\n", items.len()));
        report.push_str(&eval::markdown_from_csv(&csv_text, true)?);
        report.push('\n');
    }
    fs::write(args.out_dir.join("report.md"), &report)?;
    out.write_all(report.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------- verify

pub enum AllocationSource {
    Ids(Vec<String>),
    Rule(String),
}

pub struct VerifyArgs<'a> {
    pub file: &'a Path,
    pub allocation: AllocationSource,
    pub objective: Option<Objective>,
    pub brute: bool,
    pub sigma: usize,
}

pub fn cmd_verify(env: &Env, args: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let path = crate::corpus::resolve(&env.root, args.file);
    let text = fs::read_to_string(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let entry = parse_pabulib(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let (inst, prof) = (&entry.instance, &entry.profile);
    let objective = args.objective.unwrap_or_else(|| default_objective(entry.kind()));
    objective.check(prof)?;

    let allocation = match &args.allocation {
        AllocationSource::Ids(ids) => {
            let idx = ids
                .iter()
                .map(|id| inst.index_of(id).ok_or_else(|| CliError::input(format!("unknown project `{id}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            Allocation::new(inst, idx)?
        }
        AllocationSource::Rule(spec) => parse_rule_spec(spec, &env.root)?.run(inst, prof, objective)?,
    };
    let ids: Vec<&str> = allocation.selected().iter().map(|&p| inst.projects()[p].id.as_str()).collect();
    writeln!(out, "allocation: {{{}}} cost {} of {}", ids.join(", "), allocation.total_cost(), inst.budget())?;

    let groups = mine_cohesive_groups(inst, prof);
    let maximal = verify_strong_ejr_maximal(&groups, inst, prof, &allocation, objective)?;
    let report = strong_ejr_approx(&groups, inst, prof, &allocation, objective, args.sigma)?;
    writeln!(out, "cohesive groups: {}", groups.len())?;
    writeln!(out, "strong-ejr (maximal groups): {maximal}")?;
    writeln!(out, "phi (σ={}): {:.6}{}", args.sigma, report.phi, if report.vacuous { " (vacuous)" } else { "" })?;
    if args.brute {
        if within_guard(inst, prof) {
            let strong = verify_strong_ejr_bruteforce(inst, prof, &allocation, objective)?;
            let ejr = verify_ejr_bruteforce(inst, prof, &allocation, objective)?;
            let pjr = verify_pjr_bruteforce(inst, prof, &allocation, objective)?;
            writeln!(out, "brute force: strong-ejr {strong}  ejr {ejr}  pjr {pjr}")?;
            if (strong && !ejr) || (ejr && !pjr) || strong != maximal {
                return Err(CliError::Internal("brute-force verdicts are inconsistent".into()));
            }
        } else {
            writeln!(
                out,
                "brute force refused: n = {}, m = {} exceeds the guard (n ≤ {MAX_VOTERS}, m ≤ {MAX_PROJECTS})",
                prof.num_voters(),
                inst.num_projects()
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

pub struct SynthArgs<'a> {
    pub out_dir: &'a Path,
    pub count: usize,
    pub seed: u64,
    pub test_ranges: bool,
    pub kind: BallotKind,
}

pub fn cmd_synth(env: &Env, args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = crate::corpus::resolve(&env.root, args.out_dir);
    fs::create_dir_all(&dir)?;
    let written: Vec<Result<PathBuf, CliError>> = (0..args.count)
        .into_par_iter()
        .map(|k| {
            let seed = args.seed + k as u64;
            let mut cfg = if args.test_ranges { SynthConfig::test(seed) } else { SynthConfig::train(seed) };
            cfg.kind = args.kind;
            let entry = generate_synthetic(&cfg)?;
            let path = dir.join(format!("synthetic-{}-{seed}.pb", kind_name(args.kind)));
            fs::write(&path, write_pabulib(&entry)?)?;
            Ok(path)
        })
        .collect();
    for w in written {
        writeln!(out, "{}", w?.display())?;
    }
    Ok(())
}
