//! Argument parsing and dispatch.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairpb_core::cohesion::DEFAULT_SIGMA;
use fairpb_core::data::SplitRole;
use fairpb_core::model::{BallotKind, Objective};

use crate::commands::{
    cmd_eval, cmd_evolve, cmd_mine, cmd_synth, cmd_validate, cmd_verify, AllocationSource, ChatBackend, Env, EvalArgs,
    EvolveArgs, SynthArgs, VerifyArgs,
};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fairpb", version, about = "Participatory budgeting rules: fairness, welfare and rule search")]
pub struct Cli {
    /// Relative paths are resolved against this directory.
    #[arg(long, global = true, default_value = ".")]
    pub data_root: PathBuf,
    /// Cache directory (default: <data-root>/.fairpb-cache).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Worker threads for per-instance work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Approval,
    Cardinal,
}

impl From<KindArg> for BallotKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Approval => BallotKind::Approval,
            KindArg::Cardinal => BallotKind::Cardinal,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, filter and split a corpus; fails on any parse error.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Mine and cache the cohesive groups of a corpus.
    Mine {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: usize,
        /// Write the per-instance summary here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Welfare and fairness of rules over a corpus.
    Eval(EvalCmd),
    /// Search for a scoring rule with a language model.
    Evolve(EvolveCmd),
    /// Check one allocation for Strong-EJR and report φ.
    Verify(VerifyCmd),
    /// Generate synthetic instances.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the larger test-set voter range.
        #[arg(long)]
        test: bool,
        #[arg(long, value_enum, default_value = "approval")]
        kind: KindArg,
    },
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Rule specs: built-in names, dsl:FILE, ext:COMMAND, BASE+dsl:FILE.
    /// Defaults to the baselines for the objective's ballot kind.
    #[arg(long, value_delimiter = ',')]
    pub rules: Vec<String>,
    /// cost, card or cardinal
    #[arg(long, default_value = "cost")]
    pub objective: Objective,
    #[arg(long)]
    pub split: Option<SplitRole>,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub markdown: Option<PathBuf>,
    /// Mark rules on the Pareto front of (mean ω′, mean φ).
    #[arg(long)]
    pub pareto: bool,
}

#[derive(Debug, Args)]
pub struct EvolveCmd {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// TOML engine configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "cost")]
    pub objective: Objective,
    /// JSON array of canned replies used instead of a model endpoint.
    #[arg(long, conflicts_with = "endpoint")]
    pub mock: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible chat completions API.
    #[arg(long, requires = "model")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API token.
    #[arg(long, default_value = "FAIRPB_API_TOKEN")]
    pub token_var: String,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Seed of the first run; run k uses seed + k. Overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "evolve-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyCmd {
    pub file: PathBuf,
    /// Selected project ids.
    #[arg(long, value_delimiter = ',', conflicts_with = "rule", required_unless_present = "rule")]
    pub allocation: Option<Vec<String>>,
    /// Run this rule and check its outcome instead.
    #[arg(long)]
    pub rule: Option<String>,
    /// Defaults to cost for approval ballots, cardinal otherwise.
    #[arg(long)]
    pub objective: Option<Objective>,
    /// Also run the exhaustive Strong-EJR, EJR and PJR checks.
    #[arg(long)]
    pub brute: bool,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: usize,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        // fails only if a pool already exists, as in repeated in-process calls
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::debug!("keeping the existing thread pool: {e}");
        }
    }
    let env = Env::new(cli.data_root, cli.cache)?;
    match cli.command {
        Command::Validate { paths } => cmd_validate(&env, &paths, out),
        Command::Mine { paths, sigma, csv } => cmd_mine(&env, &paths, sigma, csv.as_deref(), out),
        Command::Eval(c) => cmd_eval(
            &env,
            &EvalArgs {
                paths: &c.paths,
                rules: &c.rules,
                objective: c.objective,
                split: c.split,
                sigma: c.sigma,
                csv: c.csv.as_deref(),
                markdown: c.markdown.as_deref(),
                pareto: c.pareto,
            },
            out,
        ),
        Command::Evolve(c) => {
            let backend = match (c.mock, c.endpoint) {
                (Some(m), _) => ChatBackend::Mock(m),
                (None, Some(endpoint)) => ChatBackend::Http {
                    endpoint,
                    model: c.model.unwrap_or_default(),
                    token_var: Some(c.token_var),
                },
                (None, None) => return Err(CliError::input("evolve needs --mock or --endpoint")),
            };
            let out_dir = crate::corpus::resolve(&env.root, &c.out);
            cmd_evolve(
                &env,
                &EvolveArgs {
                    config: c.config.as_deref(),
                    objective: c.objective,
                    paths: &c.paths,
                    backend,
                    runs: c.runs,
                    seed: c.seed,
                    out_dir: &out_dir,
                },
                out,
            )
        }
        Command::Verify(c) => {
            let allocation = match (c.allocation, c.rule) {
                (_, Some(rule)) => AllocationSource::Rule(rule),
                (Some(ids), None) => AllocationSource::Ids(ids),
                (None, None) => return Err(CliError::input("verify needs --allocation or --rule")),
            };
            cmd_verify(
                &env,
                &VerifyArgs { file: &c.file, allocation, objective: c.objective, brute: c.brute, sigma: c.sigma },
                out,
            )
        }
        Command::Synth { out: dir, count, seed, test, kind } => cmd_synth(
            &env,
            &SynthArgs { out_dir: &dir, count, seed, test_ranges: test, kind: kind.into() },
            out,
        ),
    }
}
