use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fairpb_core::dsl::CandidateRule;
use fairpb_core::rules;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig};
use crate::fitness::{compute_epsilon, EvalContext, FitnessError};
use crate::llm::{ChatReply, ChatRequest, LlmClient, LlmError, Message, Purpose, Usage};
use crate::population::{detect_stagnation, select_parents, survive, Population};
use crate::prompts;
use crate::strategy::{Settlement, StrategyKind, StrategySet};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("chat client failed: {source}{}", checkpoint.as_ref().map(|p| format!(" (state saved to {})", p.display())).unwrap_or_default())]
    Client { source: LlmError, checkpoint: Option<PathBuf> },
    #[error("no valid initial rule was produced")]
    EmptyPopulation,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRecord {
    pub id: String,
    pub kind: StrategyKind,
    pub score: Option<f64>,
    pub produced: usize,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub kind: StrategyKind,
    /// id of the strategy put on probation
    pub id: Option<String>,
    pub text: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    CallBudget,
}

/// One line of the event log. No wall-clock data, so runs with a scripted
/// client and a fixed seed log identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Start {
        setting: String,
        instances: usize,
        epsilon: f64,
        population_size: usize,
        generations: usize,
        seed: u64,
    },
    Generation {
        generation: usize,
        best_q: Option<f64>,
        mean_q: Option<f64>,
        population: usize,
        valid: usize,
        invalid: usize,
        duplicates: usize,
        chat_calls: u64,
        prompt_tokens: u64,
        completion_tokens: u64,
        strategies: Vec<StrategyRecord>,
    },
    Strategy {
        generation: usize,
        id: String,
        outcome: String,
    },
    Refinement {
        generation: usize,
        proposals: Vec<Proposal>,
    },
    Stop {
        generation: usize,
        reason: StopReason,
        best_q: Option<f64>,
    },
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: EngineConfig,
    pub epsilon: f64,
    pub population: Population,
    pub strategies: StrategySet,
    pub rng: ChaCha8Rng,
    pub next_seq: u64,
    pub chat_calls: u64,
    pub usage: Usage,
    pub last_refinement: Option<usize>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let mut cp: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        cp.population.reparse();
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub population: Population,
    pub strategies: StrategySet,
    pub epsilon: f64,
    pub chat_calls: u64,
    pub usage: Usage,
    pub reason: StopReason,
    pub events: Vec<Event>,
}

#[derive(Debug, Default)]
struct BatchStats {
    valid: usize,
    invalid: usize,
    duplicates: usize,
}

/// One offspring request, retried until it yields a new valid rule or runs
/// out of attempts.
struct Slot {
    purpose: Purpose,
    strategy: Option<String>,
    prompt: String,
    attempts_left: usize,
}

struct Engine<'a, W: Write> {
    ctx: &'a EvalContext,
    llm: &'a dyn LlmClient,
    sink: W,
    checkpoint_path: Option<&'a Path>,
    pool: rayon::ThreadPool,
    state: Checkpoint,
    committed: Option<Checkpoint>,
    events: Vec<Event>,
    out_of_calls: bool,
}

impl<'a, W: Write> Engine<'a, W> {
    fn emit(&mut self, event: Event) -> Result<(), EngineError> {
        writeln!(self.sink, "{}", serde_json::to_string(&event)?)?;
        self.events.push(event);
        Ok(())
    }

    fn config(&self) -> &EngineConfig {
        &self.state.config
    }

    /// Marks the current state as the resume point and writes it out.
    fn commit(&mut self) -> Result<(), EngineError> {
        self.committed = Some(self.state.clone());
        if let Some(p) = self.checkpoint_path {
            self.state.save(p)?;
        }
        Ok(())
    }

    /// Writes the last committed state, not the half-finished generation.
    fn save_committed(&self) -> Result<Option<PathBuf>, EngineError> {
        match (self.checkpoint_path, &self.committed) {
            (Some(p), Some(state)) => {
                state.save(p)?;
                Ok(Some(p.to_path_buf()))
            }
            _ => Ok(None),
        }
    }

    fn client_failure(&self, source: LlmError) -> EngineError {
        match self.save_committed() {
            Ok(checkpoint) => EngineError::Client { source, checkpoint },
            Err(e) => {
                log::error!("could not save checkpoint: {e}");
                EngineError::Client { source, checkpoint: None }
            }
        }
    }

    /// How many of `wanted` calls the cap still allows.
    fn allowance(&mut self, wanted: usize) -> usize {
        match self.config().max_chat_calls {
            Some(cap) => {
                let left = cap.saturating_sub(self.state.chat_calls) as usize;
                if left < wanted {
                    self.out_of_calls = true;
                }
                left.min(wanted)
            }
            None => wanted,
        }
    }

    /// Issues requests with bounded parallelism; replies come back in order.
    fn dispatch(&mut self, batch: Vec<(Purpose, String)>) -> Vec<Result<ChatReply, LlmError>> {
        let temperature = self.config().temperature;
        let requests: Vec<ChatRequest> = batch
            .into_iter()
            .map(|(purpose, prompt)| {
                let seq = self.state.next_seq;
                self.state.next_seq += 1;
                ChatRequest { seq, purpose, messages: vec![Message::user(prompt)], temperature }
            })
            .collect();
        self.state.chat_calls += requests.len() as u64;
        let llm = self.llm;
        let replies: Vec<Result<ChatReply, LlmError>> = self.pool.install(|| requests.par_iter().map(|r| llm.chat(r)).collect());
        for reply in replies.iter().flatten() {
            if let Some(u) = reply.usage {
                self.state.usage.prompt_tokens += u.prompt_tokens;
                self.state.usage.completion_tokens += u.completion_tokens;
            }
        }
        replies
    }

    /// Runs the slots to completion and returns the accepted rules in slot
    /// order, each evaluated.
    fn fill(&mut self, mut slots: Vec<Slot>, stats: &mut BatchStats) -> Result<Vec<CandidateRule>, EngineError> {
        let mut accepted: Vec<Option<CandidateRule>> = vec![None; slots.len()];
        let mut seen: HashSet<String> = self
            .state
            .population
            .members()
            .iter()
            .filter_map(|c| c.canonical.clone())
            .collect();
        loop {
            let open: Vec<usize> = (0..slots.len()).filter(|&k| accepted[k].is_none() && slots[k].attempts_left > 0).collect();
            let allowed = self.allowance(open.len());
            let open = &open[..allowed];
            if open.is_empty() {
                break;
            }
            let batch = open.iter().map(|&k| (slots[k].purpose, slots[k].prompt.clone())).collect();
            let replies = self.dispatch(batch);
            let mut fresh: Vec<(usize, CandidateRule)> = Vec::new();
            for (&k, reply) in open.iter().zip(replies) {
                slots[k].attempts_left -= 1;
                let reply = reply.map_err(|e| self.client_failure(e))?;
                let candidate = CandidateRule::from_reply(&reply.text);
                if !candidate.is_valid() {
                    stats.invalid += 1;
                    if let Some(id) = &slots[k].strategy {
                        self.state.strategies.record(id, None);
                    }
                    continue;
                }
                let canonical = candidate.canonical.clone().unwrap_or_default();
                if !seen.insert(canonical) {
                    stats.duplicates += 1;
                    continue;
                }
                fresh.push((k, candidate));
            }
            let epsilon = self.state.epsilon;
            let timeout = self.config().eval_timeout();
            let ctx = self.ctx;
            let results: Vec<_> = fresh.par_iter().map(|(_, c)| ctx.evaluate(c, epsilon, timeout)).collect();
            for ((k, mut candidate), result) in fresh.into_iter().zip(results) {
                let fitness = match result {
                    Ok(eval) => {
                        candidate.set_fitness(eval.fitness);
                        stats.valid += 1;
                        Some(eval.fitness)
                    }
                    Err(failure) => {
                        candidate.invalidate(failure.validity, failure.message);
                        stats.invalid += 1;
                        // an unscorable rule may come back in a later reply
                        if let Some(c) = &candidate.canonical {
                            seen.remove(c);
                        }
                        None
                    }
                };
                if let Some(id) = &slots[k].strategy {
                    self.state.strategies.record(id, fitness);
                }
                if fitness.is_some() {
                    accepted[k] = Some(candidate);
                }
            }
        }
        Ok(accepted.into_iter().flatten().collect())
    }

    fn strategy_records(&self) -> Vec<StrategyRecord> {
        let window = self.config().strategy_window;
        self.state
            .strategies
            .active()
            .iter()
            .map(|s| StrategyRecord { id: s.id.clone(), kind: s.kind, score: s.score(window), produced: s.produced.len(), attempts: s.attempts })
            .collect()
    }

    fn generation_event(&self, stats: &BatchStats) -> Event {
        let pop = &self.state.population;
        Event::Generation {
            generation: pop.generation(),
            best_q: pop.best_fitness(),
            mean_q: pop.mean_fitness(),
            population: pop.len(),
            valid: stats.valid,
            invalid: stats.invalid,
            duplicates: stats.duplicates,
            chat_calls: self.state.chat_calls,
            prompt_tokens: self.state.usage.prompt_tokens,
            completion_tokens: self.state.usage.completion_tokens,
            strategies: self.strategy_records(),
        }
    }

    fn initialize(&mut self) -> Result<(), EngineError> {
        let h = self.config().population_size;
        let prompt = prompts::init_prompt(self.ctx.objective);
        let slots = (0..h)
            .map(|_| Slot { purpose: Purpose::Init, strategy: None, prompt: prompt.clone(), attempts_left: 1 + self.config().retries })
            .collect();
        let mut stats = BatchStats::default();
        let rules = self.fill(slots, &mut stats)?;
        if rules.is_empty() {
            return Err(EngineError::EmptyPopulation);
        }
        self.state.population = Population::initial(h, rules);
        let event = self.generation_event(&stats);
        self.emit(event)
    }

    fn offspring_slots(&mut self) -> Result<Vec<Slot>, EngineError> {
        let h = self.config().population_size;
        let retries = self.config().retries;
        let objective = self.ctx.objective;
        let pop_size = self.state.population.len();
        let kinds: Vec<StrategyKind> = (0..h)
            .map(|k| if k % 2 == 0 && pop_size >= 2 { StrategyKind::Exploration } else { StrategyKind::Modification })
            .collect();
        let mut queues = [StrategyKind::Exploration, StrategyKind::Modification].map(|kind| {
            let n = kinds.iter().filter(|&&k| k == kind).count();
            self.state.strategies.schedule(kind, n).into_iter()
        });
        let mut slots = Vec::with_capacity(h);
        for kind in kinds {
            let queue = &mut queues[usize::from(kind == StrategyKind::Modification)];
            let id = queue.next().expect("schedule fills every slot");
            let strategy = self.state.strategies.get(&id).expect("scheduled strategy exists").clone();
            let parents_wanted = if kind == StrategyKind::Exploration { 2 } else { 1 };
            let picked = select_parents(&self.state.population, parents_wanted, &mut self.state.rng)
                .expect("population holds enough parents");
            let members = self.state.population.members();
            let parents: Vec<&CandidateRule> = picked.iter().map(|&i| &members[i]).collect();
            let prompt = match kind {
                StrategyKind::Exploration => prompts::exploration_prompt(objective, &strategy, &parents),
                StrategyKind::Modification => prompts::modification_prompt(objective, &strategy, parents[0]),
            };
            slots.push(Slot { purpose: Purpose::Offspring(kind), strategy: Some(id), prompt, attempts_left: 1 + retries });
        }
        Ok(slots)
    }

    fn refine(&mut self, generation: usize) -> Result<(), EngineError> {
        let kinds = [StrategyKind::Exploration, StrategyKind::Modification];
        let window = self.config().strategy_window;
        let allowed = self.allowance(kinds.len());
        let batch: Vec<(Purpose, String)> = kinds[..allowed]
            .iter()
            .map(|&kind| {
                let current: Vec<_> = self.state.strategies.of_kind(kind).collect();
                (Purpose::Refine(kind), prompts::refinement_prompt(self.ctx.objective, kind, &current, window))
            })
            .collect();
        let replies = self.dispatch(batch);
        let mut proposals = Vec::new();
        for (&kind, reply) in kinds.iter().zip(replies) {
            let proposal = match reply {
                Err(e) => Proposal { kind, id: None, text: None, error: Some(e.to_string()) },
                Ok(r) => match prompts::extract_strategy(&r.text) {
                    Some(text) => {
                        let id = self.state.strategies.propose(kind, text.clone(), generation);
                        Proposal { kind, id: Some(id), text: Some(text), error: None }
                    }
                    None => Proposal { kind, id: None, text: None, error: Some("reply has no braced instruction".into()) },
                },
            };
            proposals.push(proposal);
        }
        self.state.last_refinement = Some(generation);
        self.emit(Event::Refinement { generation, proposals })
    }

    fn step(&mut self) -> Result<(), EngineError> {
        let slots = self.offspring_slots()?;
        let mut stats = BatchStats::default();
        let offspring = self.fill(slots, &mut stats)?;
        self.state.population = survive(&self.state.population, offspring);
        let generation = self.state.population.generation();
        let (max, window) = (self.config().max_strategies, self.config().strategy_window);
        for s in self.state.strategies.settle(generation, max, window) {
            let (id, outcome) = match s {
                Settlement::Accepted(id) => (id, "accepted"),
                Settlement::Rejected(id) => (id, "rejected"),
                Settlement::Evicted(id) => (id, "evicted"),
            };
            self.emit(Event::Strategy { generation, id, outcome: outcome.into() })?;
        }
        let event = self.generation_event(&stats);
        self.emit(event)?;
        let start = self.state.last_refinement.unwrap_or(0);
        let history = &self.state.population.top_history()[start..];
        if detect_stagnation(history, self.config().top_l, self.config().stagnation_window) && !self.out_of_calls {
            self.refine(generation)?;
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutcome, EngineError> {
        let target = self.config().generations;
        while self.state.population.generation() < target && !self.out_of_calls {
            self.step()?;
            self.commit()?;
        }
        let reason = if self.out_of_calls { StopReason::CallBudget } else { StopReason::Completed };
        let stop = Event::Stop {
            generation: self.state.population.generation(),
            reason,
            best_q: self.state.population.best_fitness(),
        };
        self.emit(stop)?;
        self.sink.flush()?;
        Ok(RunOutcome {
            population: self.state.population,
            strategies: self.state.strategies,
            epsilon: self.state.epsilon,
            chat_calls: self.state.chat_calls,
            usage: self.state.usage,
            reason,
            events: self.events,
        })
    }
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool, EngineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| EngineError::Pool(e.to_string()))
}

/// Full run: ε (from the config or the baselines), initial population,
/// then generations until the configured count or the call cap. Events go
/// to `sink` as JSON lines; state is checkpointed after every generation
/// when `checkpoint` is given.
pub fn run_evolution<W: Write>(
    config: &EngineConfig,
    ctx: &EvalContext,
    llm: &dyn LlmClient,
    sink: W,
    checkpoint: Option<&Path>,
) -> Result<RunOutcome, EngineError> {
    config.validate()?;
    let epsilon = match config.epsilon {
        Some(e) => e,
        None => compute_epsilon(ctx, &rules::baselines(ctx.objective.kind()))?,
    };
    let state = Checkpoint {
        config: config.clone(),
        epsilon,
        population: Population::initial(config.population_size, Vec::new()),
        strategies: StrategySet::initial(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        next_seq: 0,
        chat_calls: 0,
        usage: Usage::default(),
        last_refinement: None,
    };
    let mut engine = Engine {
        ctx,
        llm,
        sink,
        checkpoint_path: checkpoint,
        pool: pool(config.parallelism)?,
        state,
        committed: None,
        events: Vec::new(),
        out_of_calls: false,
    };
    engine.emit(Event::Start {
        setting: ctx.objective.name().to_string(),
        instances: ctx.len(),
        epsilon,
        population_size: config.population_size,
        generations: config.generations,
        seed: config.seed,
    })?;
    engine.initialize()?;
    engine.commit()?;
    engine.run()
}

/// Continues a checkpointed run to its configured generation count.
pub fn resume_evolution<W: Write>(
    state: Checkpoint,
    ctx: &EvalContext,
    llm: &dyn LlmClient,
    sink: W,
    checkpoint: Option<&Path>,
) -> Result<RunOutcome, EngineError> {
    state.config.validate()?;
    let engine = Engine {
        ctx,
        llm,
        sink,
        checkpoint_path: checkpoint,
        pool: pool(state.config.parallelism)?,
        committed: Some(state.clone()),
        state,
        events: Vec::new(),
        out_of_calls: false,
    };
    engine.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedClient;
    use fairpb_core::model::{BallotKind, Objective, Sat};
    use fairpb_core::testkit::{random_case, rng, Shape};

    fn ctx() -> EvalContext {
        let mut r = rng(11);
        let items = (0..2)
            .map(|k| {
                let (i, p) = random_case(&mut r, Shape::small(BallotKind::Approval));
                (format!("c{k}"), i, p, None)
            })
            .collect();
        EvalContext::build(items, Objective::ApprovalSat(Sat::Card), 100).unwrap()
    }

    fn reply(k: u64) -> String {
        format!("{{rule {k}}}\n```\napp_count + {k}*cost\n```")
    }

    fn small_config() -> EngineConfig {
        EngineConfig { population_size: 4, generations: 3, epsilon: Some(0.0), seed: 9, ..EngineConfig::default() }
    }

    #[test]
    fn call_accounting_without_failures() {
        let c = ctx();
        let llm = ScriptedClient::with_fallback(Vec::new(), |r| match r.purpose {
            Purpose::Refine(_) => Some("{try something else}".into()),
            _ => Some(reply(r.seq)),
        });
        let cfg = EngineConfig { top_l: 1, stagnation_window: 100, ..small_config() };
        let out = run_evolution(&cfg, &c, &llm, Vec::new(), None).unwrap();
        assert_eq!(out.chat_calls, 4 + 3 * 4);
        assert_eq!(out.reason, StopReason::Completed);
        assert_eq!(out.population.generation(), 3);
    }

    #[test]
    fn invalid_replies_use_retries_then_give_up() {
        let c = ctx();
        let llm = ScriptedClient::with_fallback(Vec::new(), |r| match (r.purpose, r.seq) {
            (Purpose::Init, s) => Some(reply(s)),
            _ => Some("no braces here".into()),
        });
        let cfg = EngineConfig { generations: 1, stagnation_window: 100, ..small_config() };
        let out = run_evolution(&cfg, &c, &llm, Vec::new(), None).unwrap();
        // 4 initial, then 4 slots × (1 + 3 retries)
        assert_eq!(out.chat_calls, 4 + 16);
        let Event::Generation { invalid, valid, .. } = &out.events[2] else { panic!("{:?}", out.events[2]) };
        assert_eq!((*valid, *invalid), (0, 16));
        assert!(out.strategies.active().iter().all(|s| s.produced.is_empty()));
    }

    #[test]
    fn duplicates_are_retried() {
        let c = ctx();
        // every offspring reply repeats an initial rule except on the last attempt
        let llm = ScriptedClient::with_fallback(Vec::new(), |r| match r.purpose {
            Purpose::Init => Some(reply(r.seq)),
            _ if r.seq < 8 => Some(reply(0)),
            _ => Some(reply(r.seq)),
        });
        let cfg = EngineConfig { generations: 1, stagnation_window: 100, ..small_config() };
        let out = run_evolution(&cfg, &c, &llm, Vec::new(), None).unwrap();
        let Event::Generation { duplicates, valid, .. } = &out.events[2] else { panic!() };
        assert_eq!((*duplicates, *valid), (4, 4));
        assert_eq!(out.chat_calls, 12);
    }

    #[test]
    fn call_cap_stops_the_run() {
        let c = ctx();
        let llm = ScriptedClient::with_fallback(Vec::new(), |r| Some(reply(r.seq)));
        let cfg = EngineConfig { max_chat_calls: Some(6), stagnation_window: 100, ..small_config() };
        let out = run_evolution(&cfg, &c, &llm, Vec::new(), None).unwrap();
        assert_eq!(out.chat_calls, 6);
        assert_eq!(out.reason, StopReason::CallBudget);
    }

    #[test]
    fn client_failure_saves_a_checkpoint_and_resume_finishes() {
        let c = ctx();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        let failing = ScriptedClient::new((0..8).map(reply).collect());
        let cfg = EngineConfig { stagnation_window: 100, ..small_config() };
        let err = run_evolution(&cfg, &c, &failing, Vec::new(), Some(&path)).unwrap_err();
        assert!(matches!(err, EngineError::Client { source: LlmError::Exhausted(_), checkpoint: Some(_) }));
        let saved = Checkpoint::load(&path).unwrap();
        assert_eq!(saved.population.generation(), 1);
        let llm = ScriptedClient::with_fallback(Vec::new(), |r| Some(reply(r.seq)));
        let out = resume_evolution(saved, &c, &llm, Vec::new(), Some(&path)).unwrap();
        assert_eq!(out.population.generation(), 3);
        assert_eq!(out.reason, StopReason::Completed);
    }

    #[test]
    fn refinement_proposals_go_through_probation() {
        let c = ctx();
        // constant scores: distinct rules, identical fitness, flat history
        let llm = ScriptedClient::with_fallback(Vec::new(), |r| match r.purpose {
            Purpose::Refine(StrategyKind::Exploration) => Some("{combine the parents' terms}".into()),
            Purpose::Refine(StrategyKind::Modification) => Some("no instruction".into()),
            _ => Some(format!("{{flat}}\n```\n{}*(0*cost+1)\n```", r.seq + 1)),
        });
        let cfg = EngineConfig { generations: 5, ..small_config() };
        let out = run_evolution(&cfg, &c, &llm, Vec::new(), None).unwrap();
        let refinements: Vec<&Event> = out.events.iter().filter(|e| matches!(e, Event::Refinement { .. })).collect();
        assert_eq!(refinements.len(), 1);
        let Event::Refinement { generation, proposals } = refinements[0] else { unreachable!() };
        assert_eq!(*generation, 3);
        assert_eq!(proposals[0].id.as_deref(), Some("EN1"));
        assert!(proposals[1].error.is_some());
        assert!(out.events.iter().any(|e| matches!(e, Event::Strategy { id, outcome, .. } if id == "EN1" && outcome == "accepted")));
        assert!(out.strategies.active().iter().any(|s| s.id == "EN1"));
    }
}
