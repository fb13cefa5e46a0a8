//! Population-based search for greedy scoring rules. Candidate rules are
//! expressions in the rule language of `fairpb_core::dsl`, proposed by a
//! chat-completion model and ranked by a welfare-minus-penalty fitness.

pub mod config;
pub mod engine;
pub mod fitness;
pub mod http;
pub mod llm;
pub mod population;
pub mod prompts;
pub mod strategy;

pub use config::{ConfigError, EngineConfig};
pub use engine::{run_evolution, Checkpoint, EngineError, Event, RunOutcome};
pub use fitness::{compute_epsilon, epsilon_from_means, fitness_from_parts, theta, EvalContext, InstanceScore, TrainingInstance};
pub use http::HttpClient;
pub use llm::{ChatReply, ChatRequest, LlmClient, LlmError, Message, Purpose, Role, ScriptedClient, Usage};
pub use population::{detect_stagnation, select_parents, survive, Population};
pub use strategy::{PromptStrategy, Provenance, StrategyKind, StrategySet};
