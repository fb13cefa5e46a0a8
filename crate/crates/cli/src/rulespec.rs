//! Rule names on the command line: built-in names, `dsl:FILE`, `ext:COMMAND`
//! and `BASE+dsl:FILE` / `BASE+ext:COMMAND` for a built-in completed by a
//! scoring rule.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use fairpb_core::dsl::{DslRule, ExternalRule};
use fairpb_core::rules::{Completion, RuleId, ScoreRule};

use crate::corpus::resolve;
use crate::error::CliError;

pub const EXTERNAL_TIMEOUT: Duration = Duration::from_secs(60);

fn scorer(spec: &str, root: &Path) -> Result<Option<Arc<dyn ScoreRule>>, CliError> {
    if let Some(file) = spec.strip_prefix("dsl:") {
        let path = resolve(root, Path::new(file));
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let rule = DslRule::parse(spec, text.trim()).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        return Ok(Some(Arc::new(rule)));
    }
    if let Some(cmd) = spec.strip_prefix("ext:") {
        let rule = ExternalRule::new(cmd, EXTERNAL_TIMEOUT).ok_or_else(|| CliError::input("ext: needs a command"))?;
        return Ok(Some(Arc::new(rule)));
    }
    Ok(None)
}

pub fn parse_rule_spec(spec: &str, root: &Path) -> Result<RuleId, CliError> {
    if let Some(s) = scorer(spec, root)? {
        return Ok(RuleId::Scored(s));
    }
    if let Some((base, rest)) = spec.split_once('+') {
        let base = RuleId::builtin(base).ok_or_else(|| CliError::input(format!("unknown rule `{base}`")))?;
        let s = scorer(rest, root)?.ok_or_else(|| CliError::input(format!("`{rest}` is not a dsl: or ext: rule")))?;
        return Ok(RuleId::Completed(Box::new(base), Completion::Scored(s)));
    }
    RuleId::builtin(spec).ok_or_else(|| CliError::input(format!("unknown rule `{spec}`")))
}
