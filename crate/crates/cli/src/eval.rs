//! Per-(instance, rule) rows, their CSV form, and the aggregate table built
//! from that CSV.

use std::time::Instant;

use fairpb_core::cohesion::GroupIndex;
use fairpb_core::fairness::{normalized_welfare, strong_ejr_approx};
use fairpb_core::model::{rat_to_f64, utilitarian_welfare, Instance, Objective, Profile};
use fairpb_core::rules::{self, RuleId};
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub schema: u32,
    pub instance: String,
    pub rule: String,
    pub objective: String,
    pub omega: f64,
    pub omega_prime: f64,
    pub phi: f64,
    pub strong_ejr: bool,
    pub vacuous: bool,
    pub runtime_ms: f64,
}

/// What one evaluated instance needs.
pub struct EvalInput<'a> {
    pub name: &'a str,
    pub instance: &'a Instance,
    pub profile: &'a Profile,
    pub groups: &'a GroupIndex,
}

fn evaluate_instance(input: &EvalInput, rules: &[RuleId], objective: Objective, sigma: usize) -> Result<Vec<EvalRow>, CliError> {
    let best = rules::max_util(input.instance, input.profile, objective)?;
    let optimum = utilitarian_welfare(input.instance, input.profile, &best, objective)?;
    rules
        .iter()
        .map(|rule| {
            let start = Instant::now();
            let pi = rule
                .run(input.instance, input.profile, objective)
                .map_err(|e| CliError::input(format!("{} on {}: {e}", rule.name(), input.name)))?;
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            if !pi.is_feasible(input.instance) {
                return Err(CliError::Internal(format!("{} overspent on {}", rule.name(), input.name)));
            }
            let welfare = utilitarian_welfare(input.instance, input.profile, &pi, objective)?;
            let omega_prime = if optimum.is_zero() { 1.0 } else { normalized_welfare(&welfare, &optimum)? };
            let report = strong_ejr_approx(input.groups, input.instance, input.profile, &pi, objective, sigma)?;
            Ok(EvalRow {
                schema: CSV_SCHEMA,
                instance: input.name.to_string(),
                rule: rule.name(),
                objective: objective.name().to_string(),
                omega: rat_to_f64(&welfare),
                omega_prime,
                phi: report.phi,
                strong_ejr: report.strong_ejr,
                vacuous: report.vacuous,
                runtime_ms,
            })
        })
        .collect()
}

/// Rows in input order: instance-major, rules in the given order.
pub fn evaluate(inputs: &[EvalInput], rules: &[RuleId], objective: Objective, sigma: usize) -> Result<Vec<EvalRow>, CliError> {
    for rule in rules {
        if rule.is_approval_only() && objective == Objective::CardinalUtility {
            return Err(CliError::input(format!("{} needs approval ballots", rule.name())));
        }
    }
    let per_instance: Vec<Result<Vec<EvalRow>, CliError>> =
        inputs.par_iter().map(|input| evaluate_instance(input, rules, objective, sigma)).collect();
    let mut rows = Vec::new();
    for r in per_instance {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[EvalRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<EvalRow>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<EvalRow> = r.deserialize().collect::<Result<_, _>>()?;
    if let Some(bad) = rows.iter().find(|r| r.schema != CSV_SCHEMA) {
        return Err(CliError::input(format!("unsupported row schema {}", bad.schema)));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rule: String,
    pub instances: usize,
    pub mean_omega_prime: f64,
    pub mean_phi: f64,
    /// no other rule is at least as good on both means and better on one
    pub pareto: bool,
}

/// Per-rule means, rules in order of first appearance.
pub fn aggregate(rows: &[EvalRow]) -> Vec<Aggregate> {
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.rule) {
            order.push(r.rule.clone());
        }
    }
    let mut out: Vec<Aggregate> = order
        .into_iter()
        .map(|rule| {
            let mine: Vec<&EvalRow> = rows.iter().filter(|r| r.rule == rule).collect();
            let k = mine.len() as f64;
            Aggregate {
                instances: mine.len(),
                mean_omega_prime: mine.iter().map(|r| r.omega_prime).sum::<f64>() / k,
                mean_phi: mine.iter().map(|r| r.phi).sum::<f64>() / k,
                rule,
                pareto: false,
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = out.iter().map(|a| (a.mean_omega_prime, a.mean_phi)).collect();
    for a in &mut out {
        let (w, f) = (a.mean_omega_prime, a.mean_phi);
        a.pareto = !points.iter().any(|&(w2, f2)| w2 >= w && f2 >= f && (w2 > w || f2 > f));
    }
    out
}

/// Markdown table of the aggregates, parsed back from the CSV text.
pub fn markdown_from_csv(csv_text: &str, pareto: bool) -> Result<String, CliError> {
    let aggs = aggregate(&rows_from_csv(csv_text)?);
    let mut out = String::from(if pareto { "| Rule | ω′ | φ | Pareto |\n|---|---|---|---|\n" } else { "| Rule | ω′ | φ |\n|---|---|---|\n" });
    for a in aggs {
        out.push_str(&format!("| {} | {:.3} | {:.3} |", a.rule, a.mean_omega_prime, a.mean_phi));
        if pareto {
            out.push_str(if a.pareto { " * |" } else { "  |" });
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rule: &str, w: f64, phi: f64) -> EvalRow {
        EvalRow {
            schema: CSV_SCHEMA,
            instance: "i".into(),
            rule: rule.into(),
            objective: "cost".into(),
            omega: 1.0,
            omega_prime: w,
            phi,
            strong_ejr: false,
            vacuous: false,
            runtime_ms: 0.5,
        }
    }

    #[test]
    fn csv_round_trip_and_means() {
        let rows = vec![row("a", 1.0, 0.5), row("b", 0.5, 0.9), row("a", 0.8, 0.7), row("c", 0.4, 0.6), row("b", 0.7, 0.9)];
        let text = rows_to_csv(&rows).unwrap();
        assert_eq!(rows_from_csv(&text).unwrap(), rows);
        let agg = aggregate(&rows);
        assert_eq!(agg.iter().map(|a| a.rule.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!((agg[0].mean_omega_prime - 0.9).abs() < 1e-12);
        assert!((agg[1].mean_phi - 0.9).abs() < 1e-12);
        assert_eq!(agg.iter().map(|a| a.pareto).collect::<Vec<_>>(), [true, true, false]);
        let md = markdown_from_csv(&text, true).unwrap();
        assert!(md.contains("| a | 0.900 | 0.600 | * |"));
        assert!(md.contains("| c | 0.400 | 0.600 |  |"));
    }

    #[test]
    fn identical_rules_aggregate_identically() {
        let rows = vec![row("x", 0.3, 0.4), row("y", 0.3, 0.4)];
        let md = markdown_from_csv(&rows_to_csv(&rows).unwrap(), false).unwrap();
        let lines: Vec<&str> = md.lines().skip(2).collect();
        assert_eq!(lines[0].replace("| x", "| y"), lines[1]);
    }

    #[test]
    fn schema_is_checked() {
        let mut r = row("a", 1.0, 1.0);
        r.schema = 99;
        let text = rows_to_csv(&[r]).unwrap();
        assert!(rows_from_csv(&text).is_err());
    }
}
