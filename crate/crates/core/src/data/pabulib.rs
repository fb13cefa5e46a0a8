//! Reader and writer for the Pabulib `.pb` flat format.

use std::collections::BTreeMap;
use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

use super::{DatasetEntry, ParseError, ParseErrorKind};
use crate::model::{rat_int, Ballots, Instance, Money, Profile, Rat, MINOR_PER_MAJOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Meta,
    Projects,
    Votes,
}

struct SectionText {
    /// 1-based line number of the section's column header
    first_line: usize,
    text: String,
}

fn err(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

fn split_sections(text: &str) -> Result<HashMap<Section, SectionText>, ParseError> {
    let mut out: HashMap<Section, SectionText> = HashMap::new();
    let mut current: Option<Section> = None;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let header = match raw.trim().trim_start_matches('\u{feff}').to_ascii_uppercase().as_str() {
            "META" => Some(Section::Meta),
            "PROJECTS" => Some(Section::Projects),
            "VOTES" => Some(Section::Votes),
            _ => None,
        };
        if let Some(sec) = header {
            if out.contains_key(&sec) {
                return Err(err(line_no, ParseErrorKind::DuplicateSection(format!("{sec:?}").to_uppercase())));
            }
            out.insert(sec, SectionText { first_line: line_no + 1, text: String::new() });
            current = Some(sec);
            continue;
        }
        match current {
            Some(sec) => {
                let s = out.get_mut(&sec).expect("section inserted on header");
                s.text.push_str(raw);
                s.text.push('\n');
            }
            None if raw.trim().is_empty() => {}
            None => return Err(err(line_no, ParseErrorKind::Syntax("content before the META section".into()))),
        }
    }
    for (sec, name) in [(Section::Meta, "META"), (Section::Projects, "PROJECTS"), (Section::Votes, "VOTES")] {
        if !out.contains_key(&sec) {
            return Err(err(0, ParseErrorKind::MissingSection(name)));
        }
    }
    Ok(out)
}

/// Rows of a section as column → value maps, with their line numbers.
struct Table {
    columns: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(sec: &SectionText, has_header: bool) -> Result<Table, ParseError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b';')
            .has_headers(false)
            .flexible(true)
            .from_reader(sec.text.as_bytes());
        let mut columns = Vec::new();
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line_of = |r: &csv::StringRecord| {
                r.position().map(|p| p.line() as usize).unwrap_or(1) - 1 + sec.first_line
            };
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(1) - 1 + sec.first_line;
                err(line, ParseErrorKind::Syntax(e.to_string()))
            })?;
            let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
            if fields.iter().all(|f| f.is_empty()) {
                continue;
            }
            if has_header && k == 0 {
                columns = fields.iter().map(|f| f.to_ascii_lowercase()).collect();
            } else {
                rows.push((line_of(&rec), fields));
            }
        }
        Ok(Table { columns, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn require(&self, name: &'static str, section: &'static str, line: usize) -> Result<usize, ParseError> {
        self.column(name)
            .ok_or_else(|| err(line, ParseErrorKind::MissingColumn { section, column: name }))
    }

    fn warn_unknown(&self, section: &str, known: &[&str]) {
        for c in &self.columns {
            if !known.contains(&c.as_str()) {
                log::warn!("ignoring {section} column `{c}`");
            }
        }
    }
}

/// Decimal amount with at most two fractional digits, in minor units.
pub fn parse_money(s: &str) -> Option<Money> {
    let s = s.trim();
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // trailing zeros beyond the cents carry no precision
    let frac = frac.trim_end_matches('0');
    if frac.len() > 2 {
        return None;
    }
    let cents: Money = format!("{frac:0<2}").parse().ok()?;
    whole.parse::<Money>().ok()?.checked_mul(MINOR_PER_MAJOR)?.checked_add(cents)
}

pub fn format_money(v: Money) -> String {
    let (whole, cents) = (v / MINOR_PER_MAJOR, v % MINOR_PER_MAJOR);
    if cents == 0 {
        whole.to_string()
    } else {
        format!("{whole}.{cents:02}")
    }
}

/// Non-negative decimal such as `3`, `2.5`.
fn parse_points(s: &str) -> Option<Rat> {
    let s = s.trim();
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{whole}{frac}").parse().ok()?;
    Some(Rat::new(digits, BigInt::from(10u32).pow(frac.len() as u32)))
}

fn parse_count(meta: &BTreeMap<String, String>, key: &'static str, line: usize) -> Result<Option<usize>, ParseError> {
    meta.get(key)
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| err(line, ParseErrorKind::InvalidMeta { key, value: v.clone() }))
        })
        .transpose()
}

pub fn parse_pabulib(text: &str) -> Result<DatasetEntry, ParseError> {
    let sections = split_sections(text)?;
    let meta_sec = &sections[&Section::Meta];
    let meta_line = meta_sec.first_line;

    let meta_table = Table::read(meta_sec, true)?;
    let mut metadata = BTreeMap::new();
    for (line, fields) in &meta_table.rows {
        let key = fields[0].clone();
        // values may themselves contain the delimiter
        let value = fields[1..].join(";");
        if metadata.insert(key.clone(), value).is_some() {
            return Err(err(*line, ParseErrorKind::Syntax(format!("duplicate META key `{key}`"))));
        }
    }
    let meta_value = |key: &'static str| {
        metadata.get(key).ok_or_else(|| err(meta_line, ParseErrorKind::MissingMeta(key)))
    };
    let budget_text = meta_value("budget")?;
    let budget = parse_money(budget_text)
        .ok_or_else(|| err(meta_line, ParseErrorKind::InvalidMeta { key: "budget", value: budget_text.clone() }))?;
    let vote_type = meta_value("vote_type")?.trim().to_ascii_lowercase();
    let cumulative = match vote_type.as_str() {
        "approval" => false,
        "cumulative" => true,
        other => return Err(err(meta_line, ParseErrorKind::UnsupportedVoteType(other.to_string()))),
    };
    let declared_m = parse_count(&metadata, "num_projects", meta_line)?;
    let declared_n = parse_count(&metadata, "num_votes", meta_line)?;
    let declared_points = match metadata.get("max_sum_points") {
        Some(v) if cumulative => Some(parse_points(v).filter(|p| p.is_positive()).ok_or_else(|| {
            err(meta_line, ParseErrorKind::InvalidMeta { key: "max_sum_points", value: v.clone() })
        })?),
        _ => None,
    };

    // PROJECTS
    let psec = &sections[&Section::Projects];
    let ptable = Table::read(psec, true)?;
    let id_col = ptable.require("project_id", "PROJECTS", psec.first_line)?;
    let cost_col = ptable.require("cost", "PROJECTS", psec.first_line)?;
    ptable.warn_unknown("PROJECTS", &["project_id", "cost", "votes", "score", "name", "category", "target", "selected"]);
    let mut projects = Vec::new();
    for (line, fields) in &ptable.rows {
        let id = fields.get(id_col).cloned().unwrap_or_default();
        let raw = fields.get(cost_col).map(String::as_str).unwrap_or("");
        let cost = parse_money(raw).ok_or_else(|| err(*line, ParseErrorKind::InvalidCost { project: id.clone(), value: raw.to_string() }))?;
        if id.is_empty() {
            return Err(err(*line, ParseErrorKind::Syntax("empty project_id".into())));
        }
        projects.push((*line, id, cost));
    }
    if let Some(m) = declared_m {
        if m != projects.len() {
            return Err(err(meta_line, ParseErrorKind::CountMismatch { what: "num_projects", declared: m, found: projects.len() }));
        }
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (k, (line, id, _)) in projects.iter().enumerate() {
        if index.insert(id.as_str(), k).is_some() {
            return Err(err(*line, ParseErrorKind::Syntax(format!("duplicate project id `{id}`"))));
        }
    }
    let instance = Instance::new(projects.iter().map(|(_, id, c)| (id.clone(), *c)), budget).map_err(|e| {
        let line = projects.first().map(|p| p.0).unwrap_or(psec.first_line);
        err(line, ParseErrorKind::Model(e))
    })?;
    let m = instance.num_projects();

    // VOTES
    let vsec = &sections[&Section::Votes];
    let vtable = Table::read(vsec, true)?;
    let vote_col = vtable.require("vote", "VOTES", vsec.first_line)?;
    vtable.require("voter_id", "VOTES", vsec.first_line)?;
    let points_col = if cumulative { Some(vtable.require("points", "VOTES", vsec.first_line)?) } else { None };
    vtable.warn_unknown(
        "VOTES",
        &["voter_id", "vote", "points", "age", "sex", "gender", "voting_method", "district", "neighborhood", "education"],
    );
    let lookup = |line: usize, id: &str| {
        index.get(id).copied().ok_or_else(|| err(line, ParseErrorKind::UnknownProject(id.to_string())))
    };
    let split_list = |s: &str| -> Vec<String> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_string).collect()
    };

    let profile = if let Some(pc) = points_col {
        let mut ballots = Vec::new();
        for (line, fields) in &vtable.rows {
            let ids = split_list(fields.get(vote_col).map(String::as_str).unwrap_or(""));
            let pts = split_list(fields.get(pc).map(String::as_str).unwrap_or(""));
            if ids.len() != pts.len() {
                return Err(err(*line, ParseErrorKind::Syntax(format!("{} projects but {} point values", ids.len(), pts.len()))));
            }
            let mut raw = vec![Rat::zero(); m];
            let mut seen = vec![false; m];
            for (id, p) in ids.iter().zip(&pts) {
                let k = lookup(*line, id)?;
                if std::mem::replace(&mut seen[k], true) {
                    return Err(err(*line, ParseErrorKind::Syntax(format!("project `{id}` listed twice"))));
                }
                raw[k] = parse_points(p).ok_or_else(|| err(*line, ParseErrorKind::Syntax(format!("invalid points `{p}`"))))?;
            }
            let total: Rat = raw.iter().cloned().sum();
            let scale = match &declared_points {
                Some(l) if total > *l => {
                    return Err(err(*line, ParseErrorKind::Syntax(format!("points sum {total} exceeds max_sum_points {l}"))))
                }
                Some(l) => l.clone(),
                None => total,
            };
            if !scale.is_zero() {
                for s in raw.iter_mut() {
                    *s /= &scale;
                }
            }
            ballots.push(raw);
        }
        Profile::cardinal(m, ballots)
    } else {
        let mut ballots = Vec::new();
        for (line, fields) in &vtable.rows {
            let ids = split_list(fields.get(vote_col).map(String::as_str).unwrap_or(""));
            ballots.push(ids.iter().map(|id| lookup(*line, id)).collect::<Result<Vec<_>, _>>()?);
        }
        Profile::approval(m, ballots)
    }
    .map_err(|e| err(vsec.first_line, ParseErrorKind::Model(e)))?;

    if let Some(n) = declared_n {
        if n != profile.num_voters() {
            return Err(err(meta_line, ParseErrorKind::CountMismatch { what: "num_votes", declared: n, found: profile.num_voters() }));
        }
    }
    Ok(DatasetEntry { instance, profile, metadata })
}

/// Least common multiple of the score denominators of one ballot.
fn common_denominator(scores: &[Rat]) -> BigInt {
    scores.iter().fold(BigInt::from(1), |acc, s| acc.lcm(s.denom()))
}

fn quote_if_needed(s: &str) -> String {
    if s.contains([';', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes an entry in the flat format. Cumulative scores are written as
/// integer points: scaled by `max_sum_points` when the metadata declares
/// one, otherwise each ballot must sum to 1 (or 0) and is written over its
/// own common denominator.
pub fn write_pabulib(entry: &DatasetEntry) -> Result<String, super::DataError> {
    let inst = &entry.instance;
    let mut out = String::from("META\nkey;value\n");
    for (k, v) in &entry.metadata {
        out.push_str(&format!("{};{}\n", quote_if_needed(k), quote_if_needed(v)));
    }
    out.push_str("PROJECTS\nproject_id;cost\n");
    for p in inst.projects() {
        out.push_str(&format!("{};{}\n", quote_if_needed(&p.id), format_money(p.cost)));
    }
    let ids: Vec<&str> = inst.projects().iter().map(|p| p.id.as_str()).collect();
    match entry.profile.ballots() {
        Ballots::Approval(ballots) => {
            out.push_str("VOTES\nvoter_id;vote\n");
            for (i, b) in ballots.iter().enumerate() {
                let vote: Vec<&str> = b.iter().map(|&p| ids[p]).collect();
                out.push_str(&format!("{};{}\n", i + 1, quote_if_needed(&vote.join(","))));
            }
        }
        Ballots::Cardinal(ballots) => {
            let declared = entry.metadata.get("max_sum_points").and_then(|v| parse_points(v));
            out.push_str("VOTES\nvoter_id;vote;points\n");
            for (i, b) in ballots.iter().enumerate() {
                let total: Rat = b.iter().cloned().sum();
                let scale = match &declared {
                    Some(l) => l.clone(),
                    None if total.is_zero() || total == rat_int(1) => Rat::from_integer(common_denominator(b)),
                    None => return Err(super::DataError::Unrepresentable(i)),
                };
                let mut vote = Vec::new();
                let mut pts = Vec::new();
                for (p, s) in b.iter().enumerate() {
                    if s.is_positive() {
                        let v = s * &scale;
                        if !v.is_integer() {
                            return Err(super::DataError::Unrepresentable(i));
                        }
                        vote.push(ids[p].to_string());
                        pts.push(v.to_integer().to_string());
                    }
                }
                out.push_str(&format!("{};{};{}\n", i + 1, quote_if_needed(&vote.join(",")), pts.join(",")));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rat, BallotKind};

    const MINIMAL: &str = "META\nkey;value\nbudget;100\nvote_type;approval\nnum_projects;2\nnum_votes;1\n\
PROJECTS\nproject_id;cost\np1;60\np2;50.5\nVOTES\nvoter_id;vote\nv1;p1,p2\n";

    #[test]
    fn minimal_file() {
        let e = parse_pabulib(MINIMAL).unwrap();
        assert_eq!(e.profile.num_voters(), 1);
        assert_eq!(e.profile.approved(0).unwrap(), &[0, 1]);
        assert_eq!(e.instance.costs(), vec![6000, 5050]);
        assert_eq!(e.instance.budget(), 10000);
    }

    #[test]
    fn cumulative_normalized_by_declared_total() {
        let text = "META\nkey;value\nbudget;100\nvote_type;cumulative\nmax_sum_points;4\n\
PROJECTS\nproject_id;cost;name\n1;60;a\n2;50;b\nVOTES\nvoter_id;vote;points\n1;1,2;3,1\n2;2;2\n";
        let e = parse_pabulib(text).unwrap();
        assert_eq!(e.profile.kind(), BallotKind::Cardinal);
        assert_eq!(e.profile.score(0, 0), rat(3, 4));
        assert_eq!(e.profile.score(0, 1), rat(1, 4));
        assert_eq!(e.profile.score(1, 1), rat(1, 2));
        let back = parse_pabulib(&write_pabulib(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn cumulative_without_declared_total_uses_own_sum() {
        let text = "META\nkey;value\nbudget;100\nvote_type;cumulative\n\
PROJECTS\nproject_id;cost\n1;60\n2;50\nVOTES\nvoter_id;vote;points\n1;1,2;3,1\n";
        let e = parse_pabulib(text).unwrap();
        assert_eq!(e.profile.score(0, 0), rat(3, 4));
        let back = parse_pabulib(&write_pabulib(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn unknown_project_in_vote() {
        let text = MINIMAL.replace("v1;p1,p2", "v1;p1,p9");
        let e = parse_pabulib(&text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownProject("p9".into()));
        assert_eq!(e.line, 13);
    }

    #[test]
    fn distinct_errors() {
        let e = parse_pabulib(&MINIMAL.replace("VOTES\nvoter_id;vote\nv1;p1,p2\n", "")).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingSection("VOTES"));
        let e = parse_pabulib(&MINIMAL.replace("p2;50.5", "p2;abc")).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::InvalidCost { .. }));
        assert_eq!(e.line, 10);
        let e = parse_pabulib(&MINIMAL.replace("p2;50.5", "p2;50.555")).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::InvalidCost { .. }));
        let e = parse_pabulib(&MINIMAL.replace("num_votes;1", "num_votes;2")).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::CountMismatch { what: "num_votes", declared: 2, found: 1 }));
        let e = parse_pabulib(&MINIMAL.replace("vote_type;approval", "vote_type;ordinal")).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UnsupportedVoteType(_)));
    }

    #[test]
    fn money_format() {
        assert_eq!(parse_money("12"), Some(1200));
        assert_eq!(parse_money("12.5"), Some(1250));
        assert_eq!(parse_money("12.50"), Some(1250));
        assert_eq!(parse_money("12.500"), Some(1250));
        assert_eq!(parse_money("12.505"), None);
        assert_eq!(parse_money("-1"), None);
        assert_eq!(parse_money("1e3"), None);
        assert_eq!(format_money(1250), "12.50");
        assert_eq!(format_money(1200), "12");
    }

    #[test]
    fn approval_round_trip_with_quoted_fields() {
        let text = "META\nkey;value\nbudget;100.25\nvote_type;approval\ndescription;\"a; b\"\n\
PROJECTS\nproject_id;cost;votes\nx;60;1\ny;50;1\nz;10;0\nVOTES\nvoter_id;vote;age\n1;\"x,y\";33\n2;;40\n";
        let e = parse_pabulib(text).unwrap();
        assert_eq!(e.metadata["description"], "a; b");
        let back = parse_pabulib(&write_pabulib(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
