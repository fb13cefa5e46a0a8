//! Scores from a child process: the instance is written to its stdin in the
//! flat format and one line of whitespace- or comma-separated numbers is
//! read back. For experiments only.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::data::{write_pabulib, DatasetEntry};
use crate::model::{Instance, Profile};
use crate::rules::{RuleError, ScoreRule};

#[derive(Debug, Clone)]
pub struct ExternalRule {
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl ExternalRule {
    /// `command` is split on whitespace into program and arguments.
    pub fn new(command: &str, timeout: Duration) -> Option<Self> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts.next()?;
        Some(Self { program, args: parts.collect(), timeout })
    }

    fn fail(&self, message: impl Into<String>) -> RuleError {
        RuleError::Scorer { rule: self.label(), message: message.into() }
    }
}

pub fn parse_score_line(line: &str) -> Result<Vec<f64>, String> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
        .collect()
}

impl ScoreRule for ExternalRule {
    fn label(&self) -> String {
        let mut s = format!("ext:{}", self.program);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s
    }

    fn scores(&self, instance: &Instance, profile: &Profile) -> Result<Vec<f64>, RuleError> {
        let entry = DatasetEntry::new(instance.clone(), profile.clone(), Default::default());
        let input = write_pabulib(&entry).map_err(|e| self.fail(e.to_string()))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| self.fail(format!("spawn failed: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // a child that exits without reading closes the pipe; not an error here
            let _ = stdin.write_all(input.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut out = String::new();
            stdout.read_to_string(&mut out).map(|_| out)
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait().map_err(|e| self.fail(e.to_string()))? {
                Some(status) => break status,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(self.fail(format!("timed out after {:?}", self.timeout)));
                }
                None => thread::sleep(Duration::from_millis(5)),
            }
        };
        let _ = writer.join();
        let out = reader
            .join()
            .map_err(|_| self.fail("reader thread panicked"))?
            .map_err(|e| self.fail(e.to_string()))?;
        if !status.success() {
            return Err(self.fail(format!("exited with {status}")));
        }
        let line = out.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let scores = parse_score_line(line).map_err(|e| self.fail(e))?;
        if scores.len() != instance.num_projects() {
            return Err(RuleError::ScoreLength { got: scores.len(), expected: instance.num_projects() });
        }
        Ok(scores)
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn inst() -> (Instance, Profile) {
        let inst = Instance::from_costs(&[60, 50, 40], 100).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1, 2]]).unwrap();
        (inst, prof)
    }

    #[test]
    fn reads_one_line_of_scores() {
        let (i, p) = inst();
        let rule = ExternalRule {
            program: "sh".into(),
            args: vec!["-c".into(), "cat >/dev/null; echo 1, 2.5 3".into()],
            timeout: Duration::from_secs(5),
        };
        assert_eq!(rule.scores(&i, &p).unwrap(), vec![1.0, 2.5, 3.0]);
    }

    #[test]
    fn wrong_length_and_failure() {
        let (i, p) = inst();
        let rule = ExternalRule { program: "sh".into(), args: vec!["-c".into(), "echo 1 2".into()], timeout: Duration::from_secs(5) };
        assert!(matches!(rule.scores(&i, &p), Err(RuleError::ScoreLength { got: 2, expected: 3 })));
        let rule = ExternalRule { program: "sh".into(), args: vec!["-c".into(), "exit 3".into()], timeout: Duration::from_secs(5) };
        assert!(rule.scores(&i, &p).is_err());
        let rule = ExternalRule { program: "sh".into(), args: vec!["-c".into(), "sleep 5".into()], timeout: Duration::from_millis(100) };
        assert!(matches!(rule.scores(&i, &p), Err(RuleError::Scorer { .. })));
    }

    #[test]
    fn command_splitting() {
        let rule = ExternalRule::new("python3 rule.py --fast", Duration::from_secs(1)).unwrap();
        assert_eq!(rule.label(), "ext:python3 rule.py --fast");
        assert!(ExternalRule::new("  ", Duration::from_secs(1)).is_none());
    }

    #[test]
    fn score_line_parsing() {
        assert_eq!(parse_score_line(" 1,2 ,3 ").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_score_line("1 x").is_err());
    }
}
