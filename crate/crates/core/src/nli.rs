//! Post-hoc entailment diagnostics between an original rule and its
//! reconstruction. Nothing in the repair loop reads these values.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub e_fwd: f64,
    pub e_bwd: f64,
    pub c_fwd: f64,
    pub c_bwd: f64,
}

impl NliScores {
    pub fn new(e_fwd: f64, e_bwd: f64, c_fwd: f64, c_bwd: f64) -> Result<Self, NliError> {
        let s = NliScores { e_fwd, e_bwd, c_fwd, c_bwd };
        for (name, v) in [("e_fwd", e_fwd), ("e_bwd", e_bwd), ("c_fwd", c_fwd), ("c_bwd", c_bwd)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(NliError::OutOfRange { name, value: v });
            }
        }
        Ok(s)
    }

    pub fn e_min(&self) -> f64 {
        self.e_fwd.min(self.e_bwd)
    }

    pub fn c_max(&self) -> f64 {
        self.c_fwd.max(self.c_bwd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NliCategory {
    Equivalent,
    Related,
    Strengthened,
    Weakened,
    Unrelated,
    Contradiction,
}

impl NliCategory {
    /// Column order of the cross-tabulation.
    pub const ALL: [NliCategory; 6] = [
        NliCategory::Equivalent,
        NliCategory::Related,
        NliCategory::Strengthened,
        NliCategory::Weakened,
        NliCategory::Unrelated,
        NliCategory::Contradiction,
    ];

    pub fn short(self) -> &'static str {
        match self {
            NliCategory::Equivalent => "Eq",
            NliCategory::Related => "Re",
            NliCategory::Strengthened => "St",
            NliCategory::Weakened => "Wk",
            NliCategory::Unrelated => "Un",
            NliCategory::Contradiction => "Co",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NliError {
    #[error("score {name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("cannot start scorer `{0}`: {1}")]
    ScorerNotFound(String, String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("scorer probabilities sum to {0}, not 1")]
    NotNormalized(f64),
}

/// The decision tree; the first matching test wins.
pub fn classify(s: &NliScores) -> Result<NliCategory, NliError> {
    let s = NliScores::new(s.e_fwd, s.e_bwd, s.c_fwd, s.c_bwd)?;
    let (e_min, c_max) = (s.e_min(), s.c_max());
    Ok(if c_max >= 0.6 {
        NliCategory::Contradiction
    } else if e_min >= 0.7 && c_max < 0.2 {
        NliCategory::Equivalent
    } else if s.e_fwd >= 0.6 && s.e_bwd < 0.4 {
        NliCategory::Strengthened
    } else if s.e_bwd >= 0.6 && s.e_fwd < 0.4 {
        NliCategory::Weakened
    } else if e_min >= 0.3 && c_max < 0.3 {
        NliCategory::Related
    } else {
        NliCategory::Unrelated
    })
}

/// Entailment and contradiction probability for one direction.
pub trait NliScorer: Send + Sync {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<(f64, f64), NliError>;
}

const NEGATIONS: [&str; 5] = ["not", "no", "never", "except", "unless"];

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word-overlap stand-in for an NLI model; deterministic and crude.
pub fn score_lexical_baseline(premise: &str, hypothesis: &str) -> (f64, f64) {
    let p = tokens(premise);
    let h = tokens(hypothesis);
    let entailment = if h.is_empty() {
        1.0
    } else {
        h.intersection(&p).count() as f64 / h.len() as f64
    };
    let negated = |s: &BTreeSet<String>| NEGATIONS.iter().any(|n| s.contains(*n));
    let contradiction = if negated(&p) != negated(&h) { 0.8 } else { 0.0 };
    (entailment, contradiction)
}

pub struct LexicalBaseline;

impl NliScorer for LexicalBaseline {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<(f64, f64), NliError> {
        Ok(score_lexical_baseline(premise, hypothesis))
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct ScoreReply {
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

/// Checks one scorer reply line and returns (entailment, contradiction).
pub fn parse_scorer_reply(line: &str) -> Result<(f64, f64), NliError> {
    let r: ScoreReply =
        serde_json::from_str(line.trim()).map_err(|e| NliError::Protocol(format!("{e}: {:?}", line.trim())))?;
    for v in [r.entailment, r.neutral, r.contradiction] {
        if !(0.0..=1.0).contains(&v) {
            return Err(NliError::Protocol(format!("probability {v} outside [0, 1]")));
        }
    }
    let sum = r.entailment + r.neutral + r.contradiction;
    if (sum - 1.0).abs() > 0.01 {
        return Err(NliError::NotNormalized(sum));
    }
    Ok((r.entailment, r.contradiction))
}

struct ScorerProcess {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A long-lived scorer process speaking newline-delimited JSON: one
/// `{premise, hypothesis}` request per line, one probability line back.
pub struct ExternalScorer {
    command: Vec<String>,
    process: Mutex<Option<ScorerProcess>>,
}

impl ExternalScorer {
    pub fn new(command: Vec<String>) -> Result<Self, NliError> {
        if command.is_empty() {
            return Err(NliError::ScorerNotFound(String::new(), "empty command".into()));
        }
        Ok(ExternalScorer {
            command,
            process: Mutex::new(None),
        })
    }

    fn spawn(&self) -> Result<ScorerProcess, NliError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| NliError::ScorerNotFound(self.command.join(" "), e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ScorerProcess { child, stdin, stdout })
    }
}

impl NliScorer for ExternalScorer {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<(f64, f64), NliError> {
        let mut guard = self.process.lock().unwrap();
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let proc = guard.as_mut().unwrap();
        let mut request = serde_json::to_string(&ScoreRequest { premise, hypothesis }).expect("serializable");
        request.push('\n');
        let mut line = String::new();
        let io = proc
            .stdin
            .write_all(request.as_bytes())
            .and_then(|_| proc.stdin.flush())
            .and_then(|_| proc.stdout.read_line(&mut line));
        match io {
            Ok(n) if n > 0 => parse_scorer_reply(&line),
            Ok(_) => {
                *guard = None;
                Err(NliError::Protocol("scorer closed its output".into()))
            }
            Err(e) => {
                *guard = None;
                Err(NliError::Protocol(e.to_string()))
            }
        }
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Some(mut p) = self.process.lock().ok().and_then(|mut g| g.take()) {
            drop(p.stdin);
            let _ = p.child.wait();
        }
    }
}

/// Scores both directions and classifies.
pub fn assess_pair(x: &str, x_prime: &str, scorer: &dyn NliScorer) -> Result<(NliScores, NliCategory), NliError> {
    let (e_fwd, c_fwd) = scorer.score(x, x_prime)?;
    let (e_bwd, c_bwd) = scorer.score(x_prime, x)?;
    let scores = NliScores::new(e_fwd, e_bwd, c_fwd, c_bwd)?;
    let category = classify(&scores)?;
    Ok((scores, category))
}
