//! Complexity-labelled question sets.
//!
//! On disk a split is JSON Lines, one record per query:
//! `{"id": .., "question": .., "complexity": "A", "answers": [..], "split": "train"}`.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::stream;
use crate::simulation::{ContextLabel, Query};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("cannot balance {n_train} train / {n_test} test queries over three labels")]
    UnbalancedRequest { n_train: usize, n_test: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    question: Option<String>,
    complexity: String,
    answers: Vec<String>,
    split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplit {
    pub train: Vec<Query>,
    pub test: Vec<Query>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSON Lines form; train records first.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (split, queries) in [("train", &self.train), ("test", &self.test)] {
            for q in queries {
                let rec = Record {
                    id: q.id.clone(),
                    question: q.text.clone(),
                    complexity: q.context.as_str().to_string(),
                    answers: q.gold_answers.clone(),
                    split: split.to_string(),
                };
                out.push_str(&serde_json::to_string(&rec).expect("records always serialize"));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut split = DatasetSplit::default();
        let mut ids = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: Record =
                serde_json::from_str(raw).map_err(|e| DatasetError::Parse { line, message: e.to_string() })?;
            let invalid = |message: String| DatasetError::Validation { line, message };
            let context: ContextLabel = rec
                .complexity
                .parse()
                .map_err(|_| invalid(format!("complexity `{}` is not one of A, B, C", rec.complexity)))?;
            if rec.answers.is_empty() {
                return Err(invalid(format!("record `{}` has no answers", rec.id)));
            }
            if !ids.insert(rec.id.clone()) {
                return Err(invalid(format!("duplicate id `{}`", rec.id)));
            }
            let query = Query { id: rec.id, text: rec.question, context, gold_answers: rec.answers };
            match rec.split.as_str() {
                "train" => split.train.push(query),
                "test" => split.test.push(query),
                other => return Err(invalid(format!("split `{other}` is not `train` or `test`"))),
            }
        }
        Ok(split)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        crate::persist::write_atomic(path, self.serialize().as_bytes())
            .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    /// Hex SHA-256 of the serialized split, used to check that two reports
    /// were computed on the same data.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.serialize().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Queries per label, indexed by [`ContextLabel::index`].
pub fn label_counts(queries: &[Query]) -> [usize; 3] {
    let mut counts = [0; 3];
    for q in queries {
        counts[q.context.index()] += 1;
    }
    counts
}

/// Per-label counts differ by at most one.
pub fn is_balanced(queries: &[Query]) -> bool {
    let c = label_counts(queries);
    c.iter().max().unwrap() - c.iter().min().unwrap() <= 1
}

const SYLLABLES: [&str; 16] =
    ["ka", "lo", "mi", "ren", "su", "ta", "vo", "zel", "bri", "dun", "fa", "gor", "hal", "ist", "jun", "ne"];

fn synth_word<R: Rng>(rng: &mut R) -> String {
    (0..rng.random_range(2..=3)).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

fn synth_queries<R: Rng>(prefix: &str, n: usize, rng: &mut R) -> Vec<Query> {
    (0..n)
        .map(|i| {
            let context = ContextLabel::ALL[i % 3];
            let subject = synth_word(rng);
            let answer = format!("{} {}", synth_word(rng), synth_word(rng));
            Query {
                id: format!("{prefix}-{i:04}"),
                text: Some(format!("What is the {subject} of the {context} question {i}?")),
                context,
                gold_answers: vec![answer],
            }
        })
        .collect()
}

/// Synthetic split with round-robin labels; leftover queries go to A, then B.
pub fn synthesize(n_train: usize, n_test: usize, seed: u64) -> Result<DatasetSplit, DatasetError> {
    if n_train < 3 || n_test < 3 {
        return Err(DatasetError::UnbalancedRequest { n_train, n_test });
    }
    let mut rng = stream(seed, &[0xda7a]);
    let train = synth_queries("train", n_train, &mut rng);
    let test = synth_queries("test", n_test, &mut rng);
    Ok(DatasetSplit { train, test })
}
