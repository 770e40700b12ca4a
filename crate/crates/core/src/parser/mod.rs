//! PCFG parsing module: grammar, exact k-best chart parsing, and
//! prepositional-dependency extraction.

pub mod deps;
pub mod grammar;
pub mod kbest;
pub mod tree;

pub use deps::{
    attachment_accuracy, extract_attachments, governor_sets, matched_flags, AttachmentRecord,
    MetricError, PrepAttachment, TokenRef, TreeError,
};
pub use grammar::{load_grammar, Grammar, GrammarError, Rule, RuleBody};
pub use kbest::{parse_kbest, ParseError, ParseHypothesis};
pub use tree::ParseTree;

use serde::{Deserialize, Serialize};

/// One line of parses.jsonl.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParsesRecord {
    pub scene_id: String,
    pub k: usize,
    pub hypotheses: Vec<ParseHypRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseHypRecord {
    pub rank: usize,
    pub log_prob: f64,
    pub tree: String,
    pub attachments: Vec<AttachmentRecord>,
}

impl ParsesRecord {
    pub fn from_hypotheses(scene_id: &str, k: usize, hyps: &[ParseHypothesis]) -> Self {
        ParsesRecord {
            scene_id: scene_id.to_string(),
            k,
            hypotheses: hyps
                .iter()
                .map(|h| ParseHypRecord {
                    rank: h.rank,
                    log_prob: h.score,
                    tree: h.tree.bracketed(),
                    attachments: h.attachments.iter().map(AttachmentRecord::from).collect(),
                })
                .collect(),
        }
    }
}

impl ParseHypRecord {
    pub fn attachments(&self) -> Vec<PrepAttachment> {
        self.attachments.iter().map(PrepAttachment::from).collect()
    }
}
