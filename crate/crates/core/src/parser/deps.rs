//! Prepositional dependencies extracted from parse trees.
//!
//! Conventions shared with the caption grammar: prepositions sit under the
//! preterminal `P` inside `PP -> P NP`; nouns sit under `N`; a clause is an
//! `S` whose first `NP` child is the subject. Head of an NP is its rightmost
//! noun not inside an embedded PP. A PP attached under an NP is governed by
//! the head of the sister NP; a PP attached under a VP is governed by the
//! head noun of the clause's subject.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::ParseTree;

pub const NOUN_PRETERM: &str = "N";
pub const PREP_PRETERM: &str = "P";
pub const PP_SYMBOL: &str = "PP";
pub const NP_SYMBOL: &str = "NP";
pub const VP_SYMBOL: &str = "VP";
pub const CLAUSE_SYMBOL: &str = "S";

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("PP at {0}..{1} has no NP child")]
    PpWithoutNp(usize, usize),
    #[error("PP at {0}..{1} has no preposition child")]
    PpWithoutPreposition(usize, usize),
    #[error("NP at {0}..{1} has no head noun")]
    NpWithoutHead(usize, usize),
    #[error("PP at {0}..{1} attached under `{2}`, expected NP or VP")]
    BadAttachmentSite(usize, usize, String),
    #[error("VP-attached PP at {0}..{1} has no subject NP in scope")]
    NoSubject(usize, usize),
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("attachment accuracy is undefined for empty ground truth")]
    EmptyGroundTruth,
}

/// A token occurrence: caption index plus its surface form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenRef {
    pub index: usize,
    pub lemma: String,
}

/// `prep(governor, dependent)`, e.g. on(woman-7, couch-10).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrepAttachment {
    pub prep: String,
    pub governor: TokenRef,
    pub dependent: TokenRef,
}

/// Wire form used by scenes.jsonl and parses.jsonl.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttachmentRecord {
    pub prep: String,
    pub gov_idx: usize,
    pub gov: String,
    pub dep_idx: usize,
    pub dep: String,
}

impl From<&PrepAttachment> for AttachmentRecord {
    fn from(a: &PrepAttachment) -> Self {
        AttachmentRecord {
            prep: a.prep.clone(),
            gov_idx: a.governor.index,
            gov: a.governor.lemma.clone(),
            dep_idx: a.dependent.index,
            dep: a.dependent.lemma.clone(),
        }
    }
}

impl From<&AttachmentRecord> for PrepAttachment {
    fn from(r: &AttachmentRecord) -> Self {
        PrepAttachment {
            prep: r.prep.clone(),
            governor: TokenRef { index: r.gov_idx, lemma: r.gov.clone() },
            dependent: TokenRef { index: r.dep_idx, lemma: r.dep.clone() },
        }
    }
}

/// One attachment per PP node, in left-to-right PP order.
pub fn extract_attachments(tree: &ParseTree) -> Result<Vec<PrepAttachment>, TreeError> {
    let mut out = Vec::new();
    walk(tree, None, &mut out)?;
    Ok(out)
}

fn walk(
    node: &ParseTree,
    subject: Option<&TokenRef>,
    out: &mut Vec<PrepAttachment>,
) -> Result<(), TreeError> {
    // Entering a clause rebinds the subject for everything below it.
    let own_subject = if node.symbol == CLAUSE_SYMBOL {
        node.children.iter().find(|c| c.symbol == NP_SYMBOL).and_then(head_noun)
    } else {
        None
    };
    let subject = own_subject.as_ref().or(subject);

    for (idx, child) in node.children.iter().enumerate() {
        if child.symbol == PP_SYMBOL {
            out.push(resolve_pp(node, idx, child, subject)?);
        }
        walk(child, subject, out)?;
    }
    Ok(())
}

fn resolve_pp(
    parent: &ParseTree,
    pp_index: usize,
    pp: &ParseTree,
    subject: Option<&TokenRef>,
) -> Result<PrepAttachment, TreeError> {
    let (start, end) = pp.span;
    let prep_node = pp
        .children
        .iter()
        .find(|c| c.symbol == PREP_PRETERM)
        .ok_or(TreeError::PpWithoutPreposition(start, end))?;
    let prep = prep_node
        .children
        .first()
        .filter(|l| l.is_leaf())
        .ok_or(TreeError::PpWithoutPreposition(start, end))?;
    let np = pp
        .children
        .iter()
        .find(|c| c.symbol == NP_SYMBOL)
        .ok_or(TreeError::PpWithoutNp(start, end))?;
    let dependent = head_noun(np).ok_or(TreeError::NpWithoutHead(np.span.0, np.span.1))?;

    let governor = match parent.symbol.as_str() {
        NP_SYMBOL => {
            // Rightmost head among the sisters left of the PP.
            parent.children[..pp_index]
                .iter()
                .rev()
                .find_map(head_noun)
                .ok_or(TreeError::NpWithoutHead(parent.span.0, parent.span.1))?
        }
        VP_SYMBOL => subject.cloned().ok_or(TreeError::NoSubject(start, end))?,
        other => return Err(TreeError::BadAttachmentSite(start, end, other.to_string())),
    };

    Ok(PrepAttachment {
        prep: prep.symbol.clone(),
        governor,
        dependent,
    })
}

/// Rightmost noun of the subtree that is not inside an embedded PP.
fn head_noun(node: &ParseTree) -> Option<TokenRef> {
    if node.symbol == NOUN_PRETERM {
        let leaf = node.children.first().filter(|l| l.is_leaf())?;
        return Some(TokenRef { index: leaf.span.0, lemma: leaf.symbol.clone() });
    }
    node.children
        .iter()
        .rev()
        .filter(|c| c.symbol != PP_SYMBOL)
        .find_map(head_noun)
}

/// Per ground-truth attachment: was it reproduced by some prediction?
/// A match requires equal preposition, governor lemma and dependent lemma
/// (token indices ignored); each prediction matches at most one gt entry.
pub fn matched_flags(pred: &[PrepAttachment], gt: &[PrepAttachment]) -> Vec<bool> {
    let mut used = vec![false; pred.len()];
    gt.iter()
        .map(|g| {
            for (idx, p) in pred.iter().enumerate() {
                if !used[idx]
                    && p.prep == g.prep
                    && p.governor.lemma == g.governor.lemma
                    && p.dependent.lemma == g.dependent.lemma
                {
                    used[idx] = true;
                    return true;
                }
            }
            false
        })
        .collect()
}

/// Fraction of ground-truth attachments reproduced, in [0, 1].
pub fn attachment_accuracy(
    pred: &[PrepAttachment],
    gt: &[PrepAttachment],
) -> Result<f64, MetricError> {
    if gt.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    let matched = matched_flags(pred, gt).iter().filter(|&&m| m).count();
    Ok(matched as f64 / gt.len() as f64)
}

/// Governor lemmas per preposition occurrence across several attachment
/// lists (one per parse). An occurrence is keyed by (preposition, dependent
/// token index): the dependent of a PP is the same in every reading, only
/// the attachment site varies, so an occurrence is ambiguous exactly when
/// this set has >= 2 entries.
pub fn governor_sets<'a>(
    attachment_lists: impl IntoIterator<Item = &'a [PrepAttachment]>,
) -> BTreeMap<(String, usize), BTreeSet<String>> {
    let mut map: BTreeMap<(String, usize), BTreeSet<String>> = BTreeMap::new();
    for list in attachment_lists {
        for att in list {
            map.entry((att.prep.clone(), att.dependent.index))
                .or_default()
                .insert(att.governor.lemma.clone());
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::super::grammar::load_grammar;
    use super::super::kbest::parse_kbest;
    use super::*;

    fn att(prep: &str, gov: (usize, &str), dep: (usize, &str)) -> PrepAttachment {
        PrepAttachment {
            prep: prep.into(),
            governor: TokenRef { index: gov.0, lemma: gov.1.into() },
            dependent: TokenRef { index: dep.0, lemma: dep.1.into() },
        }
    }

    const GRAMMAR: &str = "\
%start S
S -> NP VP # 1.0
NP -> Det N # 0.75
NP -> NP PP # 0.25
VP -> VCORE # 0.3
VP -> VCORE NP # 0.4
VP -> VP PP # 0.3
VCORE -> V # 1.0
PP -> P NP # 1.0
Det -> a # 1.0
N -> dog # 0.4
N -> woman # 0.3
N -> couch # 0.3
V -> sees # 1.0
P -> on # 1.0
";

    fn readings(sentence: &str) -> Vec<Vec<PrepAttachment>> {
        let g = load_grammar(GRAMMAR).unwrap();
        let tokens: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        parse_kbest(&g, &tokens, 10).unwrap().into_iter().map(|h| h.attachments).collect()
    }

    #[test]
    fn np_attachment_governed_by_sister_head() {
        let lists = readings("a dog sees a woman on a couch");
        let np_reading = lists
            .iter()
            .find(|l| l[0].governor.lemma == "woman")
            .expect("NP attachment reading present");
        assert_eq!(np_reading[0], att("on", (4, "woman"), (7, "couch")));
    }

    #[test]
    fn vp_attachment_governed_by_subject() {
        let lists = readings("a dog sees a woman on a couch");
        let vp_reading = lists
            .iter()
            .find(|l| l[0].governor.lemma == "dog")
            .expect("VP attachment reading present");
        assert_eq!(vp_reading[0], att("on", (1, "dog"), (7, "couch")));
    }

    #[test]
    fn tree_without_pp_yields_nothing() {
        let lists = readings("a dog sees a woman");
        assert_eq!(lists.len(), 1);
        assert!(lists[0].is_empty());
    }

    #[test]
    fn malformed_pp_is_an_error() {
        // Hand-built PP with a P child but no NP.
        let pp = ParseTree {
            symbol: "PP".into(),
            span: (0, 1),
            log_prob: 0.0,
            children: vec![ParseTree {
                symbol: "P".into(),
                span: (0, 1),
                log_prob: 0.0,
                children: vec![ParseTree {
                    symbol: "on".into(),
                    span: (0, 1),
                    log_prob: 0.0,
                    children: vec![],
                }],
            }],
        };
        let np = ParseTree {
            symbol: "NP".into(),
            span: (0, 1),
            log_prob: 0.0,
            children: vec![ParseTree {
                symbol: "N".into(),
                span: (0, 1),
                log_prob: 0.0,
                children: vec![ParseTree {
                    symbol: "dog".into(),
                    span: (0, 1),
                    log_prob: 0.0,
                    children: vec![],
                }],
            }],
        };
        let tree = ParseTree {
            symbol: "NP".into(),
            span: (0, 2),
            log_prob: 0.0,
            children: vec![np, pp],
        };
        assert!(matches!(extract_attachments(&tree), Err(TreeError::PpWithoutNp(..))));
    }

    #[test]
    fn accuracy_examples() {
        let gt = vec![att("on", (0, "woman"), (1, "couch")), att("next_to", (2, "dog"), (3, "woman"))];
        assert_eq!(attachment_accuracy(&gt, &gt).unwrap(), 1.0);

        let pred = vec![att("on", (0, "dog"), (1, "couch")), att("next_to", (9, "dog"), (8, "woman"))];
        assert_eq!(attachment_accuracy(&pred, &gt).unwrap(), 0.5);

        assert_eq!(attachment_accuracy(&[], &gt).unwrap(), 0.0);
        assert!(matches!(attachment_accuracy(&gt, &[]), Err(MetricError::EmptyGroundTruth)));
    }

    #[test]
    fn each_gt_matches_at_most_one_prediction() {
        let gt = vec![
            att("on", (0, "woman"), (1, "couch")),
            att("on", (2, "woman"), (3, "couch")),
        ];
        let pred = vec![att("on", (5, "woman"), (6, "couch"))];
        assert_eq!(attachment_accuracy(&pred, &gt).unwrap(), 0.5);
    }

    #[test]
    fn governor_sets_detect_ambiguity() {
        let lists = readings("a dog sees a woman on a couch");
        let refs: Vec<&[PrepAttachment]> = lists.iter().map(|l| l.as_slice()).collect();
        let map = governor_sets(refs);
        let govs = &map[&("on".to_string(), 7)];
        assert_eq!(govs.len(), 2);
        assert!(govs.contains("dog") && govs.contains("woman"));
    }
}
