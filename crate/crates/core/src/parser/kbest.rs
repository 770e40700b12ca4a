//! Exact k-best CKY over the binarized grammar.
//!
//! Every chart cell keeps the full top-k derivation list per category
//! (naive per-item k-best merging). Derivations are ordered by
//! (-log_prob, tie key) where the tie key is the sequence of original rule
//! ids in leftmost-innermost (post-order) order, so the output is a total,
//! reproducible order that a brute-force enumerator can match exactly.

use std::rc::Rc;

use thiserror::Error;

use super::deps::{extract_attachments, PrepAttachment, TreeError};
use super::grammar::{Grammar, RuleId};
use super::tree::ParseTree;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("k must be >= 1")]
    ZeroK,
    #[error("token `{token}` at position {index} is not in the lexicon")]
    UnknownToken { token: String, index: usize },
    #[error("no parse: cannot cover span {start}..{end} (`{text}`)")]
    Unparseable { start: usize, end: usize, text: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// One entry of a k-best list.
#[derive(Debug, Clone)]
pub struct ParseHypothesis {
    pub tree: ParseTree,
    /// 1-based position in the k-best list.
    pub rank: usize,
    /// Derivation log-probability (the module score).
    pub score: f64,
    pub attachments: Vec<PrepAttachment>,
}

struct Deriv {
    log_prob: f64,
    key: Vec<RuleId>,
    span: (usize, usize),
    node: DerivNode,
}

enum DerivNode {
    Leaf { token_index: usize, rule: RuleId },
    Unary { rule: RuleId, child: Rc<Deriv> },
    Binary { rule: Option<RuleId>, left: Rc<Deriv>, right: Rc<Deriv> },
}

fn better(a: &Deriv, b: &Deriv) -> std::cmp::Ordering {
    b.log_prob.partial_cmp(&a.log_prob).expect("log-probs are never NaN").then_with(|| a.key.cmp(&b.key))
}

pub fn parse_kbest(
    g: &Grammar,
    tokens: &[String],
    k: usize,
) -> Result<Vec<ParseHypothesis>, ParseError> {
    if k == 0 {
        return Err(ParseError::ZeroK);
    }
    for (index, token) in tokens.iter().enumerate() {
        if !g.has_token(token) {
            return Err(ParseError::UnknownToken { token: token.clone(), index });
        }
    }
    let n = tokens.len();
    if n == 0 {
        return Err(ParseError::Unparseable { start: 0, end: 0, text: String::new() });
    }

    let cell = |i: usize, j: usize| i * (n + 1) + j;
    let mut chart: Vec<Vec<Vec<Rc<Deriv>>>> = vec![Vec::new(); (n + 1) * (n + 1)];
    for c in chart.iter_mut() {
        c.resize_with(g.n_cats, Vec::new);
    }

    for (i, token) in tokens.iter().enumerate() {
        for &(preterm, rule) in &g.lexical[token] {
            let lp = g.rules()[rule as usize].log_prob;
            chart[cell(i, i + 1)][preterm].push(Rc::new(Deriv {
                log_prob: lp,
                key: vec![rule],
                span: (i, i + 1),
                node: DerivNode::Leaf { token_index: i, rule },
            }));
        }
        finish_cell(g, &mut chart[cell(i, i + 1)], k);
    }

    for len in 2..=n {
        for i in 0..=(n - len) {
            let j = i + len;
            let mut fresh: Vec<Vec<Rc<Deriv>>> = vec![Vec::new(); g.n_cats];
            for m in (i + 1)..j {
                let (head, tail) = chart.split_at(cell(m, j));
                let left_cell = &head[cell(i, m)];
                let right_cell = &tail[0];
                for rule in &g.binary {
                    let lefts = &left_cell[rule.left];
                    if lefts.is_empty() {
                        continue;
                    }
                    let rights = &right_cell[rule.right];
                    for l in lefts {
                        for r in rights {
                            fresh[rule.lhs].push(Rc::new(combine(rule, l, r, (i, j))));
                        }
                    }
                }
            }
            let target = &mut chart[cell(i, j)];
            *target = fresh;
            finish_cell(g, target, k);
        }
    }

    let root = &chart[cell(0, n)][g.start()];
    if root.is_empty() {
        let (start, end) = first_uncoverable_span(&chart, cell, n, g.n_cats);
        return Err(ParseError::Unparseable { start, end, text: tokens[start..end].join(" ") });
    }

    let mut out = Vec::with_capacity(root.len().min(k));
    for (idx, deriv) in root.iter().take(k).enumerate() {
        let tree = build_tree(g, deriv, tokens);
        let attachments = extract_attachments(&tree)?;
        out.push(ParseHypothesis { tree, rank: idx + 1, score: deriv.log_prob, attachments });
    }
    Ok(out)
}

fn combine(rule: &super::grammar::BinRule, l: &Rc<Deriv>, r: &Rc<Deriv>, span: (usize, usize)) -> Deriv {
    // Synthetic steps add no log-prob term and no key entry, so the totals
    // below equal the canonical left-fold over the original rule's children.
    let log_prob = match rule.rule {
        Some(_) => (l.log_prob + r.log_prob) + rule.log_prob,
        None => l.log_prob + r.log_prob,
    };
    let mut key = Vec::with_capacity(l.key.len() + r.key.len() + 1);
    key.extend_from_slice(&l.key);
    key.extend_from_slice(&r.key);
    if let Some(rid) = rule.rule {
        key.push(rid);
    }
    Deriv { log_prob, key, span, node: DerivNode::Binary { rule: rule.rule, left: Rc::clone(l), right: Rc::clone(r) } }
}

/// Sort and truncate every category list, then run the unary closure in
/// topological order (each unary child list is final before it is consumed).
fn finish_cell(g: &Grammar, cats: &mut [Vec<Rc<Deriv>>], k: usize) {
    for list in cats.iter_mut() {
        sort_truncate(list, k);
    }
    let mut current = 0;
    while current < g.unary_topo.len() {
        // All rules sharing an LHS extend it together before it is sorted.
        let lhs = g.unary_topo[current].lhs;
        let mut fresh: Vec<Rc<Deriv>> = Vec::new();
        while current < g.unary_topo.len() && g.unary_topo[current].lhs == lhs {
            let u = &g.unary_topo[current];
            for child in &cats[u.child] {
                let mut key = Vec::with_capacity(child.key.len() + 1);
                key.extend_from_slice(&child.key);
                key.push(u.rule);
                fresh.push(Rc::new(Deriv {
                    log_prob: child.log_prob + u.log_prob,
                    key,
                    span: child.span,
                    node: DerivNode::Unary { rule: u.rule, child: Rc::clone(child) },
                }));
            }
            current += 1;
        }
        cats[lhs].extend(fresh);
        sort_truncate(&mut cats[lhs], k);
    }
}

fn sort_truncate(list: &mut Vec<Rc<Deriv>>, k: usize) {
    list.sort_by(|a, b| better(a, b));
    list.truncate(k);
}

/// Shortest, leftmost span no category covers; used for error reporting.
fn first_uncoverable_span(
    chart: &[Vec<Vec<Rc<Deriv>>>],
    cell: impl Fn(usize, usize) -> usize,
    n: usize,
    n_cats: usize,
) -> (usize, usize) {
    for len in 1..=n {
        for i in 0..=(n - len) {
            let c = &chart[cell(i, i + len)];
            if (0..n_cats).all(|cat| c[cat].is_empty()) {
                return (i, i + len);
            }
        }
    }
    (0, n)
}

fn build_tree(g: &Grammar, d: &Deriv, tokens: &[String]) -> ParseTree {
    match &d.node {
        DerivNode::Leaf { token_index, rule } => {
            let lhs = g.rules()[*rule as usize].lhs;
            ParseTree {
                symbol: g.symbol_name(lhs).to_string(),
                span: d.span,
                log_prob: d.log_prob,
                children: vec![ParseTree {
                    symbol: tokens[*token_index].clone(),
                    span: d.span,
                    log_prob: 0.0,
                    children: vec![],
                }],
            }
        }
        DerivNode::Unary { rule, child } => {
            let lhs = g.rules()[*rule as usize].lhs;
            ParseTree {
                symbol: g.symbol_name(lhs).to_string(),
                span: d.span,
                log_prob: d.log_prob,
                children: vec![build_tree(g, child, tokens)],
            }
        }
        DerivNode::Binary { rule, left, right } => {
            let rid = rule.expect("synthetic step cannot be a tree root");
            let lhs = g.rules()[rid as usize].lhs;
            let mut children = Vec::new();
            collect_children(g, left, tokens, &mut children);
            collect_children(g, right, tokens, &mut children);
            ParseTree {
                symbol: g.symbol_name(lhs).to_string(),
                span: d.span,
                log_prob: d.log_prob,
                children,
            }
        }
    }
}

/// Splice synthetic binarization nodes back into their parent's child list.
fn collect_children(g: &Grammar, d: &Rc<Deriv>, tokens: &[String], out: &mut Vec<ParseTree>) {
    match &d.node {
        DerivNode::Binary { rule: None, left, right } => {
            collect_children(g, left, tokens, out);
            collect_children(g, right, tokens, out);
        }
        _ => out.push(build_tree(g, d, tokens)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::grammar::load_grammar;
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    const AMBIG: &str = "\
%start S
S -> NP VP # 1.0
NP -> Det N # 0.75
NP -> NP PP # 0.25
VP -> VCORE # 0.3
VP -> VCORE NP # 0.4
VP -> VP PP # 0.3
VCORE -> V # 0.6
VCORE -> AUX V # 0.4
PP -> P NP # 1.0
Det -> a # 1.0
AUX -> is # 1.0
N -> dog # 0.4
N -> woman # 0.3
N -> couch # 0.3
V -> sees # 0.5
V -> standing # 0.5
P -> on # 0.5
P -> next_to # 0.5
";

    #[test]
    fn paper_sentence_contains_both_readings() {
        let g = load_grammar(AMBIG).unwrap();
        let hyps =
            parse_kbest(&g, &toks("a dog is standing next_to a woman on a couch"), 10).unwrap();
        assert_eq!(hyps.len(), 2);
        let readings: Vec<(String, String)> = hyps
            .iter()
            .map(|h| {
                let on = h.attachments.iter().find(|a| a.prep == "on").unwrap();
                (on.governor.lemma.clone(), on.dependent.lemma.clone())
            })
            .collect();
        assert!(readings.contains(&("woman".into(), "couch".into())));
        assert!(readings.contains(&("dog".into(), "couch".into())));
        // next_to is unambiguous: the dog in every reading.
        for h in &hyps {
            let nt = h.attachments.iter().find(|a| a.prep == "next_to").unwrap();
            assert_eq!(nt.governor.lemma, "dog");
            assert_eq!(nt.dependent.lemma, "woman");
        }
    }

    #[test]
    fn k_truncates_to_derivation_count() {
        let g = load_grammar(AMBIG).unwrap();
        let hyps = parse_kbest(&g, &toks("a dog sees a woman"), 10).unwrap();
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0].rank, 1);
    }

    #[test]
    fn scores_non_increasing_and_prefix_stable() {
        let g = load_grammar(AMBIG).unwrap();
        let sent = toks("a dog sees a woman on a couch next_to a dog");
        let all = parse_kbest(&g, &sent, 50).unwrap();
        assert!(all.len() >= 4);
        for pair in all.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        for k in 1..=all.len() {
            let some = parse_kbest(&g, &sent, k).unwrap();
            assert_eq!(some.len(), k);
            for (a, b) in some.iter().zip(&all) {
                assert_eq!(a.tree, b.tree);
            }
        }
    }

    #[test]
    fn tree_log_prob_matches_rule_sum() {
        let g = load_grammar(AMBIG).unwrap();
        let hyps =
            parse_kbest(&g, &toks("a dog is standing next_to a woman on a couch"), 10).unwrap();
        for h in &hyps {
            let recomputed = h.tree.log_prob_from_rules(&g).unwrap();
            assert!((recomputed - h.score).abs() < 1e-9);
            assert_eq!(h.tree.log_prob, h.score);
        }
    }

    #[test]
    fn unknown_token_reported() {
        let g = load_grammar(AMBIG).unwrap();
        match parse_kbest(&g, &toks("a zebra sees a woman"), 5) {
            Err(ParseError::UnknownToken { token, index }) => {
                assert_eq!(token, "zebra");
                assert_eq!(index, 1);
            }
            other => panic!("expected unknown token, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_names_first_uncoverable_span() {
        let g = load_grammar(AMBIG).unwrap();
        match parse_kbest(&g, &toks("dog a sees"), 5) {
            Err(ParseError::Unparseable { start, end, text }) => {
                // Every single token is covered; the leftmost length-2 span
                // `dog a` is the first that nothing derives.
                assert_eq!((start, end), (0, 2));
                assert_eq!(text, "dog a");
            }
            other => panic!("expected unparseable, got {other:?}"),
        }
    }

    #[test]
    fn ternary_rule_round_trips_through_binarization() {
        let g = load_grammar(
            "\
%start S
S -> NP V NP # 1.0
NP -> dog # 0.5
NP -> cat # 0.5
V -> sees # 1.0
",
        )
        .unwrap();
        let hyps = parse_kbest(&g, &toks("dog sees cat"), 3).unwrap();
        assert_eq!(hyps.len(), 1);
        let tree = &hyps[0].tree;
        assert_eq!(tree.symbol, "S");
        assert_eq!(tree.children.len(), 3);
        assert_eq!(tree.bracketed(), "(S (NP dog) (V sees) (NP cat))");
    }
}
