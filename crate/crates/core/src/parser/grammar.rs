//! PCFG grammar: text format, validation, and the binarized form used by the
//! chart parser.
//!
//! File format, one production per line:
//!
//! ```text
//! %start S
//! S -> NP VP # 1.0        (syntactic rule: every RHS symbol is a nonterminal)
//! N -> dog # 0.25         (lexicon entry: single RHS token that is not an LHS)
//! # comment
//! ```
//!
//! A symbol is a nonterminal iff it appears as the LHS of some production.
//! Probabilities of all productions sharing an LHS must sum to 1 within 1e-9.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

pub type SymbolId = usize;
pub type RuleId = u32;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("line {line}: cannot parse production: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: invalid probability {prob}")]
    BadProbability { line: usize, prob: f64 },
    #[error("line {line}: duplicate rule `{rule}`")]
    DuplicateRule { line: usize, rule: String },
    #[error("line {line}: unknown symbol `{symbol}` on right-hand side")]
    UnknownSymbol { line: usize, symbol: String },
    #[error("productions of `{symbol}` sum to {sum:.12} (expected 1 within 1e-9)")]
    ProbabilitySum { symbol: String, sum: f64 },
    #[error("start symbol `{0}` has no productions")]
    MissingStart(String),
    #[error("nonterminal `{0}` cannot derive any token sequence")]
    Unproductive(String),
    #[error("unary rule cycle involving `{0}`")]
    UnaryCycle(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleBody {
    /// RHS nonterminal sequence (length >= 1).
    Syntactic(Vec<SymbolId>),
    /// Single terminal token.
    Lexical(String),
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub lhs: SymbolId,
    pub body: RuleBody,
    pub prob: f64,
    pub log_prob: f64,
}

/// Chart category: original nonterminals first, then synthetic symbols
/// introduced by binarization.
pub(crate) type Cat = usize;

/// One binary step of the left-branching binarization. `rule` is set on the
/// step that completes an original rule (and carries its log-prob); inner
/// synthetic steps carry `None` and log-prob 0 so that a derivation's total
/// log-prob matches the canonical left-fold over the original tree exactly.
#[derive(Debug, Clone)]
pub(crate) struct BinRule {
    pub lhs: Cat,
    pub left: Cat,
    pub right: Cat,
    pub rule: Option<RuleId>,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct UnaryRule {
    pub lhs: SymbolId,
    pub child: SymbolId,
    pub rule: RuleId,
    pub log_prob: f64,
}

#[derive(Debug)]
pub struct Grammar {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, SymbolId>,
    start: SymbolId,
    rules: Vec<Rule>,
    // Parsing machinery.
    pub(crate) n_cats: usize,
    pub(crate) binary: Vec<BinRule>,
    /// Unary rules ordered so a rule's child symbol is fully closed before
    /// any rule that consumes it (valid because cycles are rejected).
    pub(crate) unary_topo: Vec<UnaryRule>,
    pub(crate) lexical: HashMap<String, Vec<(SymbolId, RuleId)>>,
}

impl Grammar {
    pub fn start(&self) -> SymbolId {
        self.start
    }

    pub fn symbol_name(&self, id: SymbolId) -> &str {
        &self.symbols[id]
    }

    pub fn symbol_id(&self, name: &str) -> Option<SymbolId> {
        self.symbol_ids.get(name).copied()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn has_token(&self, token: &str) -> bool {
        self.lexical.contains_key(token)
    }

    /// Lexicon tokens of one preterminal, in rule order.
    pub fn tokens_of(&self, preterm: &str) -> Vec<&str> {
        let Some(id) = self.symbol_id(preterm) else {
            return Vec::new();
        };
        self.rules
            .iter()
            .filter_map(|r| match (&r.body, r.lhs) {
                (RuleBody::Lexical(t), lhs) if lhs == id => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Log-prob of the rule `lhs -> rhs`, where each rhs element is either a
    /// nonterminal name or a lexicon token.
    pub fn rule_log_prob(&self, lhs: &str, rhs: &[&str]) -> Option<f64> {
        let lhs_id = self.symbol_id(lhs)?;
        self.rules.iter().find_map(|r| {
            if r.lhs != lhs_id {
                return None;
            }
            let matches = match &r.body {
                RuleBody::Lexical(tok) => rhs.len() == 1 && rhs[0] == tok,
                RuleBody::Syntactic(ids) => {
                    ids.len() == rhs.len()
                        && ids.iter().zip(rhs).all(|(id, name)| self.symbols[*id] == **name)
                }
            };
            matches.then_some(r.log_prob)
        })
    }
}

struct RawLine {
    line: usize,
    lhs: String,
    rhs: Vec<String>,
    prob: f64,
}

pub fn load_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut raw = Vec::new();
    let mut start_name: Option<String> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("%start") {
            let name = rest.trim();
            if name.is_empty() {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    msg: "%start needs a symbol".into(),
                });
            }
            start_name = Some(name.to_string());
            continue;
        }
        let (head, tail) = trimmed.split_once("->").ok_or_else(|| GrammarError::Syntax {
            line: line_no,
            msg: "missing `->`".into(),
        })?;
        let (body, prob_part) = tail.split_once('#').ok_or_else(|| GrammarError::Syntax {
            line: line_no,
            msg: "missing `# prob`".into(),
        })?;
        let lhs = head.trim();
        if lhs.is_empty() || lhs.split_whitespace().count() != 1 {
            return Err(GrammarError::Syntax { line: line_no, msg: "LHS must be one symbol".into() });
        }
        let rhs: Vec<String> = body.split_whitespace().map(str::to_string).collect();
        if rhs.is_empty() {
            return Err(GrammarError::Syntax { line: line_no, msg: "empty RHS".into() });
        }
        let prob_tok = prob_part.split_whitespace().next().ok_or_else(|| GrammarError::Syntax {
            line: line_no,
            msg: "missing probability".into(),
        })?;
        let prob: f64 = prob_tok.parse().map_err(|_| GrammarError::Syntax {
            line: line_no,
            msg: format!("bad probability `{prob_tok}`"),
        })?;
        if !prob.is_finite() || prob <= 0.0 || prob > 1.0 + 1e-9 {
            return Err(GrammarError::BadProbability { line: line_no, prob });
        }
        raw.push(RawLine { line: line_no, lhs: lhs.to_string(), rhs, prob });
    }

    // Nonterminals are exactly the LHS symbols, in first-appearance order.
    let mut symbols: Vec<String> = Vec::new();
    let mut symbol_ids: HashMap<String, SymbolId> = HashMap::new();
    for r in &raw {
        if !symbol_ids.contains_key(&r.lhs) {
            symbol_ids.insert(r.lhs.clone(), symbols.len());
            symbols.push(r.lhs.clone());
        }
    }

    let mut rules = Vec::new();
    let mut seen: HashSet<(SymbolId, Vec<String>)> = HashSet::new();
    for r in &raw {
        let lhs = symbol_ids[&r.lhs];
        if !seen.insert((lhs, r.rhs.clone())) {
            return Err(GrammarError::DuplicateRule {
                line: r.line,
                rule: format!("{} -> {}", r.lhs, r.rhs.join(" ")),
            });
        }
        let body = if r.rhs.len() == 1 && !symbol_ids.contains_key(&r.rhs[0]) {
            RuleBody::Lexical(r.rhs[0].clone())
        } else {
            let mut ids = Vec::with_capacity(r.rhs.len());
            for sym in &r.rhs {
                match symbol_ids.get(sym) {
                    Some(&id) => ids.push(id),
                    None => {
                        return Err(GrammarError::UnknownSymbol {
                            line: r.line,
                            symbol: sym.clone(),
                        })
                    }
                }
            }
            RuleBody::Syntactic(ids)
        };
        rules.push(Rule { lhs, body, prob: r.prob, log_prob: r.prob.ln() });
    }

    // Per-LHS probability mass.
    let mut sums: BTreeMap<SymbolId, f64> = BTreeMap::new();
    for rule in &rules {
        *sums.entry(rule.lhs).or_insert(0.0) += rule.prob;
    }
    for (sym, sum) in &sums {
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GrammarError::ProbabilitySum { symbol: symbols[*sym].clone(), sum: *sum });
        }
    }

    let start_name = start_name.unwrap_or_else(|| "S".to_string());
    let start = *symbol_ids
        .get(&start_name)
        .ok_or_else(|| GrammarError::MissingStart(start_name.clone()))?;

    check_productive(&symbols, &rules)?;
    let unary_topo = unary_topological(&symbols, &rules)?;

    // Left-branching binarization of rules with arity >= 2.
    let n_symbols = symbols.len();
    let mut n_cats = n_symbols;
    let mut binary = Vec::new();
    for (rid, rule) in rules.iter().enumerate() {
        let RuleBody::Syntactic(rhs) = &rule.body else { continue };
        if rhs.len() < 2 {
            continue;
        }
        let rid = rid as RuleId;
        let mut left: Cat = rhs[0];
        for (pos, &sym) in rhs[1..].iter().enumerate() {
            let is_last = pos + 2 == rhs.len();
            let lhs: Cat = if is_last {
                rule.lhs
            } else {
                n_cats += 1;
                n_cats - 1
            };
            binary.push(BinRule {
                lhs,
                left,
                right: sym,
                rule: is_last.then_some(rid),
                log_prob: if is_last { rule.log_prob } else { 0.0 },
            });
            left = lhs;
        }
    }

    let mut lexical: HashMap<String, Vec<(SymbolId, RuleId)>> = HashMap::new();
    for (rid, rule) in rules.iter().enumerate() {
        if let RuleBody::Lexical(tok) = &rule.body {
            lexical.entry(tok.clone()).or_default().push((rule.lhs, rid as RuleId));
        }
    }

    Ok(Grammar { symbols, symbol_ids, start, rules, n_cats, binary, unary_topo, lexical })
}

/// Every nonterminal must derive at least one token sequence.
fn check_productive(symbols: &[String], rules: &[Rule]) -> Result<(), GrammarError> {
    let mut productive = vec![false; symbols.len()];
    loop {
        let mut changed = false;
        for rule in rules {
            if productive[rule.lhs] {
                continue;
            }
            let ok = match &rule.body {
                RuleBody::Lexical(_) => true,
                RuleBody::Syntactic(rhs) => rhs.iter().all(|&s| productive[s]),
            };
            if ok {
                productive[rule.lhs] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    match productive.iter().position(|p| !p) {
        Some(sym) => Err(GrammarError::Unproductive(symbols[sym].clone())),
        None => Ok(()),
    }
}

/// Order unary rules so children close before parents; errors on cycles.
fn unary_topological(symbols: &[String], rules: &[Rule]) -> Result<Vec<UnaryRule>, GrammarError> {
    let unaries: Vec<UnaryRule> = rules
        .iter()
        .enumerate()
        .filter_map(|(rid, r)| match &r.body {
            RuleBody::Syntactic(rhs) if rhs.len() == 1 => Some(UnaryRule {
                lhs: r.lhs,
                child: rhs[0],
                rule: rid as RuleId,
                log_prob: r.log_prob,
            }),
            _ => None,
        })
        .collect();

    // Kahn's algorithm over the child -> parent dependency graph.
    let n = symbols.len();
    let mut indegree = vec![0usize; n];
    for u in &unaries {
        indegree[u.lhs] += 1;
    }
    let mut ready: Vec<SymbolId> = (0..n).filter(|&s| indegree[s] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(sym) = ready.pop() {
        order.push(sym);
        for u in &unaries {
            if u.child == sym {
                indegree[u.lhs] -= 1;
                if indegree[u.lhs] == 0 {
                    ready.push(u.lhs);
                }
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&s| indegree[s] > 0).unwrap();
        return Err(GrammarError::UnaryCycle(symbols[stuck].clone()));
    }
    let pos: HashMap<SymbolId, usize> = order.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut sorted = unaries;
    sorted.sort_by_key(|u| (pos[&u.lhs], u.rule));
    Ok(sorted)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "\
%start S
S -> NP VP # 1.0
NP -> Det N # 0.75
NP -> NP PP # 0.25
VP -> V # 0.6
VP -> VP PP # 0.4
PP -> P NP # 1.0
Det -> a # 1.0
N -> dog # 0.5
N -> couch # 0.5
V -> sleeps # 1.0
P -> on # 1.0
";

    #[test]
    fn loads_toy_grammar() {
        let g = load_grammar(TOY).unwrap();
        assert_eq!(g.rules().len(), 11);
        assert_eq!(g.symbol_name(g.start()), "S");
        assert_eq!(g.tokens_of("N"), vec!["dog", "couch"]);
        assert!(g.has_token("on"));
        assert!(!g.has_token("cat"));
    }

    #[test]
    fn probability_sum_off_names_symbol() {
        let bad = TOY.replace("S -> NP VP # 1.0", "S -> NP VP # 0.9");
        match load_grammar(&bad) {
            Err(GrammarError::ProbabilitySum { symbol, .. }) => assert_eq!(symbol, "S"),
            other => panic!("expected probability-sum error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_rhs_symbol_reports_line() {
        let bad = format!("{TOY}S -> NP XP # 1.0\n");
        // The extra S rule also breaks the sum, but the unknown symbol is
        // detected first, while rules are built.
        match load_grammar(&bad) {
            Err(GrammarError::UnknownSymbol { symbol, line }) => {
                assert_eq!(symbol, "XP");
                assert_eq!(line, 13);
            }
            other => panic!("expected unknown-symbol error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_rule_rejected() {
        let bad = TOY.replace("N -> dog # 0.5", "N -> dog # 0.25\nN -> dog # 0.25");
        assert!(matches!(load_grammar(&bad), Err(GrammarError::DuplicateRule { .. })));
    }

    #[test]
    fn unary_cycle_rejected() {
        let bad = "\
%start S
S -> A # 1.0
A -> B # 0.5
A -> x # 0.5
B -> A # 0.5
B -> y # 0.5
";
        assert!(matches!(load_grammar(bad), Err(GrammarError::UnaryCycle(_))));
    }

    #[test]
    fn unproductive_symbol_rejected() {
        let bad = "\
%start S
S -> A # 1.0
A -> A # 1.0
";
        assert!(matches!(load_grammar(bad), Err(GrammarError::UnaryCycle(_) | GrammarError::Unproductive(_))));
    }

    #[test]
    fn ternary_rule_binarizes_left_branching() {
        let g = load_grammar(
            "\
%start S
S -> A B C # 1.0
A -> x # 1.0
B -> y # 1.0
C -> z # 1.0
",
        )
        .unwrap();
        // One synthetic category, two binary steps, rule id carried on top.
        assert_eq!(g.n_cats, g.n_symbols() + 1);
        assert_eq!(g.binary.len(), 2);
        let inner = &g.binary[0];
        let top = &g.binary[1];
        assert!(inner.rule.is_none());
        assert_eq!(inner.log_prob, 0.0);
        assert_eq!(top.rule, Some(0));
        assert_eq!(top.left, inner.lhs);
    }
}
