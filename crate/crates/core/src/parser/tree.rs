//! Parse trees in original (de-binarized) form.

use super::grammar::Grammar;

/// A node of a parse tree. Leaves are bare tokens (empty `children`);
/// `log_prob` is the log-probability of the subtree's full derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseTree {
    pub symbol: String,
    pub span: (usize, usize),
    pub log_prob: f64,
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// `(S (NP (Det a) (N dog)) (VP (V sleeps)))`
    pub fn bracketed(&self) -> String {
        let mut out = String::new();
        self.write_bracketed(&mut out);
        out
    }

    fn write_bracketed(&self, out: &mut String) {
        if self.is_leaf() {
            out.push_str(&self.symbol);
            return;
        }
        out.push('(');
        out.push_str(&self.symbol);
        for child in &self.children {
            out.push(' ');
            child.write_bracketed(out);
        }
        out.push(')');
    }

    /// Recompute the derivation log-prob from grammar rules (left fold over
    /// children, then the rule itself). `None` if some rule is missing.
    pub fn log_prob_from_rules(&self, g: &Grammar) -> Option<f64> {
        if self.is_leaf() {
            return Some(0.0);
        }
        let mut sum = 0.0;
        for child in &self.children {
            sum += child.log_prob_from_rules(g)?;
        }
        let rhs: Vec<&str> = self.children.iter().map(|c| c.symbol.as_str()).collect();
        Some(sum + g.rule_log_prob(&self.symbol, &rhs)?)
    }

    /// Pre-order iteration.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a ParseTree)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tok: &str, at: usize) -> ParseTree {
        ParseTree { symbol: tok.into(), span: (at, at + 1), log_prob: 0.0, children: vec![] }
    }

    #[test]
    fn bracketed_rendering() {
        let tree = ParseTree {
            symbol: "NP".into(),
            span: (0, 2),
            log_prob: 0.0,
            children: vec![
                ParseTree {
                    symbol: "Det".into(),
                    span: (0, 1),
                    log_prob: 0.0,
                    children: vec![leaf("a", 0)],
                },
                ParseTree {
                    symbol: "N".into(),
                    span: (1, 2),
                    log_prob: 0.0,
                    children: vec![leaf("dog", 1)],
                },
            ],
        };
        assert_eq!(tree.bracketed(), "(NP (Det a) (N dog))");
    }
}
