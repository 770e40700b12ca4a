//! Default vocabulary and the caption grammar shared by the generator and
//! the parser.

use super::{CategorySet, GenConfig};

pub const INTRANSITIVE_VERBS: [&str; 4] = ["sleeps", "runs", "barks", "waits"];
pub const TRANSITIVE_VERBS: [&str; 4] = ["sees", "watches", "chases", "faces"];
pub const PROGRESSIVE_VERBS: [&str; 4] = ["standing", "sitting", "resting", "walking"];

pub fn default_categories() -> CategorySet {
    CategorySet::new(&[
        ("dog", &["puppy", "hound"]),
        ("cat", &["kitten", "kitty"]),
        ("woman", &["lady", "person"]),
        ("couch", &["sofa", "settee"]),
        ("table", &["desk", "counter"]),
        ("ball", &["toy", "sphere"]),
        ("tree", &["plant", "sapling"]),
        ("car", &["automobile", "vehicle"]),
    ])
    .expect("default inventory is valid")
}

/// Text of the caption grammar for a generator config. Both the generator's
/// template family and the parser work off this one file, so the caption
/// vocabulary and the lexicon always agree.
pub fn grammar_text(config: &GenConfig) -> String {
    let mut nouns: Vec<&str> = Vec::new();
    for cat in config.categories.objects() {
        nouns.push(&cat.name);
        for syn in &cat.synonyms {
            nouns.push(syn);
        }
    }
    let mut verbs: Vec<&str> = Vec::new();
    verbs.extend(INTRANSITIVE_VERBS);
    verbs.extend(TRANSITIVE_VERBS);
    verbs.extend(PROGRESSIVE_VERBS);

    let mut out = String::new();
    out.push_str("# Caption grammar. Nouns under N, verbs under V, prepositions under P;\n");
    out.push_str("# multiword prepositions are single tokens joined by underscores.\n");
    out.push_str("%start S\n");
    out.push_str("S -> NP VP # 1.0\n");
    out.push_str("NP -> Det N # 0.75\n");
    out.push_str("NP -> NP PP # 0.25\n");
    out.push_str("VP -> VCORE # 0.3\n");
    out.push_str("VP -> VCORE NP # 0.4\n");
    out.push_str("VP -> VP PP # 0.3\n");
    out.push_str("VCORE -> V # 0.6\n");
    out.push_str("VCORE -> AUX V # 0.4\n");
    out.push_str("PP -> P NP # 1.0\n");
    out.push_str("Det -> a # 1.0\n");
    out.push_str("AUX -> is # 1.0\n");
    push_uniform(&mut out, "N", &nouns);
    push_uniform(&mut out, "V", &verbs);
    let preps: Vec<&str> = config.prepositions.iter().map(String::as_str).collect();
    push_uniform(&mut out, "P", &preps);
    out
}

fn push_uniform(out: &mut String, preterm: &str, tokens: &[&str]) {
    let p = 1.0 / tokens.len() as f64;
    for tok in tokens {
        out.push_str(&format!("{preterm} -> {tok} # {p}\n"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::load_grammar;

    #[test]
    fn default_grammar_loads_and_covers_captions() {
        let config = GenConfig::default();
        let g = load_grammar(&grammar_text(&config)).unwrap();
        for seed in 0..20 {
            let scene = super::super::generate_scene(&config, seed).unwrap();
            for token in &scene.caption {
                assert!(g.has_token(token), "token `{token}` missing from lexicon");
            }
        }
        for p in &config.prepositions {
            assert!(g.tokens_of("P").contains(&p.as_str()));
        }
    }
}
