//! Ambiguity filtering: keep scenes whose caption has at least one
//! preposition with two or more attachment readings in the k-best parses.

use std::fmt;

use thiserror::Error;

use crate::parser::{governor_sets, parse_kbest, Grammar, ParseError, PrepAttachment};

use super::CaptionedScene;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("caption `{caption}` of scene {scene_id} is unparseable: {source}")]
    Unparseable {
        scene_id: String,
        caption: String,
        source: ParseError,
    },
}

/// The four dataset summary statistics, computed over the kept scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub total_prepositions: usize,
    pub ambiguous_prepositions: usize,
    /// ambiguous / total, 0 when the kept set has no prepositions.
    pub ambiguity_rate: f64,
    pub multi_ambiguous_sentences: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} total prepositions, {} ambiguous prepositions, {:.4} ambiguity rate, {} sentences with multiple ambiguous prepositions",
            self.total_prepositions,
            self.ambiguous_prepositions,
            self.ambiguity_rate,
            self.multi_ambiguous_sentences
        )
    }
}

/// Keeps exactly the scenes with >= 1 ambiguous preposition occurrence,
/// judged over the k-best parse list of each caption.
pub fn filter_ambiguous(
    scenes: Vec<CaptionedScene>,
    grammar: &Grammar,
    k: usize,
) -> Result<(Vec<CaptionedScene>, DatasetStats), FilterError> {
    let mut kept = Vec::new();
    let mut total = 0usize;
    let mut ambiguous = 0usize;
    let mut multi = 0usize;

    for scene in scenes {
        let hyps = parse_kbest(grammar, &scene.caption, k).map_err(|source| {
            FilterError::Unparseable {
                scene_id: scene.id.clone(),
                caption: scene.caption.join(" "),
                source,
            }
        })?;
        let lists: Vec<Vec<PrepAttachment>> =
            hyps.into_iter().map(|h| h.attachments).collect();
        let occurrence_govs =
            governor_sets(lists.iter().map(|l| l.as_slice()));
        let n_occurrences = occurrence_govs.len();
        let n_ambiguous = occurrence_govs.values().filter(|govs| govs.len() >= 2).count();
        if n_ambiguous == 0 {
            continue;
        }
        total += n_occurrences;
        ambiguous += n_ambiguous;
        if n_ambiguous >= 2 {
            multi += 1;
        }
        kept.push(scene);
    }

    let rate = if total == 0 { 0.0 } else { ambiguous as f64 / total as f64 };
    Ok((
        kept,
        DatasetStats {
            total_prepositions: total,
            ambiguous_prepositions: ambiguous,
            ambiguity_rate: rate,
            multi_ambiguous_sentences: multi,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::super::defaults::grammar_text;
    use super::super::generate::{generate_scene, GenConfig, TemplateWeights};
    use super::*;
    use crate::parser::load_grammar;

    fn scenes_with(weights: TemplateWeights, seeds: std::ops::Range<u64>) -> (Vec<CaptionedScene>, Grammar) {
        let config = GenConfig { templates: weights, ..GenConfig::default() };
        let grammar = load_grammar(&grammar_text(&config)).unwrap();
        let scenes = seeds.map(|s| generate_scene(&config, s).unwrap()).collect();
        (scenes, grammar)
    }

    #[test]
    fn no_preposition_captions_are_excluded() {
        let (scenes, grammar) = scenes_with(
            TemplateWeights { no_prep: 1.0, transitive: 0.0, progressive: 0.0, two_preps: 0.0 },
            0..5,
        );
        let (kept, stats) = filter_ambiguous(scenes, &grammar, 10).unwrap();
        assert!(kept.is_empty());
        assert_eq!(stats.total_prepositions, 0);
        assert_eq!(stats.ambiguity_rate, 0.0);
    }

    #[test]
    fn ambiguous_transitive_captions_are_kept() {
        let (scenes, grammar) = scenes_with(
            TemplateWeights { no_prep: 0.0, transitive: 1.0, progressive: 0.0, two_preps: 0.0 },
            0..8,
        );
        let n = scenes.len();
        let (kept, stats) = filter_ambiguous(scenes, &grammar, 10).unwrap();
        assert_eq!(kept.len(), n);
        assert_eq!(stats.total_prepositions, n);
        assert_eq!(stats.ambiguous_prepositions, n);
        assert_eq!(stats.ambiguity_rate, 1.0);
        assert_eq!(stats.multi_ambiguous_sentences, 0);
    }

    #[test]
    fn progressive_captions_count_unambiguous_occurrences() {
        let (scenes, grammar) = scenes_with(
            TemplateWeights { no_prep: 0.0, transitive: 0.0, progressive: 1.0, two_preps: 0.0 },
            0..8,
        );
        let n = scenes.len();
        let (kept, stats) = filter_ambiguous(scenes, &grammar, 10).unwrap();
        assert_eq!(kept.len(), n);
        // Two occurrences per caption, exactly one ambiguous.
        assert_eq!(stats.total_prepositions, 2 * n);
        assert_eq!(stats.ambiguous_prepositions, n);
        assert!((stats.ambiguity_rate - 0.5).abs() < 1e-12);
        assert!(stats.ambiguous_prepositions <= stats.total_prepositions);
    }

    #[test]
    fn two_prep_captions_have_multiple_ambiguous_occurrences() {
        let (scenes, grammar) = scenes_with(
            TemplateWeights { no_prep: 0.0, transitive: 0.0, progressive: 0.0, two_preps: 1.0 },
            0..6,
        );
        let n = scenes.len();
        let (kept, stats) = filter_ambiguous(scenes, &grammar, 10).unwrap();
        assert_eq!(kept.len(), n);
        assert_eq!(stats.multi_ambiguous_sentences, n);
        assert_eq!(stats.total_prepositions, 2 * n);
        assert_eq!(stats.ambiguous_prepositions, 2 * n);
    }

    #[test]
    fn singleton_parse_lists_mean_no_ambiguity() {
        // A grammar without the attachment rules has exactly one parse per
        // caption: nothing is ambiguous and the output is empty.
        let config = GenConfig {
            templates: TemplateWeights { no_prep: 0.0, transitive: 1.0, progressive: 0.0, two_preps: 0.0 },
            ..GenConfig::default()
        };
        let scenes: Vec<CaptionedScene> =
            (0..4).map(|s| generate_scene(&config, s).unwrap()).collect();
        let mut text = grammar_text(&config);
        text = text.replace("NP -> Det N # 0.75\nNP -> NP PP # 0.25\n", "NP -> Det N # 1.0\n");
        text = text.replace(
            "VP -> VCORE # 0.3\nVP -> VCORE NP # 0.4\nVP -> VP PP # 0.3\n",
            "VP -> VCORE NP PP # 1.0\n",
        );
        let grammar = load_grammar(&text).unwrap();
        let (kept, stats) = filter_ambiguous(scenes, &grammar, 10).unwrap();
        assert!(kept.is_empty());
        assert_eq!(stats.ambiguity_rate, 0.0);
    }
}
