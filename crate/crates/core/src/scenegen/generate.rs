//! Scene generation: sample a caption from the template family, pick the
//! true reading of every preposition, then search for an object layout that
//! makes exactly that reading true under the semantics table.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::grid::CategoryId;
use crate::parser::{PrepAttachment, TokenRef};

use super::defaults;
use super::semantics::{mask_geometry, preposition_holds, MaskGeom, PrepArgs, PROXIMITY_PREPOSITIONS};
use super::{render_segmentation, CaptionedScene, CategorySet, GenError, GridBox, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateWeights {
    /// "a dog sleeps" — no preposition, one object.
    pub no_prep: f64,
    /// "a dog sees a woman on a couch" — one ambiguous preposition.
    pub transitive: f64,
    /// "a dog is standing next_to a woman on a couch" — an unambiguous
    /// proximity preposition plus one ambiguous preposition.
    pub progressive: f64,
    /// "a dog chases a cat with a ball under a table" — two ambiguous
    /// prepositions.
    pub two_preps: f64,
}

impl Default for TemplateWeights {
    fn default() -> Self {
        TemplateWeights { no_prep: 0.05, transitive: 0.45, progressive: 0.35, two_preps: 0.15 }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub categories: CategorySet,
    pub prepositions: Vec<String>,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Probability that a caption noun is replaced by a synonym of its
    /// category.
    pub synonym_noise: f64,
    pub templates: TemplateWeights,
    pub min_obj: usize,
    pub max_obj: usize,
    /// Up to this many extra unnamed objects drawn beneath the named ones.
    pub max_distractors: usize,
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            categories: defaults::default_categories(),
            prepositions: vec!["on".into(), "under".into(), "next_to".into(), "with".into()],
            grid_h: 32,
            grid_w: 32,
            synonym_noise: 0.2,
            templates: TemplateWeights::default(),
            min_obj: 2,
            max_obj: 8,
            max_distractors: 1,
            max_attempts: 20_000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.categories.objects().len() < 3 {
            return Err(GenError::BadConfig("need >= 3 non-background categories".into()));
        }
        if self.prepositions.len() < 2 {
            return Err(GenError::BadConfig("need >= 2 prepositions".into()));
        }
        if self.grid_h < 8 || self.grid_w < 8 {
            return Err(GenError::BadConfig("grid must be at least 8x8".into()));
        }
        for p in &self.prepositions {
            if preposition_holds(p, &dummy_args()).is_none() {
                return Err(GenError::BadConfig(format!(
                    "preposition `{p}` has no entry in the semantics table"
                )));
            }
        }
        if self.min_obj < 1 || self.max_obj < self.min_obj {
            return Err(GenError::BadConfig("bad object size range".into()));
        }
        if self.max_obj > self.grid_h.min(self.grid_w) {
            return Err(GenError::BadConfig(format!(
                "object size {} exceeds the {}x{} grid",
                self.max_obj, self.grid_h, self.grid_w
            )));
        }
        if !(0.0..1.0).contains(&self.synonym_noise) {
            return Err(GenError::BadConfig("synonym_noise must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn proximity_preps(&self) -> Vec<&str> {
        self.prepositions
            .iter()
            .map(String::as_str)
            .filter(|p| PROXIMITY_PREPOSITIONS.contains(p))
            .collect()
    }
}

fn dummy_args() -> PrepArgs<'static> {
    static OBJ: SceneObject = SceneObject {
        category: 1,
        bbox: GridBox { col: 0, row: 0, w: 1, h: 1 },
        draw_order: 1,
    };
    PrepArgs { gov_mask: None, dep_mask: None, gov_obj: &OBJ, dep_obj: &OBJ, h: 8, w: 8 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Template {
    NoPrep,
    Transitive,
    Progressive,
    TwoPreps,
}

/// One preposition occurrence of the caption plan: its candidate governors
/// (object slots) and the slot of its dependent.
#[derive(Debug, Clone)]
struct Occurrence {
    prep: String,
    dep_slot: usize,
    dep_token: usize,
    /// (object slot, token index) per candidate reading, in the order the
    /// grammar can attach them.
    candidate_govs: Vec<(usize, usize)>,
    /// Index into candidate_govs chosen as ground truth.
    true_gov: usize,
}

impl Occurrence {
    fn true_reading(&self) -> (usize, usize) {
        self.candidate_govs[self.true_gov]
    }
}

/// Deterministic scene construction from (config, seed).
pub fn generate_scene(config: &GenConfig, seed: u64) -> Result<CaptionedScene, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let template = pick_template(config, &mut rng);
    let n_nouns = match template {
        Template::NoPrep => 1,
        Template::Transitive | Template::Progressive => 3,
        Template::TwoPreps => 4,
    };

    // Distinct categories for the caption nouns.
    let mut pool: Vec<CategoryId> = config.categories.objects().iter().map(|c| c.id).collect();
    let mut noun_cats = Vec::with_capacity(n_nouns);
    for _ in 0..n_nouns {
        let at = rng.gen_range(0..pool.len());
        noun_cats.push(pool.swap_remove(at));
    }

    let noun_tokens: Vec<String> = noun_cats
        .iter()
        .map(|&id| {
            let cat = config.categories.get(id);
            if !cat.synonyms.is_empty() && rng.gen_bool(config.synonym_noise) {
                cat.synonyms[rng.gen_range(0..cat.synonyms.len())].clone()
            } else {
                cat.name.clone()
            }
        })
        .collect();

    let (caption, mut occurrences) = build_caption(config, template, &noun_tokens, &mut rng);
    for occ in occurrences.iter_mut() {
        occ.true_gov = rng.gen_range(0..occ.candidate_govs.len());
    }

    let objects = search_layout(config, &noun_cats, &occurrences, &mut rng)?;
    let gt_labels = render_segmentation(&objects, config.grid_h, config.grid_w)?;

    let gt_attachments = occurrences
        .iter()
        .map(|occ| {
            let (_, gov_token) = occ.true_reading();
            PrepAttachment {
                prep: occ.prep.clone(),
                governor: TokenRef { index: gov_token, lemma: caption[gov_token].clone() },
                dependent: TokenRef { index: occ.dep_token, lemma: caption[occ.dep_token].clone() },
            }
        })
        .collect();

    Ok(CaptionedScene {
        id: format!("scene-{seed:08}"),
        h: config.grid_h,
        w: config.grid_w,
        objects,
        gt_labels,
        caption,
        gt_attachments,
    })
}

fn pick_template(config: &GenConfig, rng: &mut ChaCha8Rng) -> Template {
    let t = &config.templates;
    let mut progressive = t.progressive;
    let mut transitive = t.transitive;
    let mut two_preps = t.two_preps;
    // Fold weights of templates the inventory cannot express into the
    // transitive one.
    if config.proximity_preps().is_empty() {
        transitive += progressive;
        progressive = 0.0;
    }
    if config.categories.objects().len() < 4 {
        transitive += two_preps;
        two_preps = 0.0;
    }
    let total = t.no_prep + transitive + progressive + two_preps;
    let mut x = rng.gen::<f64>() * total;
    for (tpl, weight) in [
        (Template::NoPrep, t.no_prep),
        (Template::Transitive, transitive),
        (Template::Progressive, progressive),
        (Template::TwoPreps, two_preps),
    ] {
        if x < weight {
            return tpl;
        }
        x -= weight;
    }
    Template::Transitive
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

/// Builds tokens plus the occurrence plan. Noun slot i refers to
/// noun_tokens[i] / its scene object.
fn build_caption(
    config: &GenConfig,
    template: Template,
    nouns: &[String],
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<Occurrence>) {
    let preps: Vec<&str> = config.prepositions.iter().map(String::as_str).collect();
    let s = |t: &str| t.to_string();
    match template {
        Template::NoPrep => {
            let v = pick(rng, &defaults::INTRANSITIVE_VERBS);
            (vec![s("a"), nouns[0].clone(), s(v)], vec![])
        }
        Template::Transitive => {
            let v = pick(rng, &defaults::TRANSITIVE_VERBS);
            let p = pick(rng, &preps);
            let caption = vec![
                s("a"),
                nouns[0].clone(),
                s(v),
                s("a"),
                nouns[1].clone(),
                s(p),
                s("a"),
                nouns[2].clone(),
            ];
            let occ = Occurrence {
                prep: s(p),
                dep_slot: 2,
                dep_token: 7,
                candidate_govs: vec![(1, 4), (0, 1)],
                true_gov: 0,
            };
            (caption, vec![occ])
        }
        Template::Progressive => {
            let v = pick(rng, &defaults::PROGRESSIVE_VERBS);
            let proximity = config.proximity_preps();
            let p1 = pick(rng, &proximity);
            let p2 = pick(rng, &preps);
            let caption = vec![
                s("a"),
                nouns[0].clone(),
                s("is"),
                s(v),
                s(p1),
                s("a"),
                nouns[1].clone(),
                s(p2),
                s("a"),
                nouns[2].clone(),
            ];
            let unambiguous = Occurrence {
                prep: s(p1),
                dep_slot: 1,
                dep_token: 6,
                candidate_govs: vec![(0, 1)],
                true_gov: 0,
            };
            let ambiguous = Occurrence {
                prep: s(p2),
                dep_slot: 2,
                dep_token: 9,
                candidate_govs: vec![(1, 6), (0, 1)],
                true_gov: 0,
            };
            (caption, vec![unambiguous, ambiguous])
        }
        Template::TwoPreps => {
            let v = pick(rng, &defaults::TRANSITIVE_VERBS);
            let p2 = pick(rng, &preps);
            let p3 = pick(rng, &preps);
            let caption = vec![
                s("a"),
                nouns[0].clone(),
                s(v),
                s("a"),
                nouns[1].clone(),
                s(p2),
                s("a"),
                nouns[2].clone(),
                s(p3),
                s("a"),
                nouns[3].clone(),
            ];
            let first = Occurrence {
                prep: s(p2),
                dep_slot: 2,
                dep_token: 7,
                candidate_govs: vec![(1, 4), (0, 1)],
                true_gov: 0,
            };
            let second = Occurrence {
                prep: s(p3),
                dep_slot: 3,
                dep_token: 10,
                candidate_govs: vec![(2, 7), (1, 4), (0, 1)],
                true_gov: 0,
            };
            (caption, vec![first, second])
        }
    }
}

/// Rejection sampling with guided proposals: true readings are used to
/// anchor placements, then every candidate reading is verified exactly.
fn search_layout(
    config: &GenConfig,
    noun_cats: &[CategoryId],
    occurrences: &[Occurrence],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SceneObject>, GenError> {
    let n = noun_cats.len();
    let mut failures: Vec<usize> = vec![0; occurrences.len()];

    for _ in 0..config.max_attempts {
        let mut boxes: Vec<Option<GridBox>> = vec![None; n];
        let mut orders: Vec<u32> = (0..n as u32).map(|i| i + 10).collect();
        orders.shuffle(rng);

        // Anchor chain: place true-reading pairs next to each other.
        for occ in occurrences {
            let (gov_slot, _) = occ.true_reading();
            let dep_slot = occ.dep_slot;
            match (boxes[gov_slot].is_some(), boxes[dep_slot].is_some()) {
                (false, false) => {
                    let dep = random_box(config, rng);
                    boxes[dep_slot] = Some(dep);
                    boxes[gov_slot] = Some(propose_governor(config, &occ.prep, &dep, rng));
                }
                (false, true) => {
                    let dep = boxes[dep_slot].unwrap();
                    boxes[gov_slot] = Some(propose_governor(config, &occ.prep, &dep, rng));
                }
                (true, false) => {
                    let gov = boxes[gov_slot].unwrap();
                    boxes[dep_slot] = Some(propose_dependent(config, &occ.prep, &gov, rng));
                }
                (true, true) => {}
            }
            if occ.prep == "in_front_of" && orders[gov_slot] < orders[dep_slot] {
                orders.swap(gov_slot, dep_slot);
            }
            if occ.prep == "behind" && orders[gov_slot] > orders[dep_slot] {
                orders.swap(gov_slot, dep_slot);
            }
        }
        for b in boxes.iter_mut() {
            if b.is_none() {
                *b = Some(random_box(config, rng));
            }
        }

        let mut objects: Vec<SceneObject> = noun_cats
            .iter()
            .zip(&boxes)
            .zip(&orders)
            .map(|((&category, bbox), &draw_order)| SceneObject {
                category,
                bbox: bbox.unwrap(),
                draw_order,
            })
            .collect();
        if config.max_distractors > 0 {
            let n_extra = rng.gen_range(0..=config.max_distractors);
            let mut unused: Vec<CategoryId> = config
                .categories
                .objects()
                .iter()
                .map(|c| c.id)
                .filter(|id| !noun_cats.contains(id))
                .collect();
            for k in 0..n_extra {
                if unused.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..unused.len());
                objects.push(SceneObject {
                    category: unused.swap_remove(at),
                    bbox: random_box(config, rng),
                    // Beneath every named object.
                    draw_order: k as u32 + 1,
                });
            }
        }

        match verify(config, noun_cats, occurrences, &objects) {
            Ok(()) => return Ok(objects),
            Err(occ_idx) => failures[occ_idx] += 1,
        }
    }

    let worst = (0..occurrences.len()).max_by_key(|&i| failures[i]).unwrap_or(0);
    let occ = &occurrences[worst];
    let (gov_slot, _) = occ.true_reading();
    Err(GenError::Unsatisfiable {
        prep: occ.prep.clone(),
        gov: config.categories.get(noun_cats[gov_slot]).name.clone(),
        dep: config.categories.get(noun_cats[occ.dep_slot]).name.clone(),
        attempts: config.max_attempts,
    })
}

/// Exactly one candidate reading per occurrence may hold; returns the index
/// of the first violated occurrence otherwise.
fn verify(
    config: &GenConfig,
    noun_cats: &[CategoryId],
    occurrences: &[Occurrence],
    objects: &[SceneObject],
) -> Result<(), usize> {
    let (h, w) = (config.grid_h, config.grid_w);
    let labels = render_segmentation(objects, h, w).map_err(|_| 0usize)?;
    let geoms: Vec<Option<MaskGeom>> =
        noun_cats.iter().map(|&id| mask_geometry(&labels, id)).collect();

    for (idx, occ) in occurrences.iter().enumerate() {
        for (c_idx, &(gov_slot, _)) in occ.candidate_govs.iter().enumerate() {
            let args = PrepArgs {
                gov_mask: geoms[gov_slot].as_ref(),
                dep_mask: geoms[occ.dep_slot].as_ref(),
                gov_obj: &objects[gov_slot],
                dep_obj: &objects[occ.dep_slot],
                h,
                w,
            };
            let holds = preposition_holds(&occ.prep, &args).expect("validated preposition");
            if holds != (c_idx == occ.true_gov) {
                return Err(idx);
            }
        }
    }
    Ok(())
}

fn random_box(config: &GenConfig, rng: &mut ChaCha8Rng) -> GridBox {
    let w = rng.gen_range(config.min_obj..=config.max_obj);
    let h = rng.gen_range(config.min_obj..=config.max_obj);
    GridBox {
        col: rng.gen_range(0..=config.grid_w - w),
        row: rng.gen_range(0..=config.grid_h - h),
        w,
        h,
    }
}

fn clamp_box(config: &GenConfig, col: i64, row: i64, w: usize, h: usize) -> GridBox {
    let col = col.clamp(0, (config.grid_w - w) as i64) as usize;
    let row = row.clamp(0, (config.grid_h - h) as i64) as usize;
    GridBox { col, row, w, h }
}

/// Place a governor so that `prep(gov, dep)` plausibly holds.
fn propose_governor(config: &GenConfig, prep: &str, dep: &GridBox, rng: &mut ChaCha8Rng) -> GridBox {
    let w = rng.gen_range(config.min_obj..=config.max_obj);
    let h = rng.gen_range(config.min_obj..=config.max_obj);
    let (dc, dr) = (dep.col as i64, dep.row as i64);
    match prep {
        "on" => {
            // Stacked directly above, touching or 1 row into the dependent.
            let overlap = rng.gen_range(0..=1i64);
            let col = dc + rng.gen_range(-2..=dep.w.max(1) as i64 - 1);
            clamp_box(config, col, dr - h as i64 + overlap, w, h)
        }
        "under" => {
            let overlap = rng.gen_range(0..=1i64);
            let col = dc + rng.gen_range(-2..=dep.w.max(1) as i64 - 1);
            clamp_box(config, col, dr + dep.h as i64 - overlap, w, h)
        }
        "next_to" | "by" | "near" => {
            let spread_w = (0.20 * config.grid_w as f64) as i64;
            let spread_h = (0.08 * config.grid_h as f64).max(1.0) as i64;
            let col = dc + rng.gen_range(-spread_w..=spread_w);
            let row = dr + rng.gen_range(-spread_h..=spread_h);
            clamp_box(config, col, row, w, h)
        }
        "with" => {
            let spread = (0.18 * (config.grid_w.min(config.grid_h)) as f64).max(1.0) as i64;
            let col = dc + rng.gen_range(-spread..=spread);
            let row = dr + rng.gen_range(-spread..=spread);
            clamp_box(config, col, row, w, h)
        }
        "in_front_of" | "behind" => {
            // Box overlap is required; draw order is fixed up by the caller.
            let col = dc + rng.gen_range(-(w as i64) + 1..dep.w as i64);
            let row = dr + rng.gen_range(-(h as i64) + 1..dep.h as i64);
            clamp_box(config, col, row, w, h)
        }
        _ => random_box(config, rng),
    }
}

/// Place a dependent so that `prep(gov, dep)` plausibly holds.
fn propose_dependent(config: &GenConfig, prep: &str, gov: &GridBox, rng: &mut ChaCha8Rng) -> GridBox {
    match prep {
        // Mirror pairs share proposals with the roles swapped.
        "on" => propose_governor(config, "under", gov, rng),
        "under" => propose_governor(config, "on", gov, rng),
        other => propose_governor(config, other, gov, rng),
    }
}
