//! scenes.jsonl and categories.tsv.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::grid::LabelGrid;
use crate::parser::{AttachmentRecord, PrepAttachment};

use super::{CaptionedScene, Category, CategorySet, GenError, GridBox, SceneObject};

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    cat: u16,
    col: usize,
    row: usize,
    w: usize,
    h: usize,
    order: u32,
}

/// One line of scenes.jsonl.
#[derive(Debug, Serialize, Deserialize)]
struct SceneRecord {
    id: String,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "W")]
    w: usize,
    objects: Vec<ObjectRecord>,
    labels: Vec<u16>,
    caption: Vec<String>,
    gt_attachments: Vec<AttachmentRecord>,
}

impl From<&CaptionedScene> for SceneRecord {
    fn from(s: &CaptionedScene) -> Self {
        SceneRecord {
            id: s.id.clone(),
            h: s.h,
            w: s.w,
            objects: s
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    cat: o.category,
                    col: o.bbox.col,
                    row: o.bbox.row,
                    w: o.bbox.w,
                    h: o.bbox.h,
                    order: o.draw_order,
                })
                .collect(),
            labels: s.gt_labels.cells().to_vec(),
            caption: s.caption.clone(),
            gt_attachments: s.gt_attachments.iter().map(AttachmentRecord::from).collect(),
        }
    }
}

pub fn write_scenes_jsonl(out: &mut impl Write, scenes: &[CaptionedScene]) -> std::io::Result<()> {
    for scene in scenes {
        serde_json::to_writer(&mut *out, &SceneRecord::from(scene))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scenes_jsonl(input: impl BufRead) -> anyhow::Result<Vec<CaptionedScene>> {
    let mut scenes = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SceneRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("scenes.jsonl line {}: {e}", idx + 1))?;
        let gt_labels = LabelGrid::from_cells(rec.h, rec.w, rec.labels)
            .ok_or_else(|| anyhow::anyhow!("scene {}: labels length != H*W", rec.id))?;
        scenes.push(CaptionedScene {
            id: rec.id,
            h: rec.h,
            w: rec.w,
            objects: rec
                .objects
                .iter()
                .map(|o| SceneObject {
                    category: o.cat,
                    bbox: GridBox { col: o.col, row: o.row, w: o.w, h: o.h },
                    draw_order: o.order,
                })
                .collect(),
            gt_labels,
            caption: rec.caption,
            gt_attachments: rec.gt_attachments.iter().map(PrepAttachment::from).collect(),
        });
    }
    Ok(scenes)
}

/// `id<TAB>name<TAB>comma-separated synonyms`, one category per line.
pub fn write_categories_tsv(out: &mut impl Write, cats: &CategorySet) -> std::io::Result<()> {
    for cat in cats.all() {
        writeln!(out, "{}\t{}\t{}", cat.id, cat.name, cat.synonyms.join(","))?;
    }
    Ok(())
}

pub fn read_categories_tsv(input: impl BufRead) -> anyhow::Result<CategorySet> {
    let mut categories = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let id: u16 = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| anyhow::anyhow!("categories.tsv line {}: bad id", idx + 1))?;
        let name = parts
            .next()
            .ok_or_else(|| anyhow::anyhow!("categories.tsv line {}: missing name", idx + 1))?
            .to_string();
        let synonyms: Vec<String> = match parts.next() {
            Some("") | None => vec![],
            Some(s) => s.split(',').map(str::to_string).collect(),
        };
        categories.push(Category { id, name, synonyms });
    }
    CategorySet::from_categories(categories).map_err(|e: GenError| anyhow::anyhow!(e.to_string()))
}
