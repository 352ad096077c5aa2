//! Per-position leverage of input words on a predicted rating, from the
//! gradient of the rating with respect to each input embedding.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::encoder::{self, Pass};
use crate::ingest::{Document, Vocabulary};
use crate::recmodel::Model;
use crate::tensor::norm;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SaliencyNorm {
    #[default]
    Euclidean,
    Max,
}

impl FromStr for SaliencyNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" | "euclidean" => Ok(SaliencyNorm::Euclidean),
            "max" => Ok(SaliencyNorm::Max),
            _ => Err(Error::config(format!("unknown norm `{s}` (l2|max)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapFormat {
    Tsv,
    Html,
}

impl FromStr for HeatmapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(HeatmapFormat::Tsv),
            "html" => Ok(HeatmapFormat::Html),
            _ => Err(Error::config(format!("unknown format `{s}` (tsv|html)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaliencyMap {
    /// `None` for ad-hoc text scored as a cold item.
    pub item: Option<u32>,
    pub user: usize,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    /// Scores min-max scaled to [0, 1]; all zero when the range is empty.
    pub normalized: Vec<f64>,
    pub predicted: f64,
}

/// Gradient of the predicted rating with respect to every position's input
/// embedding, in evaluation mode.
pub fn position_gradients(model: &Model, user: usize, doc: &Document) -> Vec<Vec<f64>> {
    let out = encoder::encode(doc, &model.params, &model.shape.encoder, Pass::Train { dropout: None });
    let d_g = model.params.factors.user_factors.row(user);
    let mut scratch = model.params.zeros_like();
    encoder::backward(out.cache.as_ref().expect("cache"), d_g, &model.params, &mut scratch)
}

/// Score every token position of `doc` for `user`. When `item` is given the
/// prediction uses its offset and bias; otherwise the text is a cold item.
pub fn word_saliency(
    model: &Model,
    vocab: &Vocabulary,
    user: usize,
    item: Option<u32>,
    doc: &Document,
    which: SaliencyNorm,
) -> Result<SaliencyMap> {
    if user >= model.shape.num_users {
        return Err(Error::Range(format!("user {user} out of range ({} users)", model.shape.num_users)));
    }
    if let Some(j) = item {
        if j as usize >= model.shape.num_items {
            return Err(Error::Range(format!("item {j} out of range ({} items)", model.shape.num_items)));
        }
    }
    let scores: Vec<f64> = position_gradients(model, user, doc)
        .iter()
        .map(|d| match which {
            SaliencyNorm::Euclidean => norm(d),
            SaliencyNorm::Max => d.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        })
        .collect();
    let g = model.content_vector(doc);
    let predicted = match item {
        Some(j) => {
            let f = encoder::item_representation(&g, Some(model.params.factors.item_offsets.row(j as usize)));
            model.score(user, j, &f, false)
        }
        None => model.score(user, 0, &g, true),
    };
    Ok(SaliencyMap {
        item,
        user,
        tokens: doc.tokens.iter().map(|&t| vocab.token(t).to_string()).collect(),
        normalized: normalize(&scores),
        scores,
        predicted,
    })
}

fn normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

const MIN_FONT_PX: f64 = 12.0;
const MAX_FONT_PX: f64 = 32.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Font size in px and RGB colour for a normalized score.
pub fn token_style(t: f64) -> (f64, [u8; 3]) {
    let lerp = |a: f64, b: f64| a + (b - a) * t;
    let size = lerp(MIN_FONT_PX, MAX_FONT_PX);
    // light grey to dark red
    let rgb = [lerp(190.0, 170.0), lerp(190.0, 0.0), lerp(190.0, 0.0)].map(|c| c.round() as u8);
    (size, rgb)
}

pub fn emit_heatmap(map: &SaliencyMap, format: HeatmapFormat) -> String {
    let mut out = String::new();
    match format {
        HeatmapFormat::Tsv => {
            out.push_str("position\ttoken\tscore\n");
            for (k, (tok, s)) in map.tokens.iter().zip(&map.scores).enumerate() {
                let _ = writeln!(out, "{k}\t{tok}\t{s}");
            }
        }
        HeatmapFormat::Html => {
            out.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>saliency</title></head><body>\n");
            let _ = writeln!(
                out,
                "<p>user {} item {} predicted {:.6}</p>\n<p>",
                map.user,
                map.item.map_or("text".to_string(), |j| j.to_string()),
                map.predicted
            );
            for ((tok, s), t) in map.tokens.iter().zip(&map.scores).zip(&map.normalized) {
                let (size, [r, g, b]) = token_style(*t);
                let _ = writeln!(
                    out,
                    "<span style=\"font-size:{size:.1}px;color:rgb({r},{g},{b})\" title=\"{s}\">{}</span>",
                    escape(tok)
                );
            }
            out.push_str("</p>\n</body></html>\n");
        }
    }
    out
}
