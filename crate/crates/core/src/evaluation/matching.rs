//! Greedy one-to-one matching, precision/recall and 101-point interpolated
//! average precision.

use super::{Detection, EvalError, GroundTruthInstance, Result};
use crate::maskops::mask_iou;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

/// Fate of one detection at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Claimed the ground truth with this index.
    Tp(usize),
    Fp,
    /// Claimed a ground truth excluded from the current evaluation.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub iou_threshold: f64,
    /// `(detection, ground truth, IoU)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_detections.len()
    }

    pub fn fn_count(&self) -> usize {
        self.unmatched_ground_truths.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Descending confidence, then ascending index.
pub(crate) fn by_confidence(dets: &[Detection]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b))
}

/// Pairwise mask IoUs of one image; `NEG` marks cross-class pairs.
pub(crate) struct ImageIndex {
    pub dets: Vec<usize>,
    pub gts: Vec<usize>,
    iou: Vec<f64>,
}

const NEG: f64 = -1.0;

impl ImageIndex {
    fn iou(&self, d: usize, g: usize) -> f64 {
        self.iou[d * self.gts.len() + g]
    }
}

pub(crate) fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(EvalError::Param("no IoU thresholds".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(EvalError::Param(format!("IoU threshold {t} outside (0, 1]")));
    }
    Ok(())
}

fn build_image(image_dets: Vec<usize>, image_gts: Vec<usize>, dets: &[Detection], gts: &[GroundTruthInstance]) -> Result<ImageIndex> {
    let mut iou = vec![NEG; image_dets.len() * image_gts.len()];
    for (i, &d) in image_dets.iter().enumerate() {
        for (j, &g) in image_gts.iter().enumerate() {
            if dets[d].class_id != gts[g].class_id {
                continue;
            }
            iou[i * image_gts.len() + j] = mask_iou(&dets[d].mask, &gts[g].amodal).map_err(|e| {
                EvalError::Shape(format!("detection {d} vs ground truth {g} in image {}: {e}", dets[d].image_id))
            })?;
        }
    }
    Ok(ImageIndex {
        dets: image_dets,
        gts: image_gts,
        iou,
    })
}

/// Groups by image and fills the IoU tables, spreading images over
/// `workers` threads.
pub(crate) fn build_index(dets: &[Detection], gts: &[GroundTruthInstance], workers: usize) -> Result<Vec<ImageIndex>> {
    let mut groups: BTreeMap<u64, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry(d.image_id).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        groups.entry(g.image_id).or_default().1.push(i);
    }
    let mut jobs: Vec<(Vec<usize>, Vec<usize>)> = groups.into_values().collect();
    for (d, _) in &mut jobs {
        d.sort_by(by_confidence(dets));
    }
    let workers = workers.max(1).min(jobs.len().max(1));
    if workers == 1 {
        return jobs.into_iter().map(|(d, g)| build_image(d, g, dets, gts)).collect();
    }
    let chunk = jobs.len().div_ceil(workers);
    let mut shards: Vec<Vec<(Vec<usize>, Vec<usize>)>> = Vec::new();
    while !jobs.is_empty() {
        let rest = jobs.split_off(chunk.min(jobs.len()));
        shards.push(std::mem::replace(&mut jobs, rest));
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = shards
            .into_iter()
            .map(|shard| {
                s.spawn(move || {
                    shard
                        .into_iter()
                        .map(|(d, g)| build_image(d, g, dets, gts))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::new();
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

/// Greedy matching inside one image at `thr`. Detections are visited in
/// confidence order; each takes the unclaimed same-class ground truth of
/// highest IoU, preferring ground truths that are not ignored.
pub(crate) fn match_image(img: &ImageIndex, thr: f64, ignored: &dyn Fn(usize) -> bool) -> Vec<(usize, Outcome, f64)> {
    let mut claimed = vec![false; img.gts.len()];
    let mut out = Vec::with_capacity(img.dets.len());
    for (i, &d) in img.dets.iter().enumerate() {
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        for (j, &g) in img.gts.iter().enumerate() {
            let v = img.iou(i, j);
            if claimed[j] || v < thr {
                continue;
            }
            let slot = &mut best[ignored(g) as usize];
            if slot.is_none_or(|(_, bv)| v > bv) {
                *slot = Some((j, v));
            }
        }
        let outcome = match best {
            [Some((j, v)), _] => {
                claimed[j] = true;
                (d, Outcome::Tp(img.gts[j]), v)
            }
            [None, Some((j, v))] => {
                claimed[j] = true;
                (d, Outcome::Ignored, v)
            }
            [None, None] => (d, Outcome::Fp, 0.0),
        };
        out.push(outcome);
    }
    out
}

pub fn match_detections(dets: &[Detection], gts: &[GroundTruthInstance], iou_threshold: f64) -> Result<MatchResult> {
    validate_thresholds(&[iou_threshold])?;
    let index = build_index(dets, gts, 1)?;
    let mut pairs = Vec::new();
    let mut unmatched_detections = Vec::new();
    let mut matched: BTreeSet<usize> = BTreeSet::new();
    for img in &index {
        for (d, o, v) in match_image(img, iou_threshold, &|_| false) {
            match o {
                Outcome::Tp(g) => {
                    matched.insert(g);
                    pairs.push((d, g, v));
                }
                _ => unmatched_detections.push(d),
            }
        }
    }
    pairs.sort_by_key(|p| p.0);
    unmatched_detections.sort_unstable();
    Ok(MatchResult {
        iou_threshold,
        pairs,
        unmatched_detections,
        unmatched_ground_truths: (0..gts.len()).filter(|g| !matched.contains(g)).collect(),
    })
}

/// `P = TP/(TP+FP)`, `R = TP/(TP+FN)`. Without detections precision is 1
/// if there is also no ground truth and 0 otherwise; without ground truth
/// recall is 1.
pub fn precision_recall(m: &MatchResult) -> (f64, f64) {
    pr_from_counts(m.tp(), m.fp(), m.tp() + m.fn_count())
}

pub(crate) fn pr_from_counts(tp: usize, fp: usize, n_gt: usize) -> (f64, f64) {
    let p = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else if n_gt == 0 {
        1.0
    } else {
        0.0
    };
    let r = if n_gt == 0 { 1.0 } else { tp as f64 / n_gt as f64 };
    (p, r)
}

/// Cumulative curve over detections sorted by confidence.
pub(crate) fn pr_curve(scored: &mut [(f64, usize, bool)], n_gt: usize) -> Vec<PrPoint> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (mut tp, mut fp) = (0usize, 0usize);
    scored
        .iter()
        .map(|&(confidence, _, hit)| {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                confidence,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
            }
        })
        .collect()
}

/// Mean of the monotone precision envelope sampled at recall 0, 0.01, …, 1.
pub(crate) fn interpolated_ap(curve: &[PrPoint]) -> f64 {
    let mut env: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for r in 0..=100 {
        let target = r as f64 / 100.0;
        while k < curve.len() && curve[k].recall < target {
            k += 1;
        }
        if k == curve.len() {
            break;
        }
        sum += env[k];
    }
    sum / 101.0
}

/// Scored outcomes of every non-ignored detection at `thr`.
pub(crate) fn scored_outcomes(
    index: &[ImageIndex],
    dets: &[Detection],
    thr: f64,
    ignored: &dyn Fn(usize) -> bool,
) -> Vec<(f64, usize, bool)> {
    let mut scored = Vec::new();
    for img in index {
        for (d, o, _) in match_image(img, thr, ignored) {
            match o {
                Outcome::Tp(_) => scored.push((dets[d].confidence, d, true)),
                Outcome::Fp => scored.push((dets[d].confidence, d, false)),
                Outcome::Ignored => {}
            }
        }
    }
    scored
}

/// AP of the single curve formed by all detections (matching stays
/// class-aware). `None` when there is no ground truth to recall.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruthInstance], iou_threshold: f64) -> Result<Option<f64>> {
    validate_thresholds(&[iou_threshold])?;
    if gts.is_empty() {
        return Ok(None);
    }
    let index = build_index(dets, gts, 1)?;
    let mut scored = scored_outcomes(&index, dets, iou_threshold, &|_| false);
    Ok(Some(interpolated_ap(&pr_curve(&mut scored, gts.len()))))
}

/// Per-class AP averaged over classes and then over thresholds, against
/// the ground truths not excluded by `ignored`. Classes without such ground
/// truth are left out; `None` when no class remains.
pub(crate) fn map_over(
    index: &[ImageIndex],
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    thresholds: &[f64],
    ignored: &dyn Fn(usize) -> bool,
) -> (Option<f64>, BTreeMap<u32, f64>) {
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for (g, gt) in gts.iter().enumerate() {
        if !ignored(g) {
            *n_gt.entry(gt.class_id).or_default() += 1;
        }
    }
    if n_gt.is_empty() {
        return (None, BTreeMap::new());
    }
    let mut per_class: BTreeMap<u32, f64> = n_gt.keys().map(|&c| (c, 0.0)).collect();
    for &thr in thresholds {
        let scored = scored_outcomes(index, dets, thr, ignored);
        for (&c, &n) in &n_gt {
            let mut mine: Vec<_> = scored.iter().copied().filter(|s| dets[s.1].class_id == c).collect();
            *per_class.get_mut(&c).unwrap() += interpolated_ap(&pr_curve(&mut mine, n));
        }
    }
    for v in per_class.values_mut() {
        *v /= thresholds.len() as f64;
    }
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    (Some(mean), per_class)
}

/// Mean over `thresholds` of the class-averaged AP; 0 when there is no
/// ground truth at all.
pub fn map_at(dets: &[Detection], gts: &[GroundTruthInstance], thresholds: &[f64]) -> Result<f64> {
    validate_thresholds(thresholds)?;
    let index = build_index(dets, gts, 1)?;
    Ok(map_over(&index, dets, gts, thresholds, &|_| false).0.unwrap_or(0.0))
}
