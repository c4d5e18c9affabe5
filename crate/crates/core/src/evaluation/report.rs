use super::matching::{build_index, interpolated_ap, map_over, pr_curve, pr_from_counts, scored_outcomes, ImageIndex};
use super::{Detection, GroundTruthInstance, OcclusionLevel, PrPoint, Result, MAP50_95_THRESHOLDS};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub by_occlusion: bool,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            by_occlusion: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub n_gt: usize,
    pub ap50: f64,
    pub ap50_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub n_gt: usize,
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
}

/// `precision` and `recall` are taken at the maximum-F1 point of the
/// IoU-0.50 curve, which is reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
    pub per_class: BTreeMap<u32, ClassReport>,
    pub per_occlusion_level: BTreeMap<OcclusionLevel, LevelReport>,
    pub pr_curve: Vec<PrPoint>,
}

fn best_f1(curve: &[PrPoint], n_gt: usize) -> (f64, f64) {
    let mut best = None;
    let mut best_f1 = -1.0;
    for p in curve {
        let s = p.precision + p.recall;
        let f1 = if s > 0.0 { 2.0 * p.precision * p.recall / s } else { 0.0 };
        if f1 > best_f1 {
            best_f1 = f1;
            best = Some((p.precision, p.recall));
        }
    }
    best.unwrap_or_else(|| pr_from_counts(0, 0, n_gt))
}

struct Slice {
    n_gt: usize,
    precision: f64,
    recall: f64,
    map50: f64,
    map50_95: f64,
    per_class: BTreeMap<u32, (f64, f64)>,
    curve: Vec<PrPoint>,
}

fn slice(index: &[ImageIndex], dets: &[Detection], gts: &[GroundTruthInstance], ignored: &dyn Fn(usize) -> bool) -> Slice {
    let n_gt = (0..gts.len()).filter(|&g| !ignored(g)).count();
    let mut scored = scored_outcomes(index, dets, 0.5, ignored);
    let curve = pr_curve(&mut scored, n_gt);
    let (precision, recall) = best_f1(&curve, n_gt);
    let (m50, c50) = map_over(index, dets, gts, &[0.5], ignored);
    let (m5095, c5095) = map_over(index, dets, gts, &MAP50_95_THRESHOLDS, ignored);
    let per_class = c50.into_iter().map(|(c, a)| (c, (a, c5095[&c]))).collect();
    Slice {
        n_gt,
        precision,
        recall,
        map50: m50.unwrap_or(0.0),
        map50_95: m5095.unwrap_or(0.0),
        per_class,
        curve,
    }
}

/// Full report against amodal ground truth. Per-level figures exclude the
/// ground truths of other levels; detections matching those are dropped
/// rather than counted as false positives.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruthInstance], opts: &EvalOptions) -> Result<EvalReport> {
    let index = build_index(dets, gts, opts.workers)?;
    let all = slice(&index, dets, gts, &|_| false);
    let mut per_class = BTreeMap::new();
    for (c, (ap50, ap50_95)) in all.per_class {
        let n_gt = gts.iter().filter(|g| g.class_id == c).count();
        per_class.insert(c, ClassReport { n_gt, ap50, ap50_95 });
    }
    let mut per_occlusion_level = BTreeMap::new();
    if opts.by_occlusion {
        let levels: Vec<Option<OcclusionLevel>> = gts.iter().map(|g| g.level()).collect();
        for level in OcclusionLevel::ALL {
            if !levels.contains(&Some(level)) {
                continue;
            }
            let s = slice(&index, dets, gts, &|g| levels[g] != Some(level));
            per_occlusion_level.insert(
                level,
                LevelReport {
                    n_gt: s.n_gt,
                    precision: s.precision,
                    recall: s.recall,
                    map50: s.map50,
                    map50_95: s.map50_95,
                },
            );
        }
    }
    Ok(EvalReport {
        precision: all.precision,
        recall: all.recall,
        map50: all.map50,
        map50_95: all.map50_95,
        per_class,
        per_occlusion_level,
        pr_curve: all.curve,
    })
}

impl EvalReport {
    /// AP of the pooled IoU-0.50 curve, all classes together.
    pub fn pooled_ap50(&self) -> f64 {
        interpolated_ap(&self.pr_curve)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialises")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("precision", self.precision),
            ("recall", self.recall),
            ("mAP@50", self.map50),
            ("mAP@50:95", self.map50_95),
        ] {
            s.push_str(&format!("{k:<10} {v:>8.4}\n"));
        }
        s.push_str(&format!("\n{:<10} {:>6} {:>8} {:>9}\n", "class", "n_gt", "AP50", "AP50:95"));
        for (c, r) in &self.per_class {
            s.push_str(&format!("{c:<10} {:>6} {:>8.4} {:>9.4}\n", r.n_gt, r.ap50, r.ap50_95));
        }
        if !self.per_occlusion_level.is_empty() {
            s.push_str(&format!(
                "\n{:<10} {:>6} {:>8} {:>8} {:>8} {:>9}\n",
                "occlusion", "n_gt", "P", "R", "mAP50", "mAP50:95"
            ));
            for (l, r) in &self.per_occlusion_level {
                s.push_str(&format!(
                    "{:<10} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>9.4}\n",
                    l.name(),
                    r.n_gt,
                    r.precision,
                    r.recall,
                    r.map50,
                    r.map50_95
                ));
            }
        }
        s
    }
}
