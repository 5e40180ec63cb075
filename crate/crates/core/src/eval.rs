//! IoU-based detection metrics over a set of grounded queries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lifting::Mask3D;

pub const THRESHOLDS: [f64; 2] = [0.25, 0.5];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("query {0} has no ground-truth mask")]
    MissingGroundTruth(String),
}

/// Intersection over union of two sorted, duplicate-free id lists.
/// Two empty sets count as a perfect match.
pub fn iou(pred: &[u32], gt: &[u32]) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < pred.len() && j < gt.len() {
        match pred[i].cmp(&gt[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = pred.len() + gt.len() - inter;
    inter as f64 / union as f64
}

fn threshold_key(t: f64) -> String {
    format!("{t}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub iou: f64,
    pub confidence: f64,
    pub tp_at: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap25: f64,
    pub ap50: f64,
    pub ar25: f64,
    pub ar50: f64,
    pub miou: f64,
    pub per_query: Vec<EvalRecord>,
    pub config_fingerprint: String,
}

/// One query's prediction paired with its ground truth, if known.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub query_id: &'a str,
    pub prediction: &'a Mask3D,
    pub ground_truth: Option<&'a [u32]>,
}

/// Average precision with all-point interpolation. Every query contributes
/// one detection ranked by confidence (ties keep input order) and one
/// positive, so `npos` is the number of queries.
pub fn average_precision(scored: &[(f64, bool)]) -> f64 {
    let npos = scored.len();
    if npos == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..npos).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut precision = Vec::with_capacity(npos);
    let mut recall = Vec::with_capacity(npos);
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if scored[i].1 {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / npos as f64);
    }
    for i in (0..npos.saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..npos {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    ap
}

pub fn evaluate(items: &[EvalItem<'_>], config_fingerprint: &str) -> Result<EvalReport, EvalError> {
    let mut per_query = Vec::with_capacity(items.len());
    for item in items {
        let gt = item.ground_truth.ok_or_else(|| EvalError::MissingGroundTruth(item.query_id.to_string()))?;
        let v = iou(&item.prediction.point_ids, gt);
        per_query.push(EvalRecord {
            query_id: item.query_id.to_string(),
            iou: v,
            confidence: item.prediction.confidence,
            tp_at: THRESHOLDS.iter().map(|&t| (threshold_key(t), v >= t)).collect(),
        });
    }
    let n = per_query.len();
    let mean = |f: &dyn Fn(&EvalRecord) -> f64| if n == 0 { 0.0 } else { per_query.iter().map(f).sum::<f64>() / n as f64 };
    let ap = |t: f64| {
        let scored: Vec<(f64, bool)> = per_query.iter().map(|r| (r.confidence, r.iou >= t)).collect();
        average_precision(&scored)
    };
    let ar = |t: f64| mean(&|r| if r.iou >= t { 1.0 } else { 0.0 });
    Ok(EvalReport {
        ap25: ap(0.25),
        ap50: ap(0.5),
        ar25: ar(0.25),
        ar50: ar(0.5),
        miou: mean(&|r| r.iou),
        config_fingerprint: config_fingerprint.to_string(),
        per_query,
    })
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_fingerprint<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes to JSON");
    Sha256::digest(&json).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Aligned text table, metrics as percentages with two decimals.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).chain(["Config".len()]).max().unwrap_or(6);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n", "Config", "AP25", "AP50", "AR25", "AR50", "mIoU");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{label:<width$}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}",
            r.ap25 * 100.0,
            r.ap50 * 100.0,
            r.ar25 * 100.0,
            r.ar50 * 100.0,
            r.miou * 100.0
        );
    }
    out
}

/// Machine-readable rows with metrics as fractions.
pub fn format_csv(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::from("config,ap25,ap50,ar25,ar50,miou,fingerprint\n");
    for (label, r) in rows {
        let quoted = if label.contains([',', '"']) { format!("\"{}\"", label.replace('"', "\"\"")) } else { label.clone() };
        let _ = writeln!(out, "{quoted},{},{},{},{},{},{}", r.ap25, r.ap50, r.ar25, r.ar50, r.miou, r.config_fingerprint);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(ids: &[u32], confidence: f64) -> Mask3D {
        Mask3D { point_ids: ids.to_vec(), confidence }
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(iou(&[1, 2, 3], &[2, 3, 4]), 0.5);
        assert_eq!(iou(&[], &[1]), 0.0);
        assert_eq!(iou(&[], &[]), 1.0);
    }

    #[test]
    fn two_query_example() {
        let (a, b) = (mask(&[1], 1.0), mask(&[9], 0.5));
        let gt = [1u32];
        let items = [
            EvalItem { query_id: "a", prediction: &a, ground_truth: Some(&gt) },
            EvalItem { query_id: "b", prediction: &b, ground_truth: Some(&gt) },
        ];
        let r = evaluate(&items, "x").unwrap();
        assert_eq!(r.miou, 0.5);
        assert_eq!(r.ar50, 0.5);
        assert_eq!(r.ap50, 0.5);
        assert_eq!(r.per_query[0].tp_at["0.5"], true);
        assert_eq!(r.per_query[1].tp_at["0.25"], false);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let gt = [3u32, 4];
        let good = mask(&[3, 4], 1.0);
        let none = mask(&[], 0.0);
        let all_good: Vec<_> = (0..3).map(|_| EvalItem { query_id: "q", prediction: &good, ground_truth: Some(&gt) }).collect();
        let r = evaluate(&all_good, "").unwrap();
        assert_eq!((r.ap25, r.ap50, r.ar25, r.ar50, r.miou), (1.0, 1.0, 1.0, 1.0, 1.0));
        let all_empty: Vec<_> = (0..3).map(|_| EvalItem { query_id: "q", prediction: &none, ground_truth: Some(&gt) }).collect();
        let r = evaluate(&all_empty, "").unwrap();
        assert_eq!((r.ap25, r.ap50, r.ar25, r.ar50, r.miou), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_ground_truth() {
        let m = mask(&[], 0.0);
        let items = [EvalItem { query_id: "q7", prediction: &m, ground_truth: None }];
        assert_eq!(evaluate(&items, ""), Err(EvalError::MissingGroundTruth("q7".into())));
    }

    #[test]
    fn fingerprint_is_stable_hex() {
        let f = config_fingerprint(&serde_json::json!({"tau": 0.7}));
        assert_eq!(f.len(), 64);
        assert_eq!(f, config_fingerprint(&serde_json::json!({"tau": 0.7})));
        assert_ne!(f, config_fingerprint(&serde_json::json!({"tau": 0.5})));
        // sha256 of the empty JSON string "" (two quote characters).
        assert_eq!(config_fingerprint(&""), "12ae32cb1ec02d01eda3581b127c1fee3b0dc53572ed6baf239721a03d82e126");
    }

    #[test]
    fn table_and_csv() {
        let m = mask(&[1], 1.0);
        let gt = [1u32];
        let r = evaluate(&[EvalItem { query_id: "q", prediction: &m, ground_truth: Some(&gt) }], "fp").unwrap();
        let rows = vec![("K=4, verify".to_string(), r.clone()), ("K=1, no window, no verify".to_string(), r)];
        let t = format_table(&rows);
        assert!(t.lines().nth(1).unwrap().starts_with("K=4, verify  "));
        assert!(t.contains("100.00"));
        let csv = format_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().starts_with("\"K=4, verify\",1,1,1,1,1,fp"));
    }

    proptest! {
        #[test]
        fn ar_and_miou_are_order_invariant(
            ious in proptest::collection::vec((0u32..5, 0.0f64..1.0), 1..30),
            seed in any::<u64>(),
        ) {
            let gt: Vec<u32> = (0..4).collect();
            let preds: Vec<Mask3D> = ious.iter().map(|(k, c)| mask(&(0..*k).collect::<Vec<_>>(), *c)).collect();
            let items: Vec<EvalItem> = preds.iter().map(|p| EvalItem { query_id: "q", prediction: p, ground_truth: Some(&gt) }).collect();
            let mut shuffled = items.clone();
            let n = shuffled.len();
            for i in 0..n {
                let j = ((seed.rotate_left(i as u32) ^ i as u64) % n as u64) as usize;
                shuffled.swap(i, j);
            }
            let a = evaluate(&items, "").unwrap();
            let b = evaluate(&shuffled, "").unwrap();
            prop_assert_eq!(a.ar25, b.ar25);
            prop_assert_eq!(a.ar50, b.ar50);
            prop_assert!((a.miou - b.miou).abs() < 1e-12);
            for v in [a.ap25, a.ap50, a.ar25, a.ar50, a.miou] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(a.ap50 <= a.ap25);
        }
    }
}
