//! Detector output ingestion, confidence filtering, overlap suppression and
//! per-detection visual queries.
//!
//! Detection files hold one row per box: `class x y w h confidence`. The class
//! may contain spaces ("wall clock"); the last five fields are numeric.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RoomId;
use crate::error::{Error, Result};
use crate::vecindex::{RankedList, VectorIndex};
use crate::vector::FeatureVector;

/// Default detector confidence cut-off.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.1;
/// Default IoU above which two boxes count as overlapping.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        let b = BBox { x, y, width, height };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        let ok = [self.x, self.y, self.width, self.height].iter().all(|v| v.is_finite())
            && self.x >= 0.0
            && self.y >= 0.0
            && self.width > 0.0
            && self.height > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid box {self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = ((a.x + a.width).min(b.x + b.width) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.height).min(b.y + b.height) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_label: impl Into<String>, bbox: BBox, confidence: f64) -> Result<Self> {
        let d = Detection {
            class_label: class_label.into(),
            bbox,
            confidence,
        };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<()> {
        if self.class_label.trim().is_empty() {
            return Err(Error::InvalidConfig("detection has an empty class".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidConfig(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        self.bbox.check()
    }
}

pub fn parse_detections(path: &Path, text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let row = format!("row {}", lineno + 1);
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 6 {
            return Err(Error::malformed(path, row, "expected `class x y w h confidence`"));
        }
        let (class, nums) = fields.split_at(fields.len() - 5);
        let nums = nums
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::malformed(path, &row, e.to_string()))?;
        let det = Detection {
            class_label: class.join(" "),
            bbox: BBox {
                x: nums[0],
                y: nums[1],
                width: nums[2],
                height: nums[3],
            },
            confidence: nums[4],
        };
        det.check()
            .map_err(|e| Error::malformed(path, &row, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(path, &text)
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        s.push_str(&format!(
            "{} {} {} {} {} {}\n",
            d.class_label, d.bbox.x, d.bbox.y, d.bbox.width, d.bbox.height, d.confidence
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub threshold: f64,
    pub iou_threshold: f64,
    /// Only suppress overlapping boxes of the same class.
    pub per_class: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            per_class: false,
        }
    }
}

/// A detection that survived filtering, with its row in the source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptDetection {
    pub source_row: usize,
    pub detection: Detection,
}

fn priority(a: &KeptDetection, b: &KeptDetection) -> Ordering {
    let (da, db) = (&a.detection, &b.detection);
    db.confidence
        .total_cmp(&da.confidence)
        .then_with(|| db.bbox.area().total_cmp(&da.bbox.area()))
        .then_with(|| da.bbox.x.total_cmp(&db.bbox.x))
        .then_with(|| da.bbox.y.total_cmp(&db.bbox.y))
        .then_with(|| a.source_row.cmp(&b.source_row))
}

/// Drops low-confidence boxes, then greedily keeps the most confident box
/// among each overlapping group. Output is in descending confidence order.
pub fn filter_detections(dets: &[Detection], config: &FilterConfig) -> Vec<KeptDetection> {
    let rows: Vec<KeptDetection> = dets
        .iter()
        .enumerate()
        .map(|(source_row, d)| KeptDetection {
            source_row,
            detection: d.clone(),
        })
        .collect();
    filter_kept(rows, config)
}

/// Same as [`filter_detections`] but keeps existing source rows, so that
/// re-filtering an already filtered list is a no-op.
pub fn filter_kept(mut rows: Vec<KeptDetection>, config: &FilterConfig) -> Vec<KeptDetection> {
    rows.retain(|k| k.detection.confidence >= config.threshold);
    rows.sort_by(priority);
    let mut kept: Vec<KeptDetection> = Vec::with_capacity(rows.len());
    for cand in rows {
        let overlaps = kept.iter().any(|k| {
            (!config.per_class || k.detection.class_label == cand.detection.class_label)
                && iou(&k.detection.bbox, &cand.detection.bbox) > config.iou_threshold
        });
        if !overlaps {
            kept.push(cand);
        }
    }
    kept
}

/// Visual results for one kept detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiResult {
    pub source_row: usize,
    pub detection: Detection,
    pub results: RankedList,
    /// The detection's class had no index partition and the full index was searched.
    pub fallback: bool,
}

/// Runs one class-restricted visual search per kept detection.
///
/// `roi_features` is indexed by source row.
pub fn room_query(
    room: &RoomId,
    kept: &[KeptDetection],
    roi_features: &[FeatureVector],
    index: &VectorIndex,
    k: usize,
) -> Result<Vec<RoiResult>> {
    kept.iter()
        .map(|kd| {
            let feature = roi_features.get(kd.source_row).ok_or_else(|| Error::MissingRoiFeature {
                room: room.to_string(),
                row: kd.source_row,
            })?;
            let (results, fallback) =
                index.knn_with_fallback(feature, k, Some(&kd.detection.class_label))?;
            Ok(RoiResult {
                source_row: kd.source_row,
                detection: kd.detection.clone(),
                results,
                fallback,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(class: &str, x: f64, y: f64, w: f64, h: f64, c: f64) -> Detection {
        Detection::new(class, BBox::new(x, y, w, h).unwrap(), c).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = BBox::new(1.0, 0.0, 2.0, 2.0).unwrap();
        let far = BBox::new(10.0, 10.0, 1.0, 1.0).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &far), 0.0);
        assert!((iou(&a, &b) - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn below_threshold_is_dropped() {
        let out = filter_detections(&[det("chair", 0.0, 0.0, 5.0, 5.0, 0.05)], &FilterConfig::default());
        assert!(out.is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let out = filter_detections(&[det("chair", 0.0, 0.0, 5.0, 5.0, 0.1)], &FilterConfig::default());
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn identical_boxes_keep_most_confident() {
        let dets = [
            det("chair", 1.0, 1.0, 5.0, 5.0, 0.8),
            det("sofa", 1.0, 1.0, 5.0, 5.0, 0.9),
        ];
        let out = filter_detections(&dets, &FilterConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].detection.confidence, 0.9);
        assert_eq!(out[0].source_row, 1);
    }

    #[test]
    fn per_class_suppression_keeps_other_classes() {
        let dets = [
            det("chair", 1.0, 1.0, 5.0, 5.0, 0.8),
            det("sofa", 1.0, 1.0, 5.0, 5.0, 0.9),
        ];
        let cfg = FilterConfig {
            per_class: true,
            ..Default::default()
        };
        assert_eq!(filter_detections(&dets, &cfg).len(), 2);
    }

    #[test]
    fn disjoint_boxes_both_kept() {
        let dets = [
            det("chair", 0.0, 0.0, 2.0, 2.0, 0.2),
            det("table", 50.0, 50.0, 2.0, 2.0, 0.3),
        ];
        let out = filter_detections(&dets, &FilterConfig::default());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].detection.class_label, "table");
    }

    #[test]
    fn parse_rows_with_multiword_class() {
        let text = "chair 1 2 3 4 0.5\n\nwall clock 10 10 5 5 0.25\n# comment\nsofa 0 0 1 1 1\n";
        let dets = parse_detections(Path::new("d.txt"), text).unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!(dets[1].class_label, "wall clock");
        assert_eq!(dets[1].bbox.width, 5.0);
        let again = parse_detections(Path::new("d.txt"), &format_detections(&dets)).unwrap();
        assert_eq!(again, dets);
    }

    #[test]
    fn bad_confidence_names_row() {
        let err = parse_detections(Path::new("d.txt"), "chair 1 2 3 4 0.5\nsofa 1 1 1 1 1.3\n").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn empty_file_has_no_detections() {
        assert!(parse_detections(Path::new("d.txt"), "").unwrap().is_empty());
    }
}
