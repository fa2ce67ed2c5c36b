//! Jaccard index and per-sequence reports.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::video::BinaryMask;

/// `|pred ∩ gt| / |pred ∪ gt|`, with two empty masks scoring 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub name: String,
    pub per_frame_iou: Vec<f64>,
    pub sequence_miou: f64,
}

impl EvalReport {
    pub fn from_ious(name: impl Into<String>, per_frame_iou: Vec<f64>) -> Result<Self> {
        if per_frame_iou.is_empty() {
            return Err(Error::Invalid("cannot evaluate an empty sequence".into()));
        }
        let sequence_miou = per_frame_iou.iter().sum::<f64>() / per_frame_iou.len() as f64;
        Ok(Self {
            name: name.into(),
            per_frame_iou,
            sequence_miou,
        })
    }

    /// `frame_index,iou` rows followed by `miou,<value>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,iou\n");
        for (i, v) in self.per_frame_iou.iter().enumerate() {
            out.push_str(&format!("{i},{v:.6}\n"));
        }
        out.push_str(&format!("miou,{:.6}\n", self.sequence_miou));
        out
    }
}

pub fn evaluate_sequence(name: impl Into<String>, preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    let ious = preds.iter().zip(gts).map(|(p, g)| iou(p, g)).collect::<Result<Vec<_>>>()?;
    EvalReport::from_ious(name, ious)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(1, bits.len(), bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn examples() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert!((iou(&a, &mask(&[0, 1, 1, 0])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
        assert!(iou(&a, &mask(&[0])).is_err());
    }

    #[test]
    fn sequence_mean_and_csv() {
        let r = EvalReport::from_ious("s", vec![1.0, 0.5]).unwrap();
        assert_eq!(r.sequence_miou, 0.75);
        assert_eq!(r.to_csv(), "frame_index,iou\n0,1.000000\n1,0.500000\nmiou,0.750000\n");
        let m = mask(&[1, 0, 1]);
        let single = evaluate_sequence("s", std::slice::from_ref(&m), &[mask(&[1, 1, 1])]).unwrap();
        assert!((single.sequence_miou - 2.0 / 3.0).abs() < 1e-15);
        assert!(evaluate_sequence("s", std::slice::from_ref(&m), &[]).is_err());
        assert!(evaluate_sequence("s", &[], &[]).is_err());
    }
}
