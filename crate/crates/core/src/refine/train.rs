use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState, DEFAULT_LR};
use super::head::{input_tensor, seghead_init, SegHead, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::flow::{horn_schunck, warp_mask, warp_mask_backward, FlowField, HsConfig};
use crate::rng::{derive_seed, SplitMix64};
use crate::video::{binarize, BinaryMask, Frame, SoftMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_epochs: usize,
    pub seed: u64,
    pub neighbor_offsets: Vec<i64>,
    /// Probability of the temporal-consistency branch on a step.
    pub warp_branch_prob: f64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_epochs: 200,
            seed: 0,
            neighbor_offsets: vec![-2, -1, 1, 2],
            warp_branch_prob: 0.5,
            learning_rate: DEFAULT_LR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_offsets.is_empty() || self.neighbor_offsets.contains(&0) {
            return Err(Error::Invalid("neighbor_offsets must be nonempty and nonzero".into()));
        }
        if !(0.0..=1.0).contains(&self.warp_branch_prob) {
            return Err(Error::Invalid(format!(
                "warp_branch_prob {} outside [0, 1]",
                self.warp_branch_prob
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mean absolute difference.
pub fn l1_loss(pred: &SoftMask, target: &SoftMask) -> Result<f64> {
    if (pred.height(), pred.width()) != (target.height(), target.width()) {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs target {}x{}",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    let n = pred.values().len() as f64;
    Ok(pred.values().iter().zip(target.values()).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

fn l1_upstream(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

/// Uniform choice among the offsets that keep `idx + offset` inside
/// `[0, len)`; `None` when no offset does.
pub fn sample_neighbor(idx: usize, len: usize, offsets: &[i64], rng: &mut SplitMix64) -> Option<usize> {
    let valid: Vec<usize> = offsets
        .iter()
        .filter_map(|&o| {
            let j = idx as i64 + o;
            (0..len as i64).contains(&j).then_some(j as usize)
        })
        .collect();
    if valid.is_empty() {
        None
    } else {
        Some(valid[rng.below(valid.len())])
    }
}

/// Source of flow fields between frame pairs, `flow(from, to)` being the
/// flow that maps pixels of `from` onto `to`.
pub trait FlowProvider {
    fn flow(&mut self, from: usize, to: usize) -> Result<FlowField>;
}

/// Precomputed flows, optionally backed by Horn–Schunck for missing pairs.
pub struct FlowTable<'a> {
    frames: &'a [Frame],
    fallback: Option<HsConfig>,
    cache: BTreeMap<(usize, usize), FlowField>,
}

impl<'a> FlowTable<'a> {
    pub fn new(frames: &'a [Frame], fallback: Option<HsConfig>) -> Self {
        Self {
            frames,
            fallback,
            cache: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, from: usize, to: usize, flow: FlowField) {
        self.cache.insert((from, to), flow);
    }
}

impl FlowProvider for FlowTable<'_> {
    fn flow(&mut self, from: usize, to: usize) -> Result<FlowField> {
        if let Some(f) = self.cache.get(&(from, to)) {
            return Ok(f.clone());
        }
        let Some(cfg) = &self.fallback else {
            return Err(Error::MissingFlow { from, to });
        };
        let f = horn_schunck(&self.frames[from], &self.frames[to], cfg)?;
        self.cache.insert((from, to), f.clone());
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Guidance,
    Warp { neighbor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub frame: usize,
    pub branch: Branch,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    pub fn warp_fraction(&self) -> f64 {
        let warps = self.steps.iter().filter(|s| matches!(s.branch, Branch::Warp { .. })).count();
        warps as f64 / self.steps.len().max(1) as f64
    }
}

/// Loss of the temporal-consistency branch: the prediction on `f1` is
/// warped into `f2` with `flow_21` and compared with `m2`.
pub fn warped_loss(pred: &SoftMask, flow_21: &FlowField, m2: &SoftMask) -> Result<f64> {
    l1_loss(&warp_mask(pred, flow_21)?, m2)
}

/// Loss and parameter gradient for one step. `flow_21` selects the
/// temporal-consistency branch.
pub fn loss_and_gradient(
    head: &SegHead,
    frame: &Frame,
    target: &SoftMask,
    flow_21: Option<&FlowField>,
) -> Result<(f64, Vec<f64>)> {
    let pass = head.forward_pass(&input_tensor(frame));
    let pred = pass.mask();
    let (loss, upstream) = match flow_21 {
        None => (l1_loss(&pred, target)?, l1_upstream(pass.output(), target.values())),
        Some(flow) => {
            let warped = warp_mask(&pred, flow)?;
            let loss = l1_loss(&warped, target)?;
            let up = l1_upstream(warped.values(), target.values());
            (loss, warp_mask_backward(&up, flow))
        }
    };
    Ok((loss, head.backward(&pass, &upstream)))
}

/// Trains a head from `seghead_init(derive_seed(seed, "seghead-init"))`.
/// Each epoch visits the frames in order; a step takes the guidance branch
/// when `p < 1 - warp_branch_prob`.
pub fn train(
    frames: &[Frame],
    pseudo: &[BinaryMask],
    flows: &mut dyn FlowProvider,
    cfg: &TrainConfig,
) -> Result<(SegHead, TrainLog)> {
    cfg.validate()?;
    if frames.len() != pseudo.len() {
        return Err(Error::Dimension(format!(
            "{} frames but {} pseudo masks",
            frames.len(),
            pseudo.len()
        )));
    }
    for (f, m) in frames.iter().zip(pseudo) {
        if (f.height(), f.width()) != (m.height(), m.width()) {
            return Err(Error::Dimension("pseudo mask does not match its frame".into()));
        }
    }
    let targets: Vec<SoftMask> = pseudo.iter().map(BinaryMask::to_soft).collect();
    let mut head = seghead_init(derive_seed(cfg.seed, "seghead-init"));
    let mut adam = AdamState::new(PARAM_COUNT, cfg.learning_rate);
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, "schedule"));
    let mut log = TrainLog::default();
    for epoch in 0..cfg.n_epochs {
        for i in 0..frames.len() {
            let p = rng.next_f64();
            let (branch, flow) = if p < 1.0 - cfg.warp_branch_prob {
                (Branch::Guidance, None)
            } else {
                let j = sample_neighbor(i, frames.len(), &cfg.neighbor_offsets, &mut rng)
                    .ok_or_else(|| Error::Invalid(format!("frame {i} has no neighbor in range")))?;
                (Branch::Warp { neighbor: j }, Some(flows.flow(j, i)?))
            };
            let target = match branch {
                Branch::Guidance => &targets[i],
                Branch::Warp { neighbor } => &targets[neighbor],
            };
            let (loss, grad) = loss_and_gradient(&head, &frames[i], target, flow.as_ref())?;
            adam_step(&mut adam, head.params_mut(), &grad)?;
            log.steps.push(StepRecord {
                epoch,
                frame: i,
                branch,
                loss,
            });
        }
    }
    Ok((head, log))
}

pub fn infer(head: &SegHead, frame: &Frame) -> BinaryMask {
    binarize(&head.forward(frame), 0.5)
}
