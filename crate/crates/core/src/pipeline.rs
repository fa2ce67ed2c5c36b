//! Stage runners shared by the command-line subcommands.
//!
//! Output layout under the pipeline output directory:
//!
//! ```text
//! flow/       00000_fw.flo (t -> t+1), 00001_bw.flo (t -> t-1), optional PPMs
//! graphcut/   00000.pgm ... and graphcut.json
//! refine/     seghead.bin, train_log.json, masks/00000.pgm ...
//! eval.csv    only when the sequence has ground truth
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_sequence, EvalReport};
use crate::flow::{flow_to_rgb, horn_schunck, read_flo, write_flo, FlowField, HsConfig, MaxMagnitude};
use crate::graphcut::{graphcut_frame, CutDiagnostics, GraphCutConfig};
use crate::netpbm::{load_mask_dir, load_sequence, mask_file_name, save_frame, save_mask};
use crate::refine::{train, write_seghead, FlowTable, TrainConfig, TrainLog};
use crate::rng::derive_seed;
use crate::video::{binarize, BinaryMask, VideoSequence};

/// Flow stage settings: Horn–Schunck parameters plus optional directories of
/// externally computed `.flo` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowStageConfig {
    pub smoothness: f64,
    pub n_iters: usize,
    pub n_levels: usize,
    pub warps_per_level: usize,
    /// Flows consumed by the graph-cut stage instead of `<out>/flow`.
    pub graphcut_flow_dir: Option<PathBuf>,
    /// Flows consumed by the refine stage instead of `<out>/flow`.
    pub warp_flow_dir: Option<PathBuf>,
    pub write_rgb: bool,
}

impl Default for FlowStageConfig {
    fn default() -> Self {
        let hs = HsConfig::default();
        Self {
            smoothness: hs.smoothness,
            n_iters: hs.n_iters,
            n_levels: hs.n_levels,
            warps_per_level: hs.warps_per_level,
            graphcut_flow_dir: None,
            warp_flow_dir: None,
            write_rgb: false,
        }
    }
}

impl FlowStageConfig {
    pub fn hs(&self) -> HsConfig {
        HsConfig {
            smoothness: self.smoothness,
            n_iters: self.n_iters,
            n_levels: self.n_levels,
            warps_per_level: self.warps_per_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainStageConfig {
    pub n_epochs: usize,
    pub neighbor_offsets: Vec<i64>,
    pub warp_branch_prob: f64,
    pub learning_rate: f64,
}

impl Default for TrainStageConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            n_epochs: t.n_epochs,
            neighbor_offsets: t.neighbor_offsets,
            warp_branch_prob: t.warp_branch_prob,
            learning_rate: t.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalStageConfig {
    /// Threshold applied to the head's output before scoring.
    pub threshold: f64,
}

impl Default for EvalStageConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub sequence_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Top-level seed; each stage derives its own from it by label.
    pub seed: u64,
    pub paths: PathsConfig,
    pub flow: FlowStageConfig,
    pub graphcut: GraphCutConfig,
    pub train: TrainStageConfig,
    pub eval: EvalStageConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.graphcut.validate()?;
        self.hs_validate()?;
        self.train_config().validate()?;
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(Error::Invalid(format!(
                "eval threshold {} outside (0, 1)",
                self.eval.threshold
            )));
        }
        Ok(())
    }

    fn hs_validate(&self) -> Result<()> {
        let hs = self.flow.hs();
        if !(hs.smoothness > 0.0) || hs.n_iters == 0 || hs.n_levels == 0 || hs.warps_per_level == 0 {
            return Err(Error::Invalid("flow parameters must all be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_epochs: self.train.n_epochs,
            seed: derive_seed(self.seed, "refine"),
            neighbor_offsets: self.train.neighbor_offsets.clone(),
            warp_branch_prob: self.train.warp_branch_prob,
            learning_rate: self.train.learning_rate,
        }
    }
}

/// Caps the global worker pool at `FLOWCUT_THREADS` when set. Outputs do not
/// depend on the worker count.
pub fn init_threads_from_env() -> Result<()> {
    let Ok(raw) = std::env::var("FLOWCUT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("FLOWCUT_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

pub fn fw_flow_name(t: usize) -> String {
    format!("{t:05}_fw.flo")
}

pub fn bw_flow_name(t: usize) -> String {
    format!("{t:05}_bw.flo")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a sequence, with ground truth when a `gt/` directory exists.
pub fn open_sequence(dir: &Path) -> Result<VideoSequence> {
    load_sequence(dir, dir.join("gt").is_dir())
}

/// Writes forward flow `t -> t+1` for `t < n-1` and backward flow `t -> t-1`
/// for `t > 0`.
pub fn run_flow(seq: &VideoSequence, out_dir: &Path, cfg: &FlowStageConfig) -> Result<()> {
    let n = seq.len();
    if n < 2 {
        return Err(Error::Invalid(format!("flow needs at least 2 frames, sequence has {n}")));
    }
    create_dir(out_dir)?;
    let hs = cfg.hs();
    let jobs: Vec<(usize, usize, String)> = (0..n - 1)
        .map(|t| (t, t + 1, fw_flow_name(t)))
        .chain((1..n).map(|t| (t, t - 1, bw_flow_name(t))))
        .collect();
    jobs.par_iter().try_for_each(|(from, to, name)| -> Result<()> {
        let flow = horn_schunck(&seq.frames()[*from], &seq.frames()[*to], &hs)?;
        let path = out_dir.join(name);
        write_flo(&flow, &path)?;
        if cfg.write_rgb {
            save_frame(&flow_to_rgb(&flow, MaxMagnitude::Auto), path.with_extension("ppm"))?;
        }
        Ok(())
    })
}

/// Flow used for the cut of frame `t`: forward, or backward on the last frame.
pub fn graphcut_flow_path(flow_dir: &Path, t: usize, n: usize) -> PathBuf {
    if t + 1 < n {
        flow_dir.join(fw_flow_name(t))
    } else {
        flow_dir.join(bw_flow_name(t))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameCut {
    pub frame: usize,
    #[serde(flatten)]
    pub diagnostics: CutDiagnostics,
}

pub fn run_graphcut(
    seq: &VideoSequence,
    flow_dir: &Path,
    out_dir: &Path,
    cfg: &GraphCutConfig,
) -> Result<Vec<BinaryMask>> {
    cfg.validate()?;
    let n = seq.len();
    if n < 2 {
        return Err(Error::Invalid("graph cut needs flow, so at least 2 frames".into()));
    }
    let flows = (0..n)
        .map(|t| read_flo(graphcut_flow_path(flow_dir, t, n)))
        .collect::<Result<Vec<_>>>()?;
    let cuts = seq
        .frames()
        .par_iter()
        .zip(&flows)
        .map(|(f, fl)| graphcut_frame(f, fl, cfg))
        .collect::<Result<Vec<_>>>()?;
    create_dir(out_dir)?;
    let mut masks = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for (t, (mask, cut)) in cuts.into_iter().enumerate() {
        save_mask(&mask, out_dir.join(mask_file_name(t)))?;
        records.push(FrameCut {
            frame: t,
            diagnostics: cut.diagnostics(),
        });
        masks.push(mask);
    }
    write_json(&records, &out_dir.join("graphcut.json"))?;
    Ok(masks)
}

/// Flow table for training: one-step flows come from `flow_dir`, others are
/// computed on demand.
pub fn warp_flows<'a>(seq: &'a VideoSequence, flow_dir: &Path, hs: HsConfig) -> Result<FlowTable<'a>> {
    let mut table = FlowTable::new(seq.frames(), Some(hs));
    for t in 0..seq.len() {
        let mut load = |name: String, to: usize| -> Result<()> {
            let flow: FlowField = read_flo(flow_dir.join(name))?;
            table.insert(t, to, flow);
            Ok(())
        };
        if t + 1 < seq.len() {
            load(fw_flow_name(t), t + 1)?;
        }
        if t > 0 {
            load(bw_flow_name(t), t - 1)?;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub masks: Vec<BinaryMask>,
    pub log: TrainLog,
}

pub fn run_refine(
    seq: &VideoSequence,
    pseudo_dir: &Path,
    flow_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<RefineOutput> {
    let pseudo = load_mask_dir(pseudo_dir)?;
    if pseudo.len() != seq.len() {
        return Err(Error::Dimension(format!(
            "{} pseudo masks for {} frames",
            pseudo.len(),
            seq.len()
        )));
    }
    let mut flows = warp_flows(seq, flow_dir, cfg.flow.hs())?;
    let (head, log) = train(seq.frames(), &pseudo, &mut flows, &cfg.train_config())?;
    // inference uses exactly the weights that are saved
    let head = head.rounded_to_f32();
    let mask_dir = out_dir.join("masks");
    create_dir(&mask_dir)?;
    write_seghead(&head, &out_dir.join("seghead.bin"))?;
    write_json(&log, &out_dir.join("train_log.json"))?;
    let masks: Vec<BinaryMask> = seq
        .frames()
        .par_iter()
        .map(|f| binarize(&head.forward(f), cfg.eval.threshold))
        .collect();
    for (t, m) in masks.iter().enumerate() {
        save_mask(m, mask_dir.join(mask_file_name(t)))?;
    }
    Ok(RefineOutput { masks, log })
}

pub fn run_eval(pred_dir: &Path, gt_dir: &Path, out_csv: &Path) -> Result<EvalReport> {
    let preds = load_mask_dir(pred_dir)?;
    let gts = load_mask_dir(gt_dir)?;
    let name = gt_dir
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = evaluate_sequence(name, &preds, &gts)?;
    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(out_csv, report.to_csv()).map_err(|e| Error::io(out_csv, e))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub pseudo: Vec<BinaryMask>,
    pub refined: Vec<BinaryMask>,
    /// `None` when the sequence has no ground truth.
    pub eval: Option<EvalReport>,
}

/// flow, graphcut, refine, then eval when ground truth is present.
pub fn run_pipeline(seq_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let seq = open_sequence(seq_dir)?;
    let flow_dir = out_dir.join("flow");
    if cfg.flow.graphcut_flow_dir.is_none() || cfg.flow.warp_flow_dir.is_none() {
        run_flow(&seq, &flow_dir, &cfg.flow)?;
    }
    let gc_flow = cfg.flow.graphcut_flow_dir.clone().unwrap_or_else(|| flow_dir.clone());
    let warp_flow = cfg.flow.warp_flow_dir.clone().unwrap_or(flow_dir);
    let gc_dir = out_dir.join("graphcut");
    let pseudo = run_graphcut(&seq, &gc_flow, &gc_dir, &cfg.graphcut)?;
    let refine_dir = out_dir.join("refine");
    let refined = run_refine(&seq, &gc_dir, &warp_flow, &refine_dir, cfg)?;
    let eval = if seq.gt_masks().is_some() {
        Some(run_eval(
            &refine_dir.join("masks"),
            &seq_dir.join("gt"),
            &out_dir.join("eval.csv"),
        )?)
    } else {
        None
    };
    Ok(PipelineOutcome {
        pseudo,
        refined: refined.masks,
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg.graphcut.alpha, 0.7);
        assert_eq!(cfg.graphcut.tau, 0.25);
        assert_eq!(cfg.train.n_epochs, 200);
        assert_eq!(cfg.eval.threshold, 0.5);
        assert!(PipelineConfig::from_json(r#"{"graphcut": {"alpha": 0.5}}"#).is_ok());
        assert!(PipelineConfig::from_json(r#"{"graphcut": {"alpah": 0.5}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"eval": {"threshold": 1.0}}"#).is_err());
    }

    #[test]
    fn stage_seeds_follow_the_top_seed() {
        let a = PipelineConfig::from_json(r#"{"seed": 1}"#).unwrap();
        let b = PipelineConfig::from_json(r#"{"seed": 2}"#).unwrap();
        assert_ne!(a.train_config().seed, b.train_config().seed);
        assert_eq!(a.train_config().seed, derive_seed(1, "refine"));
    }

    #[test]
    fn flow_names() {
        assert_eq!(fw_flow_name(3), "00003_fw.flo");
        assert_eq!(bw_flow_name(12), "00012_bw.flo");
        let d = Path::new("f");
        assert_eq!(graphcut_flow_path(d, 0, 3), d.join("00000_fw.flo"));
        assert_eq!(graphcut_flow_path(d, 2, 3), d.join("00002_bw.flo"));
    }
}
