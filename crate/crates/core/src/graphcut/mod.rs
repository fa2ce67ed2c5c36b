//! Flow-guided spectral graph-cut of a single frame.
//!
//! Patches are vertices; an edge weight blends the cosine similarity of the
//! appearance descriptors with that of the flow-rendering descriptors,
//! `alpha * S_img + (1 - alpha) * S_flow`, and is then snapped to `1` (at or
//! above `tau`) or `epsilon`. The second-smallest generalized eigenvector of
//! `(D - W) y = lambda D y`, thresholded at its mean, splits the graph in
//! two; the side that avoids the frame border is taken as foreground.

mod adjacency;
pub mod eigen;
mod partition;

pub use adjacency::{build_adjacency, combine_similarity, cosine_sim, threshold_adjacency, AdjacencyMatrix};
pub use partition::{bipartition, foreground_patches, select_foreground, side_stats, SideStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, FeatureGrid};
use crate::flow::{flow_to_rgb, FlowField, MaxMagnitude};
use crate::video::{upsample_patch_mask, BinaryMask, Frame, PatchGrid};
use eigen::{lanczos_smallest, symmetric_eigen, SymMatrix};

/// Above this vertex count the eigensolver switches from dense QL to Lanczos.
pub const DENSE_MAX: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMode {
    /// Generalized problem `(D - W) y = lambda D y` (normalized cut).
    Ncut,
    /// Eigenvectors of `W` itself.
    RawW,
}

impl std::str::FromStr for EigenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncut" => Ok(EigenMode::Ncut),
            "raw_w" => Ok(EigenMode::RawW),
            other => Err(Error::Invalid(format!("unknown eigen mode {other:?} (expected ncut or raw_w)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphCutConfig {
    /// Weight of appearance similarity against flow similarity.
    pub alpha: f64,
    /// Edge threshold.
    pub tau: f64,
    /// Weight given to sub-threshold edges; keeps the graph connected.
    pub epsilon: f64,
    pub patch_size: usize,
    pub eigen_mode: EigenMode,
    pub eigen_tol: f64,
    pub eigen_max_iters: usize,
    /// Subtract the per-frame mean descriptor before measuring similarity.
    pub center_features: bool,
}

impl Default for GraphCutConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            tau: 0.25,
            epsilon: 1e-5,
            patch_size: 8,
            eigen_mode: EigenMode::Ncut,
            eigen_tol: 1e-8,
            eigen_max_iters: 20_000,
            center_features: true,
        }
    }
}

impl GraphCutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.tau) {
            return Err(Error::Invalid(format!(
                "epsilon {} must lie in (0, tau = {})",
                self.epsilon, self.tau
            )));
        }
        if self.patch_size == 0 || !(self.eigen_tol > 0.0) || self.eigen_max_iters == 0 {
            return Err(Error::Invalid("patch_size, eigen_tol and eigen_max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Second-smallest eigenpair `(eigvec, eigval)`; the vector has unit norm
/// and its largest-magnitude entry is positive.
pub fn second_smallest_eigenvector(
    w: &AdjacencyMatrix,
    mode: EigenMode,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = w.n();
    if n < 2 {
        return Err(Error::Invalid(format!("graph with {n} vertices has no second eigenvector")));
    }
    let (mut y, lambda, residual) = match mode {
        EigenMode::Ncut => ncut_pair(w, tol, max_iters)?,
        EigenMode::RawW => raw_pair(w, tol, max_iters)?,
    };
    if !(residual <= tol) {
        return Err(Error::NoConvergence {
            iters: max_iters,
            residual,
        });
    }
    canonical_sign(&mut y);
    Ok((y, lambda))
}

fn canonical_sign(y: &mut [f64]) {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if v.abs() > y[best].abs() {
            best = i;
        }
    }
    if y[best] < 0.0 {
        y.iter_mut().for_each(|v| *v = -*v);
    }
}

fn normalize(v: &mut [f64]) {
    let n = eigen::norm(v);
    v.iter_mut().for_each(|x| *x /= n);
}

fn ncut_pair(w: &AdjacencyMatrix, tol: f64, max_iters: usize) -> Result<(Vec<f64>, f64, f64)> {
    let n = w.n();
    let deg = w.degrees();
    if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Invalid(format!("vertex {i} has zero degree")));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    // trivial eigenvector of L_sym (eigenvalue 0)
    let mut trivial: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
    normalize(&mut trivial);

    let (lambda, mut z) = if n <= DENSE_MAX {
        // deflate by lifting the trivial pair above the spectrum (<= 2)
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { 1.0 } else { 0.0 };
                l[i * n + j] = delta - inv_sqrt[i] * w.get(i, j) * inv_sqrt[j] + 3.0 * trivial[i] * trivial[j];
            }
        }
        let e = symmetric_eigen(&SymMatrix::new(n, l))?;
        (e.values[0], e.vectors[0].clone())
    } else {
        let max_deg = deg.iter().cloned().fold(0.0, f64::max);
        let apply = |x: &[f64], out: &mut [f64]| {
            let sx: Vec<f64> = x.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect();
            for (i, o) in out.iter_mut().enumerate() {
                let row = &w.data()[i * n..(i + 1) * n];
                *o = x[i] - inv_sqrt[i] * eigen::dot(row, &sx);
            }
        };
        lanczos_smallest(n, apply, std::slice::from_ref(&trivial), tol / max_deg.max(1.0), max_iters)?
    };
    let c = eigen::dot(&z, &trivial);
    z.iter_mut().zip(&trivial).for_each(|(zi, ti)| *zi -= c * ti);
    normalize(&mut z);

    let mut y: Vec<f64> = z.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect();
    normalize(&mut y);
    let mut r2 = 0.0;
    for i in 0..n {
        let row = &w.data()[i * n..(i + 1) * n];
        let ri = deg[i] * y[i] - eigen::dot(row, &y) - lambda * deg[i] * y[i];
        r2 += ri * ri;
    }
    Ok((y, lambda, r2.sqrt()))
}

fn raw_pair(w: &AdjacencyMatrix, tol: f64, max_iters: usize) -> Result<(Vec<f64>, f64, f64)> {
    let n = w.n();
    let m = SymMatrix::new(n, w.data().to_vec());
    let (lambda, y) = if n <= DENSE_MAX {
        let e = symmetric_eigen(&m)?;
        (e.values[1], e.vectors[1].clone())
    } else {
        let apply = |x: &[f64], out: &mut [f64]| m.matvec(x, out);
        let (_, first) = lanczos_smallest(n, apply, &[], tol, max_iters)?;
        lanczos_smallest(n, apply, &[first], tol, max_iters)?
    };
    let mut wy = vec![0.0; n];
    m.matvec(&y, &mut wy);
    let res = wy.iter().zip(&y).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
    Ok((y, lambda, res))
}

/// Outcome of cutting one frame's patch graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub grid: PatchGrid,
    pub eigvec: Vec<f64>,
    pub eigval: f64,
    /// Partition labels; `true` is side A (`eigvec >= mean`).
    pub labels: Vec<bool>,
    pub fg_is_a: bool,
    /// Foreground flag per patch, row-major over the grid.
    pub patch_mask: Vec<bool>,
}

/// Per-frame record written next to the pseudo masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutDiagnostics {
    pub eigval: f64,
    pub size_a: usize,
    pub size_b: usize,
    pub border_fraction_a: f64,
    pub border_fraction_b: f64,
    pub fg_is_a: bool,
    pub fg_patches: usize,
}

impl CutResult {
    pub fn diagnostics(&self) -> CutDiagnostics {
        let a = side_stats(&self.labels, &self.grid, true);
        let b = side_stats(&self.labels, &self.grid, false);
        CutDiagnostics {
            eigval: self.eigval,
            size_a: a.size,
            size_b: b.size,
            border_fraction_a: a.border_fraction(),
            border_fraction_b: b.border_fraction(),
            fg_is_a: self.fg_is_a,
            fg_patches: self.patch_mask.iter().filter(|&&x| x).count(),
        }
    }
}

/// Subtracts the mean descriptor over all patches from every descriptor.
pub fn center_features(grid: &FeatureGrid) -> FeatureGrid {
    let (n, d) = (grid.len(), grid.dim());
    let mut mean = vec![0.0f64; d];
    for k in 0..n {
        for (m, &v) in mean.iter_mut().zip(grid.descriptor(k)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let data = (0..n)
        .flat_map(|k| {
            grid.descriptor(k)
                .iter()
                .zip(&mean)
                .map(|(&v, m)| (v as f64 - m) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    FeatureGrid::new(grid.rows(), grid.cols(), d, data).expect("same shape as input")
}

/// Cuts a patch graph given precomputed appearance and flow descriptors.
pub fn cut_features(feat_img: &FeatureGrid, feat_flow: &FeatureGrid, grid: PatchGrid, cfg: &GraphCutConfig) -> Result<CutResult> {
    cfg.validate()?;
    if (feat_img.rows(), feat_img.cols()) != (grid.rows, grid.cols) {
        return Err(Error::Dimension(format!(
            "feature grid {}x{} vs patch grid {}x{}",
            feat_img.rows(),
            feat_img.cols(),
            grid.rows,
            grid.cols
        )));
    }
    let w = if cfg.center_features {
        build_adjacency(&center_features(feat_img), &center_features(feat_flow), cfg.alpha)?
    } else {
        build_adjacency(feat_img, feat_flow, cfg.alpha)?
    };
    let w = threshold_adjacency(&w, cfg.tau, cfg.epsilon)?;
    let (eigvec, eigval) = second_smallest_eigenvector(&w, cfg.eigen_mode, cfg.eigen_tol, cfg.eigen_max_iters)?;
    let labels = bipartition(&eigvec);
    let fg_is_a = select_foreground(&labels, &grid);
    let patch_mask = foreground_patches(&labels, fg_is_a);
    Ok(CutResult {
        grid,
        eigvec,
        eigval,
        labels,
        fg_is_a,
        patch_mask,
    })
}

/// Full per-frame graph-cut: flow rendering, descriptors, similarity graph,
/// spectral bipartition and upsampling to a pixel mask.
pub fn graphcut_frame(frame: &Frame, flow: &FlowField, cfg: &GraphCutConfig) -> Result<(BinaryMask, CutResult)> {
    if frame.height() != flow.height() || frame.width() != flow.width() {
        return Err(Error::Dimension(format!(
            "frame {}x{} vs flow {}x{}",
            frame.height(),
            frame.width(),
            flow.height(),
            flow.width()
        )));
    }
    cfg.validate()?;
    let grid = PatchGrid::new(cfg.patch_size, frame.height(), frame.width())?;
    let flow_rgb = flow_to_rgb(flow, MaxMagnitude::Auto);
    let feat_img = featurize(frame, cfg.patch_size)?;
    let feat_flow = featurize(&flow_rgb, cfg.patch_size)?;
    let cut = cut_features(&feat_img, &feat_flow, grid, cfg)?;
    let mask = upsample_patch_mask(&cut.patch_mask, &grid, frame.height(), frame.width());
    Ok((mask, cut))
}
