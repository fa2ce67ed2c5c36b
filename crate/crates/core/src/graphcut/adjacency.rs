use rayon::prelude::*;

use super::eigen::dot;
use crate::error::{Error, Result};
use crate::features::FeatureGrid;

/// Dense symmetric patch-similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    w: Vec<f64>,
}

impl AdjacencyMatrix {
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != n * n {
            return Err(Error::Dimension(format!("{n}x{n} matrix needs {} entries", n * n)));
        }
        for i in 0..n {
            for j in i + 1..n {
                if w[i * n + j] != w[j * n + i] {
                    return Err(Error::Invalid(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.w
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    /// Row sums, i.e. the vertex degrees.
    pub fn degrees(&self) -> Vec<f64> {
        self.w.chunks_exact(self.n).map(|r| r.iter().sum()).collect()
    }
}

/// Cosine similarity; zero when either vector has norm below `1e-12`.
pub fn cosine_sim(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
    if nx < 1e-12 || ny < 1e-12 {
        return 0.0;
    }
    dot(x, y) / (nx * ny)
}

/// `alpha * s_img + (1 - alpha) * s_flow`.
#[inline]
pub fn combine_similarity(s_img: f64, s_flow: f64, alpha: f64) -> f64 {
    alpha * s_img + (1.0 - alpha) * s_flow
}

// Descriptors as f64, scaled to unit norm (zero vectors stay zero), so that
// cosine similarity becomes a plain dot product.
fn unit_rows(grid: &FeatureGrid) -> Vec<Vec<f64>> {
    (0..grid.len())
        .map(|k| {
            let d: Vec<f64> = grid.descriptor(k).iter().map(|&v| v as f64).collect();
            let n = dot(&d, &d).sqrt();
            if n < 1e-12 {
                vec![0.0; d.len()]
            } else {
                d.into_iter().map(|v| v / n).collect()
            }
        })
        .collect()
}

/// Blended similarity of every patch pair, diagonal included.
pub fn build_adjacency(feat_img: &FeatureGrid, feat_flow: &FeatureGrid, alpha: f64) -> Result<AdjacencyMatrix> {
    if (feat_img.rows(), feat_img.cols()) != (feat_flow.rows(), feat_flow.cols()) {
        return Err(Error::Dimension(format!(
            "appearance grid {}x{} vs flow grid {}x{}",
            feat_img.rows(),
            feat_img.cols(),
            feat_flow.rows(),
            feat_flow.cols()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let n = feat_img.len();
    let (a, b) = (unit_rows(feat_img), unit_rows(feat_flow));
    let mut w = vec![0.0; n * n];
    w.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate() {
            // evaluate each unordered pair in a fixed operand order so the
            // result is exactly symmetric
            let (p, q) = if i <= j { (i, j) } else { (j, i) };
            *out = combine_similarity(dot(&a[p], &a[q]), dot(&b[p], &b[q]), alpha);
        }
    });
    Ok(AdjacencyMatrix { n, w })
}

/// `w >= tau` becomes 1, everything else `epsilon`.
pub fn threshold_adjacency(w: &AdjacencyMatrix, tau: f64, epsilon: f64) -> Result<AdjacencyMatrix> {
    if !(epsilon > 0.0 && epsilon < tau) {
        return Err(Error::Invalid(format!("epsilon {epsilon} must lie in (0, tau = {tau})")));
    }
    Ok(AdjacencyMatrix {
        n: w.n,
        w: w.w.iter().map(|&x| if x >= tau { 1.0 } else { epsilon }).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine_sim(&[1.0, 1.0], &[1.0, 0.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn combine_examples() {
        assert!((combine_similarity(1.0, 0.0, 0.7) - 0.7).abs() < 1e-15);
        assert_eq!(combine_similarity(0.3, 0.9, 1.0), 0.3);
        assert!((combine_similarity(0.6, 0.8, 0.5) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        let w = AdjacencyMatrix::new(2, vec![1.0, 0.30, 0.30, 0.10]).unwrap();
        let t = threshold_adjacency(&w, 0.25, 1e-5).unwrap();
        assert_eq!(t.data(), &[1.0, 1.0, 1.0, 1e-5]);
        let edge = AdjacencyMatrix::new(1, vec![0.25]).unwrap();
        assert_eq!(threshold_adjacency(&edge, 0.25, 1e-5).unwrap().data(), &[1.0]);
        assert!(threshold_adjacency(&w, 0.25, 0.3).is_err());
    }

    #[test]
    fn orthogonal_pair() {
        let g = FeatureGrid::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w = build_adjacency(&g, &g, 0.7).unwrap();
        assert_eq!(w.data(), &[1.0, 0.0, 0.0, 1.0]);
        let same = FeatureGrid::new(1, 2, 2, vec![0.3, 0.4, 0.3, 0.4]).unwrap();
        let w = build_adjacency(&same, &same, 0.7).unwrap();
        assert!(w.data().iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn grid_mismatch() {
        let a = FeatureGrid::new(1, 2, 2, vec![1.0; 4]).unwrap();
        let b = FeatureGrid::new(2, 1, 2, vec![1.0; 4]).unwrap();
        assert!(build_adjacency(&a, &b, 0.5).is_err());
    }
}
