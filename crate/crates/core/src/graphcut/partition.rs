use crate::video::PatchGrid;

/// `label[i] = eigvec[i] >= mean(eigvec)`; `true` is partition A.
pub fn bipartition(eigvec: &[f64]) -> Vec<bool> {
    if eigvec.is_empty() {
        return vec![];
    }
    // x >= sum / n, compared as n * x >= sum to avoid rounding the mean
    let sum = compensated_sum(eigvec);
    let n = eigvec.len() as f64;
    eigvec.iter().map(|&x| n * x >= sum).collect()
}

// Neumaier summation.
fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Border statistics of one side of a bipartition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideStats {
    pub size: usize,
    pub border: usize,
}

impl SideStats {
    pub fn border_fraction(&self) -> f64 {
        if self.size == 0 {
            0.0
        } else {
            self.border as f64 / self.size as f64
        }
    }
}

pub fn side_stats(labels: &[bool], grid: &PatchGrid, side: bool) -> SideStats {
    let mut s = SideStats { size: 0, border: 0 };
    for (k, &l) in labels.iter().enumerate() {
        if l == side {
            s.size += 1;
            if grid.is_border(k) {
                s.border += 1;
            }
        }
    }
    s
}

/// Whether partition A (`true` labels) is the foreground.
///
/// The foreground is the side with the smaller share of its patches on the
/// grid border; ties go to the smaller side, then to A. When one side is
/// empty the non-empty side is background, so the foreground is empty.
pub fn select_foreground(labels: &[bool], grid: &PatchGrid) -> bool {
    assert_eq!(labels.len(), grid.len());
    let a = side_stats(labels, grid, true);
    let b = side_stats(labels, grid, false);
    if a.size == 0 {
        return true;
    }
    if b.size == 0 {
        return false;
    }
    // compare a.border / a.size with b.border / b.size exactly
    let lhs = a.border * b.size;
    let rhs = b.border * a.size;
    match lhs.cmp(&rhs) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.size <= b.size,
    }
}

/// Foreground patch mask given the partition labels and the side choice.
pub fn foreground_patches(labels: &[bool], fg_is_a: bool) -> Vec<bool> {
    labels.iter().map(|&l| l == fg_is_a).collect()
}
