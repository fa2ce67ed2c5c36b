//! Symmetric eigensolvers: Householder tridiagonalization followed by
//! implicit QL (dense, all pairs) and Lanczos with full reorthogonalization
//! (extreme pair, large matrices).

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Dense row-major symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.n).zip(out.iter_mut()) {
            *o = dot(row, x);
        }
    }
}

/// Eigenvalues in ascending order with unit eigenvectors stored as rows.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Full eigendecomposition of a dense symmetric matrix.
pub fn symmetric_eigen(a: &SymMatrix) -> Result<Eigen> {
    let n = a.n;
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: vec![],
        });
    }
    let mut v = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    // eigenvectors are the columns of v; work on rows for contiguous rotations
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            z[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut z, &mut d, &mut e)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    Ok(Eigen {
        values: order.iter().map(|&i| d[i]).collect(),
        vectors: order.iter().map(|&i| z[i * n..(i + 1) * n].to_vec()).collect(),
    })
}

// Householder reduction to tridiagonal form (EISPACK tred2). On exit `v`
// holds the accumulated orthogonal transform, `d` the diagonal and `e` the
// subdiagonal in e[1..n].
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in j + 1..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e) (EISPACK tql2). `z` holds the
// eigenvectors as rows and is rotated in place.
fn tql2(n: usize, z: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let max_sweeps = 30 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > max_sweeps {
                    return Err(Error::NoConvergence {
                        iters: sweeps,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let hv = *b;
                        *b = s * *a + c * hv;
                        *a = c * *a - s * hv;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Smallest eigenpair of the symmetric operator `apply` restricted to the
/// orthogonal complement of `deflate` (orthonormal vectors), by restarted
/// Lanczos with full reorthogonalization. Converged when
/// `||A x - theta x|| <= tol`.
pub fn lanczos_smallest(
    n: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    deflate: &[Vec<f64>],
    tol: f64,
    max_matvecs: usize,
) -> Result<(f64, Vec<f64>)> {
    let project = |x: &mut [f64], basis: &[Vec<f64>]| {
        for b in basis {
            let c = dot(x, b);
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= c * bi;
            }
        }
    };
    let dim = n.saturating_sub(deflate.len());
    if dim == 0 {
        return Err(Error::Invalid("nothing left after deflation".into()));
    }
    let krylov = dim.min(150);
    let mut rng = SplitMix64::new(0x1a2b_3c4d);
    let mut start: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
    let mut matvecs = 0;
    let mut best_res = f64::INFINITY;
    let mut tmp = vec![0.0; n];
    loop {
        project(&mut start, deflate);
        project(&mut start, deflate);
        let nrm = norm(&start);
        if nrm == 0.0 {
            return Err(Error::Invalid("degenerate Lanczos start vector".into()));
        }
        start.iter_mut().for_each(|x| *x /= nrm);

        let mut q: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::with_capacity(krylov);
        let mut beta: Vec<f64> = Vec::with_capacity(krylov);
        for j in 0..krylov {
            apply(&q[j], &mut tmp);
            matvecs += 1;
            let mut w = tmp.clone();
            let a = dot(&w, &q[j]);
            alpha.push(a);
            // full reorthogonalization, twice
            for _ in 0..2 {
                project(&mut w, deflate);
                project(&mut w, &q);
            }
            let b = norm(&w);
            if j + 1 == krylov || b < 1e-14 {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            q.push(w);
        }
        let k = alpha.len();
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            t[i * k + i] = alpha[i];
            if i + 1 < k {
                t[i * k + i + 1] = beta[i];
                t[(i + 1) * k + i] = beta[i];
            }
        }
        let te = symmetric_eigen(&SymMatrix::new(k, t))?;
        let theta = te.values[0];
        let s = &te.vectors[0];
        let mut x = vec![0.0; n];
        for (qi, si) in q.iter().zip(s) {
            for (xv, qv) in x.iter_mut().zip(qi) {
                *xv += si * qv;
            }
        }
        project(&mut x, deflate);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        apply(&x, &mut tmp);
        matvecs += 1;
        let theta = {
            let rq = dot(&x, &tmp);
            if rq.is_finite() {
                rq
            } else {
                theta
            }
        };
        let res = tmp
            .iter()
            .zip(&x)
            .map(|(ax, xv)| (ax - theta * xv).powi(2))
            .sum::<f64>()
            .sqrt();
        best_res = best_res.min(res);
        if res <= tol {
            return Ok((theta, x));
        }
        if matvecs >= max_matvecs {
            return Err(Error::NoConvergence {
                iters: matvecs,
                residual: best_res,
            });
        }
        start = x;
    }
}
