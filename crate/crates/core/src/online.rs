//! Coarse Galerkin solve in the multiscale space, the fine reference solve
//! and the plain coarse Q1 baseline.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble, assemble_global, load_vector_global, Definiteness, Operator, SparseSymMatrix, Weight};
use crate::cem::{hex, provenance, MsBasisSet, NodeRect};
use crate::coeff::{CoefficientField, ExactSolution, SourceField};
use crate::error::{Error, Result};
use crate::grid::GridHierarchy;
use crate::linsolve::{factor, DenseFactorization};

/// Coarse systems up to this size are factored densely.
pub const DENSE_LIMIT: usize = 1200;

/// A family of fine-node functions grouped by shared support rectangle.
pub trait RectBasis: Sync {
    fn n_groups(&self) -> usize;
    fn group_size(&self) -> usize;
    fn rect(&self, g: &GridHierarchy, group: usize) -> NodeRect;
    /// Values of function `j` of `group`, lexicographic over its rectangle.
    fn values(&self, group: usize, j: usize) -> &[f64];

    fn n_functions(&self) -> usize {
        self.n_groups() * self.group_size()
    }
}

impl RectBasis for MsBasisSet {
    fn n_groups(&self) -> usize {
        self.n_elem()
    }

    fn group_size(&self) -> usize {
        self.l_star
    }

    fn rect(&self, g: &GridHierarchy, group: usize) -> NodeRect {
        self.support(g, group)
    }

    fn values(&self, group: usize, j: usize) -> &[f64] {
        MsBasisSet::values(self, group, j)
    }
}

/// Bilinear hat functions of the coarse mesh, sampled on the fine nodes.
#[derive(Debug, Clone)]
pub struct CoarseHats {
    coarse_n: usize,
    sub_n: usize,
    /// Shared profile over the `(2s-1)^2` support nodes.
    profile: Vec<f64>,
}

impl CoarseHats {
    pub fn new(g: &GridHierarchy) -> Self {
        let s = g.sub_n();
        let w = 2 * s - 1;
        let hat = |k: usize| 1.0 - (k as f64 + 1.0 - s as f64).abs() / s as f64;
        let profile = (0..w * w).map(|k| hat(k % w) * hat(k / w)).collect();
        Self { coarse_n: g.coarse_n(), sub_n: s, profile }
    }

    /// Coarse interior vertex of a group.
    pub fn vertex(&self, group: usize) -> (usize, usize) {
        let n = self.coarse_n - 1;
        (group % n + 1, group / n + 1)
    }
}

impl RectBasis for CoarseHats {
    fn n_groups(&self) -> usize {
        (self.coarse_n - 1).pow(2)
    }

    fn group_size(&self) -> usize {
        1
    }

    fn rect(&self, _g: &GridHierarchy, group: usize) -> NodeRect {
        let (vx, vy) = self.vertex(group);
        let s = self.sub_n;
        NodeRect { x0: (vx - 1) * s + 1, y0: (vy - 1) * s + 1, nx: 2 * s - 1, ny: 2 * s - 1 }
    }

    fn values(&self, _group: usize, _j: usize) -> &[f64] {
        &self.profile
    }
}

/// Galerkin matrix and load of a coarse space.
#[derive(Debug, Clone)]
pub struct CoarseSystem {
    pub matrix: SparseSymMatrix,
    pub rhs: Vec<f64>,
    pub group_size: usize,
    pub assemble_ms: f64,
}

impl CoarseSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `p = i * l* + j` to `(i, j)`.
    pub fn split_index(&self, p: usize) -> (usize, usize) {
        (p / self.group_size, p % self.group_size)
    }

    /// Largest relative asymmetry `|G_pq - G_qp| / max|G|`.
    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        (0..m.dim())
            .flat_map(|r| m.row_cols(r).iter().zip(m.row_values(r)).map(move |(c, v)| (r, *c, *v)))
            .map(|(r, c, v)| (v - m.get(c, r).unwrap_or(0.0)).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Computed solution with timing metadata.
#[derive(Debug, Clone)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub fine: Vec<f64>,
    pub meta: SolveMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveMeta {
    pub coarse_dim: usize,
    pub fine_nodes: usize,
    pub dense: bool,
    pub assemble_ms: f64,
    pub solve_ms: f64,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn expand(r: &NodeRect) -> NodeRect {
    NodeRect { x0: r.x0 - 1, y0: r.y0 - 1, nx: r.nx + 2, ny: r.ny + 2 }
}

/// `A v` on the one-node neighbourhood of the support of `v`.
fn apply_local(g: &GridHierarchy, a: &SparseSymMatrix, rect: &NodeRect, v: &[f64]) -> Vec<f64> {
    let c = expand(rect);
    let mut y = vec![0.0; c.len()];
    for ly in 0..rect.ny {
        for lx in 0..rect.nx {
            let x = v[ly * rect.nx + lx];
            if x == 0.0 {
                continue;
            }
            let node = g.node_index(rect.x0 + lx, rect.y0 + ly);
            for (col, val) in a.row_cols(node).iter().zip(a.row_values(node)) {
                let (ix, iy) = g.node_ij(*col);
                y[c.local(ix, iy)] += val * x;
            }
        }
    }
    y
}

fn dot_on(ov: &NodeRect, ra: &NodeRect, a: &[f64], rb: &NodeRect, b: &[f64]) -> f64 {
    let mut s = 0.0;
    for iy in ov.y0..ov.y0 + ov.ny {
        let oa = ra.local(ov.x0, iy);
        let ob = rb.local(ov.x0, iy);
        s += a[oa..oa + ov.nx].iter().zip(&b[ob..ob + ov.nx]).map(|(x, y)| x * y).sum::<f64>();
    }
    s
}

/// Galerkin system `G = Phi^T A Phi`, `r = Phi^T b` for any grouped basis.
pub fn galerkin<B: RectBasis>(g: &GridHierarchy, a: &SparseSymMatrix, load: &[f64], basis: &B) -> Result<CoarseSystem> {
    let t = Instant::now();
    let ng = basis.n_groups();
    let l = basis.group_size();
    let rects: Vec<NodeRect> = (0..ng).map(|i| basis.rect(g, i)).collect();

    // upper block row i: (k >= i, l x l row-major block)
    let upper: Vec<Vec<(usize, Vec<f64>)>> = (0..ng)
        .into_par_iter()
        .map(|i| {
            let ri = &rects[i];
            let ci = expand(ri);
            let ys: Vec<Vec<f64>> = (0..l).map(|j| apply_local(g, a, ri, basis.values(i, j))).collect();
            let mut row = Vec::new();
            for (k, rk) in rects.iter().enumerate().skip(i) {
                let Some(ov) = ci.intersect(rk) else { continue };
                let mut blk = vec![0.0; l * l];
                for (j, y) in ys.iter().enumerate() {
                    for jj in 0..l {
                        blk[j * l + jj] = dot_on(&ov, &ci, y, rk, basis.values(k, jj));
                    }
                }
                if k == i {
                    for j in 0..l {
                        for jj in j + 1..l {
                            let v = 0.5 * (blk[j * l + jj] + blk[jj * l + j]);
                            blk[j * l + jj] = v;
                            blk[jj * l + j] = v;
                        }
                    }
                }
                row.push((k, blk));
            }
            row
        })
        .collect();

    // mirror into full block rows
    let mut lower: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ng];
    for (i, row) in upper.iter().enumerate() {
        for (pos, (k, _)) in row.iter().enumerate() {
            if *k != i {
                lower[*k].push((i, pos));
            }
        }
    }
    let n = ng * l;
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let nnz: usize = upper.iter().map(|r| r.len()).sum::<usize>() * 2 * l * l;
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for i in 0..ng {
        for j in 0..l {
            // lower blocks come from earlier rows, so their columns precede
            for &(src, pos) in &lower[i] {
                let blk = &upper[src][pos].1;
                for jj in 0..l {
                    col_idx.push(src * l + jj);
                    values.push(blk[jj * l + j]);
                }
            }
            for (k, blk) in &upper[i] {
                for jj in 0..l {
                    col_idx.push(k * l + jj);
                    values.push(blk[j * l + jj]);
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    drop(upper);
    let matrix = SparseSymMatrix::from_csr(n, row_ptr, col_idx, values, Definiteness::Indefinite)?;

    let rhs = (0..n)
        .map(|p| {
            let (i, j) = (p / l, p % l);
            let r = &rects[i];
            let v = basis.values(i, j);
            let mut s = 0.0;
            for ly in 0..r.ny {
                for lx in 0..r.nx {
                    s += v[ly * r.nx + lx] * load[g.node_index(r.x0 + lx, r.y0 + ly)];
                }
            }
            s
        })
        .collect();
    Ok(CoarseSystem { matrix, rhs, group_size: l, assemble_ms: ms(t) })
}

/// Coarse multiscale system for source `f`.
pub fn assemble_online(
    g: &GridHierarchy,
    field: &CoefficientField,
    basis: &MsBasisSet,
    f: &SourceField,
) -> Result<CoarseSystem> {
    basis.check_grid(g)?;
    let expected = provenance(g, field, basis.l_star, basis.layers);
    if expected != basis.provenance {
        return Err(Error::Provenance { expected: hex(&expected), actual: hex(&basis.provenance) });
    }
    let a = assemble_global(g, Some(field), Weight::SignedSigma, Operator::Stiffness)?;
    let b = load_vector_global(g, f)?;
    galerkin(g, &a, &b, basis)
}

/// Coefficients of the coarse system.
pub fn solve_coarse(cs: &CoarseSystem) -> Result<(Vec<f64>, bool)> {
    let n = cs.dim();
    let wrap = |e: Error| Error::CoarseSingular(Box::new(e));
    if n <= DENSE_LIMIT {
        let f = DenseFactorization::new(n, &cs.matrix.to_dense()).map_err(wrap)?;
        Ok((f.solve(&cs.rhs).map_err(wrap)?, true))
    } else {
        let f = factor(&cs.matrix).map_err(wrap)?;
        Ok((f.solve(&cs.rhs).map_err(wrap)?, false))
    }
}

/// `sum_p c_p phi_p` on every fine node.
pub fn reconstruct<B: RectBasis>(g: &GridHierarchy, basis: &B, coefficients: &[f64]) -> Vec<f64> {
    let l = basis.group_size();
    let mut u = vec![0.0; g.n_nodes()];
    for (p, c) in coefficients.iter().enumerate() {
        let (i, j) = (p / l, p % l);
        let r = basis.rect(g, i);
        let v = basis.values(i, j);
        for ly in 0..r.ny {
            let row = g.node_index(r.x0, r.y0 + ly);
            for (dst, src) in u[row..row + r.nx].iter_mut().zip(&v[ly * r.nx..(ly + 1) * r.nx]) {
                *dst += c * src;
            }
        }
    }
    u
}

fn solve_with<B: RectBasis>(g: &GridHierarchy, cs: &CoarseSystem, basis: &B) -> Result<Solution> {
    let t = Instant::now();
    let (coefficients, dense) = solve_coarse(cs)?;
    let fine = reconstruct(g, basis, &coefficients);
    Ok(Solution {
        meta: SolveMeta {
            coarse_dim: cs.dim(),
            fine_nodes: g.n_nodes(),
            dense,
            assemble_ms: cs.assemble_ms,
            solve_ms: ms(t),
        },
        coefficients,
        fine,
    })
}

/// Solves the coarse multiscale system and reconstructs `u_H`.
pub fn solve_online(g: &GridHierarchy, cs: &CoarseSystem, basis: &MsBasisSet) -> Result<Solution> {
    basis.check_grid(g)?;
    if cs.dim() != basis.n_basis() {
        return Err(Error::DimensionMismatch { expected: basis.n_basis(), actual: cs.dim() });
    }
    solve_with(g, cs, basis)
}

/// Fine Q1 solution `u_h` with homogeneous Dirichlet data.
pub fn solve_reference(g: &GridHierarchy, field: &CoefficientField, f: &SourceField) -> Result<Solution> {
    let t = Instant::now();
    let whole = g.whole();
    let a = assemble(g, Some(field), Weight::SignedSigma, &whole, Operator::Stiffness)?;
    let load = load_vector_global(g, f)?;
    let interior = whole.interior_nodes();
    let b: Vec<f64> = interior.iter().map(|&n| load[n]).collect();
    let assemble_ms = ms(t);
    let t = Instant::now();
    let x = factor(&a)?.solve(&b)?;
    let mut fine = vec![0.0; g.n_nodes()];
    for (&n, v) in interior.iter().zip(&x) {
        fine[n] = *v;
    }
    Ok(Solution {
        meta: SolveMeta { coarse_dim: x.len(), fine_nodes: g.n_nodes(), dense: false, assemble_ms, solve_ms: ms(t) },
        coefficients: x,
        fine,
    })
}

/// Nodal samples of a closed-form solution.
pub fn interpolate_exact(g: &GridHierarchy, e: &ExactSolution) -> Vec<f64> {
    (0..g.n_nodes())
        .map(|n| {
            let (x, y) = g.node_coords(n);
            e.u(x, y)
        })
        .collect()
}

/// Plain Q1 finite elements on the coarse mesh. The fine coefficient is
/// integrated exactly because coarse hats are fine-mesh Q1 functions.
pub fn solve_coarse_q1(g: &GridHierarchy, field: &CoefficientField, f: &SourceField) -> Result<Solution> {
    if g.coarse_n() < 2 {
        return Err(Error::Config("coarse Q1 needs at least one interior vertex".into()));
    }
    let a = assemble_global(g, Some(field), Weight::SignedSigma, Operator::Stiffness)?;
    let b = load_vector_global(g, f)?;
    let hats = CoarseHats::new(g);
    let cs = galerkin(g, &a, &b, &hats)?;
    solve_with(g, &cs, &hats)
}

/// Largest scaled Galerkin defect
/// `|a(u_h - u_H, phi_p)| / (|u_h|_a |phi_p|_a)` over a basis.
pub fn galerkin_defect<B: RectBasis>(
    g: &GridHierarchy,
    field: &CoefficientField,
    u_h: &[f64],
    u_ms: &[f64],
    basis: &B,
) -> Result<f64> {
    let a = assemble_global(g, Some(field), Weight::SignedSigma, Operator::Stiffness)?;
    let abs = assemble_global(g, Some(field), Weight::AbsSigma, Operator::Stiffness)?;
    if u_h.len() != g.n_nodes() || u_ms.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch { expected: g.n_nodes(), actual: u_ms.len() });
    }
    let e: Vec<f64> = u_h.iter().zip(u_ms).map(|(x, y)| x - y).collect();
    let ae = a.mul_vec(&e);
    let norm_h = abs.form(u_h, u_h).max(0.0).sqrt();
    let l = basis.group_size();
    let worst = (0..basis.n_groups())
        .into_par_iter()
        .map(|i| {
            let r = basis.rect(g, i);
            let c = expand(&r);
            (0..l)
                .map(|j| {
                    let v = basis.values(i, j);
                    let y = apply_local(g, &abs, &r, v);
                    let norm_p = dot_on(&r, &c, &y, &r, v).max(0.0).sqrt();
                    let mut d = 0.0;
                    for ly in 0..r.ny {
                        let row = g.node_index(r.x0, r.y0 + ly);
                        d += ae[row..row + r.nx].iter().zip(&v[ly * r.nx..(ly + 1) * r.nx]).map(|(x, y)| x * y).sum::<f64>();
                    }
                    if norm_p == 0.0 { 0.0 } else { d.abs() / (norm_h * norm_p) }
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}
