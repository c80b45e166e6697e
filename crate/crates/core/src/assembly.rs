//! Bilinear (Q1) assembly of stiffness, mass and load on the fine mesh.
//!
//! Every operator is built directly in compressed-row form from the
//! structured 9-point stencil of a node rectangle, so no triplet sort is
//! needed and the result is identical however it is invoked.

use std::io::Write;

use crate::coeff::{CoefficientField, SourceField};
use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, LocalDofMap, NodeBox, Region};

/// Scale factor of the auxiliary weight `mu = MU_SCALE * H^-2 * sigma`.
pub const MU_SCALE: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    Indefinite,
    PositiveSemidefinite,
    PositiveDefinite,
}

/// Square sparse matrix with full symmetric storage in CSR layout and
/// sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    definiteness: Definiteness,
}

impl SparseSymMatrix {
    /// Builds a matrix from raw CSR arrays, checking structure and symmetry.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
        definiteness: Definiteness,
    ) -> Result<Self> {
        if row_ptr.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, actual: row_ptr.len() });
        }
        if col_idx.len() != values.len() || row_ptr[n] != values.len() {
            return Err(Error::DimensionMismatch { expected: row_ptr[n], actual: values.len() });
        }
        let m = Self { n, row_ptr, col_idx, values, definiteness };
        for r in 0..n {
            let cols = m.row_cols(r);
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c >= n) {
                return Err(Error::Config(format!("row {r} has unsorted or out-of-range columns")));
            }
        }
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for r in 0..n {
            for (c, v) in m.row_cols(r).iter().zip(m.row_values(r)) {
                let t = m.get(*c, r).ok_or_else(|| {
                    Error::Config(format!("entry ({r}, {c}) has no transpose partner"))
                })?;
                if (t - v).abs() > 1e-14 * scale {
                    return Err(Error::Config(format!("entry ({r}, {c}) is not symmetric")));
                }
            }
        }
        Ok(m)
    }

    /// Sums duplicate `(row, col, value)` entries. Both triangles must be given.
    pub fn from_triplets(
        n: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        definiteness: Definiteness,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(Error::DimensionMismatch { expected: n, actual: r.max(c) + 1 });
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::from_csr(n, row_ptr, col_idx, values, definiteness)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            definiteness: Definiteness::PositiveDefinite,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn definiteness(&self) -> Definiteness {
        self.definiteness
    }

    #[inline]
    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    #[inline]
    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let cols = self.row_cols(r);
        cols.binary_search(&c).ok().map(|k| self.row_values(r)[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r).unwrap_or(0.0)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n, "operand length");
        assert_eq!(y.len(), self.n, "output length");
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row_cols(r).iter().zip(self.row_values(r)).map(|(c, v)| v * x[*c]).sum();
        }
    }

    /// `x^T A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "operand length");
        (0..self.n)
            .map(|r| {
                x[r] * self
                    .row_cols(r)
                    .iter()
                    .zip(self.row_values(r))
                    .map(|(c, v)| v * y[*c])
                    .sum::<f64>()
            })
            .sum()
    }

    /// Row-major dense copy, for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for r in 0..self.n {
            for (c, v) in self.row_cols(r).iter().zip(self.row_values(r)) {
                d[r * self.n + c] = *v;
            }
        }
        d
    }

    /// Keeps the rows and columns flagged in `mask`, renumbered in order.
    pub fn restrict(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.n, "mask length");
        let mut map = vec![usize::MAX; self.n];
        let mut k = 0;
        for (i, keep) in mask.iter().enumerate() {
            if *keep {
                map[i] = k;
                k += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(k + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in (0..self.n).filter(|r| mask[*r]) {
            for (c, v) in self.row_cols(r).iter().zip(self.row_values(r)) {
                if mask[*c] {
                    col_idx.push(map[*c]);
                    values.push(*v);
                }
            }
            row_ptr.push(values.len());
        }
        let definiteness = match self.definiteness {
            Definiteness::PositiveSemidefinite if k < self.n => Definiteness::PositiveDefinite,
            d => d,
        };
        Self { n: k, row_ptr, col_idx, values, definiteness }
    }

    /// MatrixMarket coordinate export of the lower triangle.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        let lower: usize =
            (0..self.n).map(|r| self.row_cols(r).iter().filter(|c| **c <= r).count()).sum();
        writeln!(w, "{} {} {}", self.n, self.n, lower)?;
        for r in 0..self.n {
            for (c, v) in self.row_cols(r).iter().zip(self.row_values(r)) {
                if *c <= r {
                    writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
                }
            }
        }
        Ok(())
    }
}

/// Per-cell weight of an assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    SignedSigma,
    AbsSigma,
    /// `24 H^-2 sigma`.
    SignedMu,
    /// `24 H^-2 |sigma|`.
    AbsMu,
    Unit,
}

impl Weight {
    pub fn is_signed(self) -> bool {
        matches!(self, Weight::SignedSigma | Weight::SignedMu)
    }

    fn needs_field(self) -> bool {
        !matches!(self, Weight::Unit)
    }

    #[inline]
    fn cell_value(self, g: &GridHierarchy, field: Option<&CoefficientField>, cx: usize, cy: usize) -> f64 {
        let sigma = || field.expect("weight needs a coefficient field").at(cx, cy);
        let mu = || MU_SCALE / (g.coarse_h() * g.coarse_h());
        match self {
            Weight::SignedSigma => sigma(),
            Weight::AbsSigma => sigma().abs(),
            Weight::SignedMu => mu() * sigma(),
            Weight::AbsMu => mu() * sigma().abs(),
            Weight::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Stiffness,
    Mass,
}

/// Q1 stiffness on an `h x h` square, corners counter-clockwise from the
/// lower left. Independent of `h` in two dimensions.
pub fn local_q1_stiffness(_h: f64) -> [[f64; 4]; 4] {
    let (d, e, o) = (2.0 / 3.0, -1.0 / 6.0, -1.0 / 3.0);
    [[d, e, o, e], [e, d, e, o], [o, e, d, e], [e, o, e, d]]
}

/// Consistent Q1 mass on an `h x h` square, same corner order.
pub fn local_q1_mass(h: f64) -> [[f64; 4]; 4] {
    let s = h * h / 36.0;
    let (d, e, o) = (4.0 * s, 2.0 * s, s);
    [[d, e, o, e], [e, d, e, o], [o, e, d, e], [e, o, e, d]]
}

/// Stencil coefficients for (same node, edge neighbour, diagonal neighbour).
fn stencil(op: Operator, h: f64) -> [f64; 3] {
    let m = match op {
        Operator::Stiffness => local_q1_stiffness(h),
        Operator::Mass => local_q1_mass(h),
    };
    [m[0][0], m[0][1], m[0][2]]
}

/// Assembles `op` with weight `w` over the cells of `nb`.
///
/// With `mask = None` all box nodes are kept (natural boundary). Otherwise
/// only flagged box nodes become unknowns, in lexicographic order.
pub fn assemble_box(
    g: &GridHierarchy,
    field: Option<&CoefficientField>,
    w: Weight,
    op: Operator,
    nb: &NodeBox,
    mask: Option<&[bool]>,
) -> Result<SparseSymMatrix> {
    if w.needs_field() {
        match field {
            Some(f) => f.check_grid(g)?,
            None => return Err(Error::Config("weight requires a coefficient field".into())),
        }
    }
    let (nx, ny) = (nb.nx(), nb.ny());
    if let Some(m) = mask {
        if m.len() != nx * ny {
            return Err(Error::DimensionMismatch { expected: nx * ny, actual: m.len() });
        }
    }
    let (cx_n, cy_n) = (nb.cells_x, nb.cells_y);
    let mut cw = vec![0.0; cx_n * cy_n];
    for ly in 0..cy_n {
        for lx in 0..cx_n {
            cw[ly * cx_n + lx] = w.cell_value(g, field, nb.x0 + lx, nb.y0 + ly);
        }
    }
    let cell = |lx: isize, ly: isize| -> f64 {
        if lx < 0 || ly < 0 || lx >= cx_n as isize || ly >= cy_n as isize {
            0.0
        } else {
            cw[ly as usize * cx_n + lx as usize]
        }
    };
    let [s_d, s_e, s_o] = stencil(op, g.h());

    let keep = |k: usize| mask.is_none_or(|m| m[k]);
    let mut map = vec![usize::MAX; nx * ny];
    let mut n = 0;
    for (k, slot) in map.iter_mut().enumerate() {
        if keep(k) {
            *slot = n;
            n += 1;
        }
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(9 * n);
    let mut values = Vec::with_capacity(9 * n);
    for iy in 0..ny {
        for ix in 0..nx {
            if !keep(iy * nx + ix) {
                continue;
            }
            let (x, y) = (ix as isize, iy as isize);
            for dy in -1isize..=1 {
                let jy = y + dy;
                if jy < 0 || jy >= ny as isize {
                    continue;
                }
                for dx in -1isize..=1 {
                    let jx = x + dx;
                    if jx < 0 || jx >= nx as isize {
                        continue;
                    }
                    let k = jy as usize * nx + jx as usize;
                    if !keep(k) {
                        continue;
                    }
                    let v = match (dx, dy) {
                        (0, 0) => {
                            s_d * (cell(x - 1, y - 1) + cell(x, y - 1) + cell(x - 1, y) + cell(x, y))
                        }
                        (_, 0) => {
                            let c = x.min(jx);
                            s_e * (cell(c, y - 1) + cell(c, y))
                        }
                        (0, _) => {
                            let c = y.min(jy);
                            s_e * (cell(x - 1, c) + cell(x, c))
                        }
                        _ => s_o * cell(x.min(jx), y.min(jy)),
                    };
                    col_idx.push(map[k]);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
    }

    let definiteness = match (w.is_signed(), op) {
        (true, _) => Definiteness::Indefinite,
        (false, Operator::Mass) => Definiteness::PositiveDefinite,
        (false, Operator::Stiffness) if n < nx * ny => Definiteness::PositiveDefinite,
        (false, Operator::Stiffness) => Definiteness::PositiveSemidefinite,
    };
    Ok(SparseSymMatrix { n, row_ptr, col_idx, values, definiteness })
}

/// Operator over the interior unknowns of a region (homogeneous Dirichlet
/// on the region boundary and on the domain boundary).
pub fn assemble(
    g: &GridHierarchy,
    field: Option<&CoefficientField>,
    w: Weight,
    region: &Region,
    op: Operator,
) -> Result<SparseSymMatrix> {
    let dofs = g.local_dof_map(region);
    assemble_box(g, field, w, op, &dofs.node_box(), Some(dofs.interior_mask()))
}

/// Operator on all nodes of one coarse element, without boundary conditions.
pub fn assemble_element(
    g: &GridHierarchy,
    field: Option<&CoefficientField>,
    w: Weight,
    elem: usize,
    op: Operator,
) -> Result<SparseSymMatrix> {
    assemble_box(g, field, w, op, &g.element_box(elem), None)
}

/// Operator on every fine node of the domain, without boundary conditions.
pub fn assemble_global(
    g: &GridHierarchy,
    field: Option<&CoefficientField>,
    w: Weight,
    op: Operator,
) -> Result<SparseSymMatrix> {
    assemble_box(g, field, w, op, &g.domain_box(), None)
}

/// Load vector `M_unit f` on every fine node, before any restriction.
pub fn load_vector_global(g: &GridHierarchy, f: &SourceField) -> Result<Vec<f64>> {
    if f.values.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch { expected: g.n_nodes(), actual: f.values.len() });
    }
    let m = assemble_global(g, None, Weight::Unit, Operator::Mass)?;
    Ok(m.mul_vec(&f.values))
}

/// Load vector restricted to the interior unknowns of a region.
pub fn assemble_load(g: &GridHierarchy, f: &SourceField, region: &Region) -> Result<Vec<f64>> {
    let full = load_vector_global(g, f)?;
    let dofs: LocalDofMap = g.local_dof_map(region);
    Ok((0..dofs.len())
        .filter(|&k| dofs.interior_mask()[k])
        .map(|k| full[dofs.to_global(k)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{flat_interface, periodic_square};
    use proptest::prelude::*;

    /// Bilinear shape function values and gradients on the reference square
    /// `[0, h]^2`, corners counter-clockwise from the origin.
    fn shape(h: f64, x: f64, y: f64) -> ([f64; 4], [[f64; 2]; 4]) {
        let (s, t) = (x / h, y / h);
        let v = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
        let gr = [
            [-(1.0 - t) / h, -(1.0 - s) / h],
            [(1.0 - t) / h, -s / h],
            [t / h, s / h],
            [-t / h, (1.0 - s) / h],
        ];
        (v, gr)
    }

    /// 3-point Gauss quadrature per direction integrates the products exactly.
    fn quadrature(h: f64, f: impl Fn([f64; 4], [[f64; 2]; 4], usize, usize) -> f64) -> [[f64; 4]; 4] {
        let pts = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let wts = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut out = [[0.0; 4]; 4];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                for (px, wx) in pts.iter().zip(wts) {
                    for (py, wy) in pts.iter().zip(wts) {
                        let (x, y) = (h * (px + 1.0) / 2.0, h * (py + 1.0) / 2.0);
                        let (v, gr) = shape(h, x, y);
                        *entry += wx * wy * h * h / 4.0 * f(v, gr, a, b);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn local_stiffness_matches_quadrature() {
        for h in [1.0, 0.25, 1.0 / 400.0] {
            let q = quadrature(h, |_, g, a, b| g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            let k = local_q1_stiffness(h);
            for a in 0..4 {
                for b in 0..4 {
                    assert!((q[a][b] - k[a][b]).abs() < 1e-13, "{a}{b}: {} vs {}", q[a][b], k[a][b]);
                }
                assert!(k[a].iter().sum::<f64>().abs() < 1e-15);
            }
            assert_eq!(k[0][0], 2.0 / 3.0);
            assert_eq!(k[0][2], -1.0 / 3.0);
            assert_eq!(k[0][1], -1.0 / 6.0);
        }
    }

    #[test]
    fn local_mass_matches_quadrature() {
        for h in [1.0, 0.3, 0.025] {
            let q = quadrature(h, |v, _, a, b| v[a] * v[b]);
            let m = local_q1_mass(h);
            let mut total = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    assert!((q[a][b] - m[a][b]).abs() < 1e-14 * (1.0 + h * h));
                    total += m[a][b];
                    // invariance under rotation of the square
                    assert_eq!(m[a][b], m[(a + 1) % 4][(b + 1) % 4]);
                }
            }
            assert!((total - h * h).abs() < 1e-15);
            assert!((m[0][0] - h * h / 9.0).abs() < 1e-16);
        }
    }

    /// Element-by-element reference for `x^T A y` over a node box.
    fn elementwise_form(
        g: &GridHierarchy,
        field: Option<&CoefficientField>,
        w: Weight,
        op: Operator,
        nb: &NodeBox,
        x: &[f64],
        y: &[f64],
    ) -> f64 {
        let local = match op {
            Operator::Stiffness => local_q1_stiffness(g.h()),
            Operator::Mass => local_q1_mass(g.h()),
        };
        let nx = nb.nx();
        let mut acc = 0.0;
        for ly in 0..nb.cells_y {
            for lx in 0..nb.cells_x {
                let c = w.cell_value(g, field, nb.x0 + lx, nb.y0 + ly);
                let corners = [
                    ly * nx + lx,
                    ly * nx + lx + 1,
                    (ly + 1) * nx + lx + 1,
                    (ly + 1) * nx + lx,
                ];
                for a in 0..4 {
                    for b in 0..4 {
                        acc += c * local[a][b] * x[corners[a]] * y[corners[b]];
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn laplacian_rayleigh_quotient() {
        let g = GridHierarchy::new(64, 4).unwrap();
        let k = assemble_global(&g, None, Weight::Unit, Operator::Stiffness).unwrap();
        let m = assemble_global(&g, None, Weight::Unit, Operator::Mass).unwrap();
        let v: Vec<f64> = (0..g.n_nodes())
            .map(|n| {
                let (x, y) = g.node_coords(n);
                (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            })
            .collect();
        let rq = k.form(&v, &v) / m.form(&v, &v);
        let target = 2.0 * std::f64::consts::PI.powi(2);
        assert!((rq / target - 1.0).abs() < 2e-3, "rayleigh {rq}");
        assert_eq!(k.definiteness(), Definiteness::PositiveSemidefinite);
    }

    #[test]
    fn signed_flat_interface_is_indefinite() {
        let g = GridHierarchy::new(20, 4).unwrap();
        let (field, _) = flat_interface(&g, 0.5, 1.0, 1.0).unwrap();
        let a = assemble(&g, Some(&field), Weight::SignedSigma, &g.whole(), Operator::Stiffness).unwrap();
        assert_eq!(a.definiteness(), Definiteness::Indefinite);
        let d = a.diagonal();
        assert!(d.iter().any(|v| *v > 0.0) && d.iter().any(|v| *v < 0.0));
        assert_eq!(a.dim(), 19 * 19);
    }

    #[test]
    fn abs_mu_mass_total() {
        let g = GridHierarchy::new(40, 10).unwrap();
        let field = CoefficientField::uniform(&g, 1.0).unwrap();
        let m = assemble_element(&g, Some(&field), Weight::AbsMu, 13, Operator::Mass).unwrap();
        let total: f64 = m.values().iter().sum();
        assert!((total - 24.0).abs() < 1e-12);
    }

    #[test]
    fn load_partition_of_unity() {
        let g = GridHierarchy::new(16, 4).unwrap();
        let ones = SourceField { values: vec![1.0; g.n_nodes()] };
        let b = load_vector_global(&g, &ones).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let zero = assemble_load(&g, &SourceField::zeros(&g), &g.whole()).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        let node = g.node_index(5, 7);
        let mut hat = vec![0.0; g.n_nodes()];
        hat[node] = 1.0;
        let b = load_vector_global(&g, &SourceField { values: hat }).unwrap();
        let m = assemble_global(&g, None, Weight::Unit, Operator::Mass).unwrap();
        for r in 0..g.n_nodes() {
            assert_eq!(b[r], m.get(r, node).unwrap_or(0.0));
        }
    }

    #[test]
    fn neumann_element_kernel_and_scaling() {
        let g = GridHierarchy::new(40, 4).unwrap();
        let field = periodic_square(&g, 2, 1.0, 0.1).unwrap();
        for e in 0..g.n_elem() {
            let a = assemble_element(&g, Some(&field), Weight::AbsSigma, e, Operator::Stiffness).unwrap();
            let r = a.mul_vec(&vec![1.0; a.dim()]);
            assert!(r.iter().all(|v| v.abs() <= 1e-12 * a.max_abs()));
            assert_eq!(a.definiteness(), Definiteness::PositiveSemidefinite);
        }
        let a = assemble_global(&g, Some(&field), Weight::SignedSigma, Operator::Stiffness).unwrap();
        for c in [2.0, 3.0, 0.7] {
            let scaled = field.scaled(c).unwrap();
            let b = assemble_global(&g, Some(&scaled), Weight::SignedSigma, Operator::Stiffness).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((c * x - y).abs() <= 4.0 * f64::EPSILON * y.abs());
            }
        }
    }

    #[test]
    fn aligned_signed_mu_matches_abs_mu() {
        let g = GridHierarchy::new(40, 20).unwrap();
        let field = periodic_square(&g, 5, 1.0, 0.1).unwrap();
        // periods of 8 cells with inclusions on cells 2..6, elements of 2 cells:
        // each element sits entirely inside or outside an inclusion.
        for e in 0..g.n_elem() {
            let s = assemble_element(&g, Some(&field), Weight::SignedMu, e, Operator::Mass).unwrap();
            let a = assemble_element(&g, Some(&field), Weight::AbsMu, e, Operator::Mass).unwrap();
            let (ex, ey) = g.element_ij(e);
            let sign = field.sign_at(2 * ex, 2 * ey);
            for (x, y) in s.values().iter().zip(a.values()) {
                assert_eq!(*x, sign * y);
            }
        }
    }

    #[test]
    fn additivity_over_disjoint_boxes() {
        let g = GridHierarchy::new(12, 3).unwrap();
        let field = periodic_square(&g, 3, 2.0, 0.5).unwrap();
        let full = assemble_global(&g, Some(&field), Weight::SignedSigma, Operator::Stiffness).unwrap();
        let left = NodeBox { x0: 0, y0: 0, cells_x: 5, cells_y: 12 };
        let right = NodeBox { x0: 5, y0: 0, cells_x: 7, cells_y: 12 };
        let mut sum = vec![0.0; g.n_nodes() * g.n_nodes()];
        for nb in [left, right] {
            let m = assemble_box(&g, Some(&field), Weight::SignedSigma, Operator::Stiffness, &nb, None).unwrap();
            for r in 0..m.dim() {
                let (rx, ry) = nb.local_ij(r);
                let gr = g.node_index(rx, ry);
                for (c, v) in m.row_cols(r).iter().zip(m.row_values(r)) {
                    let (cx, cy) = nb.local_ij(*c);
                    sum[gr * g.n_nodes() + g.node_index(cx, cy)] += v;
                }
            }
        }
        let dense = full.to_dense();
        for (a, b) in dense.iter().zip(&sum) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn region_restriction_matches_mask() {
        let g = GridHierarchy::new(20, 4).unwrap();
        let field = periodic_square(&g, 1, 1.0, 0.3).unwrap();
        let region = g.oversample(0, 1);
        let dofs = g.local_dof_map(&region);
        let direct = assemble(&g, Some(&field), Weight::SignedSigma, &region, Operator::Stiffness).unwrap();
        let full = assemble_box(&g, Some(&field), Weight::SignedSigma, Operator::Stiffness, &dofs.node_box(), None)
            .unwrap();
        assert_eq!(direct, full.restrict(dofs.interior_mask()));
        assert_eq!(direct.dim(), dofs.n_interior());
    }

    #[test]
    fn triplets_and_matrix_market() {
        let m = SparseSymMatrix::from_triplets(
            3,
            vec![(0, 0, 2.0), (1, 0, -1.0), (0, 1, -1.0), (2, 2, 1.0), (0, 0, 1.0)],
            Definiteness::Indefinite,
        )
        .unwrap();
        assert_eq!(m.get(0, 0), Some(3.0));
        assert_eq!(m.get(1, 1), None);
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n"));
        assert!(SparseSymMatrix::from_triplets(2, vec![(0, 1, 1.0)], Definiteness::Indefinite).is_err());
    }

    proptest! {
        #[test]
        fn assembled_form_matches_elementwise(
            seed_vals in proptest::collection::vec(prop_oneof![0.1f64..5.0, -5.0f64..-0.1], 64),
            x in proptest::collection::vec(-1.0f64..1.0, 81),
            y in proptest::collection::vec(-1.0f64..1.0, 81),
            op in prop_oneof![Just(Operator::Stiffness), Just(Operator::Mass)],
            w in prop_oneof![Just(Weight::SignedSigma), Just(Weight::AbsMu), Just(Weight::Unit)],
        ) {
            let g = GridHierarchy::new(8, 2).unwrap();
            let field = CoefficientField::from_values(8, seed_vals).unwrap();
            let nb = g.domain_box();
            let a = assemble_box(&g, Some(&field), w, op, &nb, None).unwrap();
            let direct = a.form(&x, &y);
            let reference = elementwise_form(&g, Some(&field), w, op, &nb, &x, &y);
            prop_assert!((direct - reference).abs() <= 1e-12 * (1.0 + reference.abs()) * 1e3);
            prop_assert!((a.form(&x, &y) - a.form(&y, &x)).abs() <= 1e-10 * (1.0 + direct.abs()));
        }
    }
}
