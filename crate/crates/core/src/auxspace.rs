//! Per-element spectral problems with `|sigma|` weights, the auxiliary space
//! they span and the weighted L2 projection onto it.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use faer::prelude::*;
use faer::{Par, Side};
use rayon::prelude::*;

use crate::assembly::{assemble_element, Operator, SparseSymMatrix, Weight};
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, Region};

/// Eigenvalues below this are reported as exactly zero.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

/// Spectral data of one coarse element. Vectors live on the
/// `(sub_n + 1)^2` element nodes in lexicographic order.
#[derive(Debug, Clone)]
pub struct ElementAux {
    n_local: usize,
    l_star: usize,
    /// The `l_star + 1` smallest eigenvalues, ascending.
    eigenvalues: Vec<f64>,
    /// Kept eigenvectors, column-major `n_local x l_star`.
    psi: Vec<f64>,
    /// `Z = Psi^T M`, row-major `l_star x n_local`.
    z: Vec<f64>,
    /// `Psi^T M_signed Psi`, row-major `l_star x l_star`.
    signed_gram: Vec<f64>,
    stiffness: SparseSymMatrix,
    mass: SparseSymMatrix,
}

impl ElementAux {
    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn l_star(&self) -> usize {
        self.l_star
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `lambda_{l*+1}`, the first discarded eigenvalue.
    pub fn gap(&self) -> f64 {
        self.eigenvalues[self.l_star]
    }

    pub fn psi(&self, j: usize) -> &[f64] {
        &self.psi[j * self.n_local..(j + 1) * self.n_local]
    }

    /// Row `j` of `Psi^T M`: the functional giving coefficient `j`.
    pub fn z_row(&self, j: usize) -> &[f64] {
        &self.z[j * self.n_local..(j + 1) * self.n_local]
    }

    pub fn signed_gram(&self) -> &[f64] {
        &self.signed_gram
    }

    /// Weighted stiffness `<|sigma| grad v, grad w>` on the element nodes.
    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    /// Weighted mass `<24 H^-2 |sigma| v, w>` on the element nodes.
    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    /// Projection coefficients `c = Z v` of a local vector.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_local, "local vector length");
        (0..self.l_star).map(|j| dot(self.z_row(j), v)).collect()
    }

    /// `sum_j c_j psi_j` on the element nodes.
    pub fn expand(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_local];
        for (j, cj) in c.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.psi(j)) {
                *o += cj * p;
            }
        }
        out
    }

    /// `||v||^2` in the weighted mass norm.
    pub fn norm_s_sq(&self, v: &[f64]) -> f64 {
        self.mass.form(v, v)
    }

    /// `||v||^2` in the weighted energy seminorm.
    pub fn norm_a_sq(&self, v: &[f64]) -> f64 {
        self.stiffness.form(v, v)
    }
}

/// Auxiliary space over every coarse element. Elements with identical
/// coefficient blocks share one spectral solve.
#[derive(Debug, Clone)]
pub struct AuxSpace {
    l_star: usize,
    unique: Vec<Arc<ElementAux>>,
    element_shape: Vec<usize>,
}

impl AuxSpace {
    pub fn l_star(&self) -> usize {
        self.l_star
    }

    pub fn n_elem(&self) -> usize {
        self.element_shape.len()
    }

    pub fn element(&self, i: usize) -> &ElementAux {
        &self.unique[self.element_shape[i]]
    }

    /// Number of distinct spectral problems actually solved.
    pub fn n_unique(&self) -> usize {
        self.unique.len()
    }

    /// `lambda_i^*` of element `i`.
    pub fn gap(&self, i: usize) -> f64 {
        self.element(i).gap()
    }

    /// `1 / max_i lambda_i^*`.
    pub fn epsilon(&self) -> f64 {
        1.0 / (0..self.n_elem()).map(|i| self.gap(i)).fold(f64::MIN, f64::max)
    }

    pub fn total_basis(&self) -> usize {
        self.l_star * self.n_elem()
    }

    /// Gathers the element-local part of a fine-node vector.
    pub fn gather(&self, g: &GridHierarchy, elem: usize, v: &[f64]) -> Vec<f64> {
        let nb = g.element_box(elem);
        (0..nb.n_nodes())
            .map(|k| {
                let (ix, iy) = nb.local_ij(k);
                v[g.node_index(ix, iy)]
            })
            .collect()
    }

    /// Projection coefficients of `v` on every element of `region`.
    pub fn project(&self, g: &GridHierarchy, v: &[f64], region: &Region) -> Projection {
        let coeffs = region
            .elements()
            .iter()
            .map(|&e| (e, self.element(e).coefficients(&self.gather(g, e, v))))
            .collect();
        Projection { coeffs }
    }

    /// Smallest and largest `lambda_j` over elements for `j = 2..=4`, as far
    /// as computed.
    pub fn spectral_statistics(&self) -> SpectralReport {
        let top = (self.l_star + 1).min(4);
        let rows = (2..=top)
            .map(|j| {
                let vals = (0..self.n_elem()).map(|i| self.element(i).eigenvalues[j - 1]);
                let (lo, hi) = vals.fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v), h.max(v)));
                SpectralRow { index: j, min: lo, max: hi }
            })
            .collect();
        SpectralReport { rows }
    }

    /// Rebuilds a space from cached spectral data, checked for consistency.
    pub fn from_parts(l_star: usize, unique: Vec<ElementAux>, element_shape: Vec<usize>) -> Result<Self> {
        if let Some(bad) = element_shape.iter().find(|s| **s >= unique.len()) {
            return Err(Error::DimensionMismatch { expected: unique.len(), actual: *bad + 1 });
        }
        if unique.iter().any(|u| u.l_star != l_star) {
            return Err(Error::Config("cached spectral data has a different l_star".into()));
        }
        Ok(Self { l_star, unique: unique.into_iter().map(Arc::new).collect(), element_shape })
    }

    pub fn unique_elements(&self) -> impl Iterator<Item = &ElementAux> {
        self.unique.iter().map(|a| a.as_ref())
    }

    pub fn element_shapes(&self) -> &[usize] {
        &self.element_shape
    }
}

/// Per-element projection coefficients, in region element order.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coeffs: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRow {
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub rows: Vec<SpectralRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the spectral problem of element `i`.
pub fn solve_local_eigen(
    g: &GridHierarchy,
    field: &CoefficientField,
    i: usize,
    l_star: usize,
) -> Result<ElementAux> {
    field.check_grid(g)?;
    let stiffness = assemble_element(g, Some(field), Weight::AbsSigma, i, Operator::Stiffness)?;
    let mass = assemble_element(g, Some(field), Weight::AbsMu, i, Operator::Mass)?;
    let signed = assemble_element(g, Some(field), Weight::SignedMu, i, Operator::Mass)?;
    let n = stiffness.dim();
    if l_star == 0 || l_star + 1 > n {
        return Err(Error::Config(format!(
            "l_star must satisfy 1 <= l_star < {n} local nodes, got {l_star}"
        )));
    }
    let (eigenvalues, vectors) = generalized_eigen(&stiffness, &mass, l_star + 1)
        .map_err(|reason| Error::Eigen { element: i, reason })?;
    let psi = vectors[..n * l_star].to_vec();
    Ok(finish_element(l_star, eigenvalues, psi, stiffness, mass, &signed))
}

/// Rebuilds element data from stored eigenpairs; the weighted matrices are
/// reassembled from the field.
pub fn element_from_eigenpairs(
    g: &GridHierarchy,
    field: &CoefficientField,
    i: usize,
    l_star: usize,
    eigenvalues: Vec<f64>,
    psi: Vec<f64>,
) -> Result<ElementAux> {
    let stiffness = assemble_element(g, Some(field), Weight::AbsSigma, i, Operator::Stiffness)?;
    let mass = assemble_element(g, Some(field), Weight::AbsMu, i, Operator::Mass)?;
    let signed = assemble_element(g, Some(field), Weight::SignedMu, i, Operator::Mass)?;
    let n = stiffness.dim();
    if eigenvalues.len() != l_star + 1 || psi.len() != n * l_star {
        return Err(Error::DimensionMismatch { expected: n * l_star, actual: psi.len() });
    }
    Ok(finish_element(l_star, eigenvalues, psi, stiffness, mass, &signed))
}

fn finish_element(
    l_star: usize,
    eigenvalues: Vec<f64>,
    psi: Vec<f64>,
    stiffness: SparseSymMatrix,
    mass: SparseSymMatrix,
    signed: &SparseSymMatrix,
) -> ElementAux {
    let n = stiffness.dim();
    let mut z = vec![0.0; l_star * n];
    let mut mpsi_signed = vec![0.0; l_star * n];
    for j in 0..l_star {
        let col = &psi[j * n..(j + 1) * n];
        mass.mul_vec_into(col, &mut z[j * n..(j + 1) * n]);
        signed.mul_vec_into(col, &mut mpsi_signed[j * n..(j + 1) * n]);
    }
    let mut signed_gram = vec![0.0; l_star * l_star];
    for a in 0..l_star {
        for b in 0..l_star {
            signed_gram[a * l_star + b] = dot(&psi[a * n..(a + 1) * n], &mpsi_signed[b * n..(b + 1) * n]);
        }
    }
    for a in 0..l_star {
        for b in 0..a {
            let s = 0.5 * (signed_gram[a * l_star + b] + signed_gram[b * l_star + a]);
            signed_gram[a * l_star + b] = s;
            signed_gram[b * l_star + a] = s;
        }
    }
    ElementAux { n_local: n, l_star, eigenvalues, psi, z, signed_gram, stiffness, mass }
}

/// The `count` smallest eigenpairs of `A v = lambda B v` with `B` positive
/// definite, by Cholesky reduction to a standard symmetric problem.
/// Eigenvectors are `B`-orthonormal, column-major.
fn generalized_eigen(
    a: &SparseSymMatrix,
    b: &SparseSymMatrix,
    count: usize,
) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let n = a.dim();
    let da = a.to_dense();
    let db = b.to_dense();
    let am = Mat::from_fn(n, n, |i, j| da[i * n + j]);
    let bm = Mat::from_fn(n, n, |i, j| db[i * n + j]);
    let llt = bm.llt(Side::Lower).map_err(|e| format!("mass matrix not definite: {e:?}"))?;
    let l = llt.L();

    // C = L^-1 A L^-T
    let mut c = am.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, ct.as_mut(), Par::Seq);
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (ct[(i, j)] + ct[(j, i)]));

    let evd = c.self_adjoint_eigen(Side::Lower).map_err(|e| format!("eigensolver failed: {e:?}"))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut y = Mat::from_fn(n, count, |i, j| u[(i, j)]);
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), y.as_mut(), Par::Seq);

    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(n * count);
    for j in 0..count {
        let lam = s[j];
        if !lam.is_finite() {
            return Err(format!("eigenvalue {j} is not finite"));
        }
        values.push(if lam < ZERO_EIGENVALUE { 0.0 } else { lam });
        let col: Vec<f64> = (0..n).map(|i| y[(i, j)]).collect();
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = col.iter().find(|v| v.abs() > 1e-8 * peak).map_or(1.0, |v| v.signum());
        vectors.extend(col.iter().map(|v| sign * v));
    }
    Ok((values, vectors))
}

/// Bit pattern of the signed coefficient on an element, used to share
/// spectral solves between identical elements.
fn element_key(g: &GridHierarchy, field: &CoefficientField, i: usize) -> Vec<u64> {
    let nb = g.element_box(i);
    let mut key = Vec::with_capacity(nb.cells_x * nb.cells_y);
    for cy in nb.y0..nb.y0 + nb.cells_y {
        for cx in nb.x0..nb.x0 + nb.cells_x {
            key.push(field.at(cx, cy).to_bits());
        }
    }
    key
}

/// Solves every element problem, in parallel over distinct elements.
pub fn build_aux_space(g: &GridHierarchy, field: &CoefficientField, l_star: usize) -> Result<AuxSpace> {
    field.check_grid(g)?;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut representatives = Vec::new();
    let mut element_shape = Vec::with_capacity(g.n_elem());
    for i in 0..g.n_elem() {
        let key = element_key(g, field, i);
        let next = representatives.len();
        let s = *index.entry(key).or_insert_with(|| {
            representatives.push(i);
            next
        });
        element_shape.push(s);
    }
    let unique = representatives
        .par_iter()
        .map(|&i| solve_local_eigen(g, field, i, l_star).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    log::debug!("aux space: {} elements, {} distinct spectral problems", g.n_elem(), unique.len());
    Ok(AuxSpace { l_star, unique, element_shape })
}

/// Eigenvalues of the pencil with signed weights on both sides, sorted by
/// real part. Negative values show why that pencil cannot rank modes.
pub fn signed_eigen_diagnostic(
    g: &GridHierarchy,
    field: &CoefficientField,
    i: usize,
) -> Result<Vec<(f64, f64)>> {
    let a = assemble_element(g, Some(field), Weight::SignedSigma, i, Operator::Stiffness)?;
    let b = assemble_element(g, Some(field), Weight::SignedMu, i, Operator::Mass)?;
    let n = a.dim();
    let (da, db) = (a.to_dense(), b.to_dense());
    let bm = Mat::from_fn(n, n, |r, c| db[r * n + c]);
    let lu = bm.partial_piv_lu();
    let scale = db.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if (0..n).any(|k| lu.U()[(k, k)].abs() < 1e-14 * scale) {
        return Err(Error::Eigen { element: i, reason: "signed mass is singular".into() });
    }
    let mut m = Mat::from_fn(n, n, |r, c| da[r * n + c]);
    faer::linalg::solvers::Solve::solve_in_place(&lu, m.as_mut());
    let vals = m
        .eigenvalues()
        .map_err(|e| Error::Eigen { element: i, reason: format!("{e:?}") })?;
    let mut out: Vec<(f64, f64)> = vals.iter().map(|z| (z.re, z.im)).collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    Ok(out)
}

/// Magic bytes of the spectral cache.
pub const AUX_MAGIC: &[u8; 4] = b"CEMA";
pub const AUX_VERSION: u32 = 1;

/// Content hash of the data a spectral space depends on.
pub fn aux_provenance(g: &GridHierarchy, field: &CoefficientField, l_star: usize) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(b"signcem-aux");
    for v in [g.fine_n() as u64, g.coarse_n() as u64, l_star as u64] {
        h.update(v.to_le_bytes());
    }
    for v in field.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

/// Writes eigenpairs of each distinct element, little-endian.
pub fn write_aux_cache<W: Write>(aux: &AuxSpace, hash: &[u8; 32], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let put = |w: &mut BufWriter<W>, v: u64| w.write_all(&v.to_le_bytes());
    w.write_all(AUX_MAGIC)?;
    w.write_all(&AUX_VERSION.to_le_bytes())?;
    w.write_all(hash)?;
    put(&mut w, aux.n_elem() as u64)?;
    put(&mut w, aux.l_star as u64)?;
    put(&mut w, aux.unique.len() as u64)?;
    for s in &aux.element_shape {
        put(&mut w, *s as u64)?;
    }
    for u in &aux.unique {
        put(&mut w, u.n_local as u64)?;
        for v in u.eigenvalues.iter().chain(&u.psi) {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a spectral cache written for the same grid, field and `l*`.
pub fn read_aux_cache<R: Read>(
    g: &GridHierarchy,
    field: &CoefficientField,
    l_star: usize,
    r: R,
    path: &Path,
) -> Result<AuxSpace> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut r = BufReader::new(r);
    let mut b8 = [0u8; 8];
    let mut get = |r: &mut BufReader<R>| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != AUX_MAGIC {
        return Err(bad("bad magic".into()));
    }
    if u32::from_le_bytes([head[4], head[5], head[6], head[7]]) != AUX_VERSION {
        return Err(bad("unsupported version".into()));
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash)?;
    let expected = aux_provenance(g, field, l_star);
    if hash != expected {
        let hex = |h: &[u8; 32]| h.iter().map(|b| format!("{b:02x}")).collect::<String>();
        return Err(Error::Provenance { expected: hex(&expected), actual: hex(&hash) });
    }
    let (n_elem, ls, n_unique) = (get(&mut r)? as usize, get(&mut r)? as usize, get(&mut r)? as usize);
    if n_elem != g.n_elem() || ls != l_star || n_unique == 0 || n_unique > n_elem {
        return Err(bad(format!("header describes {n_elem} elements, l*={ls}, {n_unique} shapes")));
    }
    let mut element_shape = Vec::with_capacity(n_elem);
    for _ in 0..n_elem {
        element_shape.push(get(&mut r)? as usize);
    }
    let mut representative = vec![usize::MAX; n_unique];
    for (i, s) in element_shape.iter().enumerate() {
        if *s >= n_unique {
            return Err(bad(format!("shape index {s} out of range")));
        }
        if representative[*s] == usize::MAX {
            representative[*s] = i;
        }
    }
    let mut unique = Vec::with_capacity(n_unique);
    for &i in &representative {
        let n = get(&mut r)? as usize;
        let expected_n = (g.sub_n() + 1).pow(2);
        if n != expected_n || i == usize::MAX {
            return Err(bad(format!("element record has {n} nodes, expected {expected_n}")));
        }
        let mut read = |count: usize| -> Result<Vec<f64>> {
            (0..count).map(|_| get(&mut r).map(f64::from_bits)).collect()
        };
        let eigenvalues = read(l_star + 1)?;
        let psi = read(n * l_star)?;
        unique.push(element_from_eigenpairs(g, field, i, l_star, eigenvalues, psi)?);
    }
    AuxSpace::from_parts(l_star, unique, element_shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{flat_interface, periodic_cross, periodic_square};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> (GridHierarchy, CoefficientField) {
        let g = GridHierarchy::new(40, 4).unwrap();
        let f = periodic_square(&g, 2, 1.0, 0.1).unwrap();
        (g, f)
    }

    #[test]
    fn first_pair_is_zero_and_constant() {
        let (g, f) = small();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        for i in 0..g.n_elem() {
            let e = aux.element(i);
            assert!(e.eigenvalues()[0] <= 1e-10);
            let v = e.psi(0);
            let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(l, h), x| (l.min(*x), h.max(*x)));
            assert!((hi - lo) / hi.abs() <= 1e-8);
            assert!(lo > 0.0);
        }
    }

    #[test]
    fn eigenpairs_orthonormal_and_accurate() {
        let g = GridHierarchy::new(40, 4).unwrap();
        let f = periodic_cross(&g, 2, 1.0, 1e3).unwrap();
        let aux = build_aux_space(&g, &f, 4).unwrap();
        for i in 0..g.n_elem() {
            let e = aux.element(i);
            for a in 0..4 {
                for b in 0..4 {
                    let m = e.mass().form(e.psi(a), e.psi(b));
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((m - expected).abs() < 1e-10, "gram {a}{b} = {m}");
                }
                let av = e.stiffness().mul_vec(e.psi(a));
                let bv = e.mass().mul_vec(e.psi(a));
                let lam = e.eigenvalues()[a];
                let r: f64 = av.iter().zip(&bv).map(|(x, y)| (x - lam * y).powi(2)).sum::<f64>().sqrt();
                let vn = e.psi(a).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(r <= 1e-9 * e.stiffness().max_abs() * vn * 10.0, "residual {r}");
            }
            assert!(e.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn homogeneous_neumann_oracle() {
        let g = GridHierarchy::new(40, 1).unwrap();
        let f = CoefficientField::uniform(&g, 1.0).unwrap();
        let e = solve_local_eigen(&g, &f, 0, 4).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let l = e.eigenvalues();
        assert!((l[1] / (pi2 / 24.0) - 1.0).abs() < 0.02, "{}", l[1]);
        assert!((l[2] - l[1]).abs() < 1e-10);
        assert!((l[3] / (2.0 * pi2 / 24.0) - 1.0).abs() < 0.02, "{}", l[3]);
    }

    #[test]
    fn scale_and_swap_invariance() {
        let (g, f) = small();
        let base = build_aux_space(&g, &f, 3).unwrap();
        let scaled = build_aux_space(&g, &f.scaled(7.3).unwrap(), 3).unwrap();
        let swapped = build_aux_space(&g, &f.negated(), 3).unwrap();
        for i in 0..g.n_elem() {
            for ((a, b), c) in base.element(i).eigenvalues().iter()
                .zip(scaled.element(i).eigenvalues())
                .zip(swapped.element(i).eigenvalues())
            {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-12) + 1e-14);
                assert_eq!(a, c);
            }
        }
    }

    #[test]
    fn shared_solves_for_periodic_elements() {
        let g = GridHierarchy::new(32, 4).unwrap();
        let f = periodic_square(&g, 4, 1.0, 0.1).unwrap();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        assert_eq!(aux.n_unique(), 1);
        assert_eq!(aux.total_basis(), 48);
        let flat = flat_interface(&g, 0.5, 1.0, 1.01).unwrap().0;
        let aux = build_aux_space(&g, &flat, 1).unwrap();
        assert_eq!(aux.n_unique(), 2);
        let epsilon = aux.epsilon();
        let max_gap = (0..16).map(|i| aux.gap(i)).fold(0.0, f64::max);
        assert_eq!(epsilon, 1.0 / max_gap);
    }

    #[test]
    fn projection_properties() {
        let (g, f) = small();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        let e = aux.element(5);
        // own basis vector is reproduced
        let c = e.coefficients(e.psi(1));
        assert!((c[0]).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12 && c[2].abs() < 1e-12);
        // idempotence
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..e.n_local()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = e.expand(&e.coefficients(&v));
        let pp = e.expand(&e.coefficients(&p));
        for (a, b) in p.iter().zip(&pp) {
            assert!((a - b).abs() < 1e-10);
        }
        // orthogonal complement is annihilated
        let w: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
        assert!(e.coefficients(&w).iter().all(|c| c.abs() < 1e-10));

        // region projection touches only region elements
        let global: Vec<f64> = (0..g.n_nodes()).map(|k| (k % 5) as f64).collect();
        let proj = aux.project(&g, &global, &g.oversample(0, 1));
        let elems: Vec<usize> = proj.coeffs.iter().map(|(e, _)| *e).collect();
        assert_eq!(elems, vec![0, 1, 4, 5]);
    }

    #[test]
    fn lemma_inequalities_on_random_vectors() {
        let (g, f) = small();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..g.n_elem() {
            let e = aux.element(i);
            let lam = e.gap();
            for _ in 0..20 {
                let v: Vec<f64> = (0..e.n_local()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let pv = e.expand(&e.coefficients(&v));
                let diff: Vec<f64> = v.iter().zip(&pv).map(|(a, b)| a - b).collect();
                let lhs = e.norm_s_sq(&diff).sqrt();
                let rhs = e.norm_a_sq(&v).sqrt() / lam.sqrt();
                assert!(lhs <= rhs * (1.0 + 1e-12));
                assert!(e.norm_s_sq(&v) <= (e.norm_s_sq(&pv) + e.norm_a_sq(&v) / lam) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn signed_gram_aligned_is_plus_minus_identity() {
        let g = GridHierarchy::new(40, 20).unwrap();
        let f = periodic_square(&g, 5, 1.0, 0.1).unwrap();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        for i in 0..g.n_elem() {
            let (ex, ey) = g.element_ij(i);
            let sign = f.sign_at(2 * ex, 2 * ey);
            let s = aux.element(i).signed_gram();
            for a in 0..3 {
                for b in 0..3 {
                    let expected = if a == b { sign } else { 0.0 };
                    assert!((s[a * 3 + b] - expected).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn signed_pencil_has_negative_eigenvalues() {
        let g = GridHierarchy::new(16, 2).unwrap();
        let (f, _) = flat_interface(&g, 0.3, 1.0, 1.0).unwrap();
        // element 0 straddles the interface at 0.3
        let vals = signed_eigen_diagnostic(&g, &f, 0).unwrap();
        assert!(vals.iter().any(|(re, _)| *re < -1e-8), "{vals:?}");
        let aux = build_aux_space(&g, &f, 3).unwrap();
        assert!(aux.element(0).eigenvalues().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn spectral_report_rows() {
        let g = GridHierarchy::new(40, 4).unwrap();
        let f = CoefficientField::uniform(&g, 2.0).unwrap();
        let report = build_aux_space(&g, &f, 3).unwrap().spectral_statistics();
        assert_eq!(report.rows.len(), 3);
        for r in &report.rows {
            assert_eq!(r.min, r.max);
        }
        let short = build_aux_space(&g, &f, 1).unwrap().spectral_statistics();
        assert_eq!(short.rows.len(), 1);
    }

    #[test]
    fn invalid_l_star() {
        let g = GridHierarchy::new(4, 4).unwrap();
        let f = CoefficientField::uniform(&g, 1.0).unwrap();
        assert!(solve_local_eigen(&g, &f, 0, 4).is_err());
        assert!(solve_local_eigen(&g, &f, 0, 0).is_err());
        assert!(solve_local_eigen(&g, &f, 0, 3).is_ok());
    }

    #[test]
    fn aux_cache_round_trip() {
        let g = GridHierarchy::new(32, 4).unwrap();
        let f = crate::coeff::periodic_square(&g, 4, 1.0, 0.1).unwrap();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        let hash = aux_provenance(&g, &f, 3);
        let mut buf = Vec::new();
        write_aux_cache(&aux, &hash, &mut buf).unwrap();
        let path = std::path::Path::new("mem");
        let back = read_aux_cache(&g, &f, 3, buf.as_slice(), path).unwrap();
        assert_eq!(back.element_shapes(), aux.element_shapes());
        for i in 0..g.n_elem() {
            let (a, b) = (aux.element(i), back.element(i));
            assert_eq!(a.eigenvalues(), b.eigenvalues());
            assert_eq!(a.z_row(2), b.z_row(2));
            assert_eq!(a.signed_gram(), b.signed_gram());
        }
        let other = f.scaled(2.0).unwrap();
        assert!(matches!(read_aux_cache(&g, &other, 3, buf.as_slice(), path), Err(Error::Provenance { .. })));
        assert!(read_aux_cache(&g, &f, 3, &buf[..buf.len() - 3], path).is_err());
    }
}
