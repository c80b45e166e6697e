//! Localized multiscale basis functions on oversampling regions.
//!
//! For coarse element `K_i` and eigenfunction `psi_{i,j}` the basis function
//! minimizes the relaxed energy
//! `a(phi, w) + s(P phi, P w) = s(psi_{i,j}, P w)_{K_i}` over functions
//! vanishing on the boundary of the `m`-layer region. The penalty is
//! assembled element by element from the signed Gram matrices of the
//! auxiliary space.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use faer::prelude::*;
use faer::Side;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::assembly::{assemble_box, Definiteness, Operator, SparseSymMatrix, Weight};
use crate::auxspace::AuxSpace;
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{CoarseBlock, GridHierarchy, Region};
use crate::linsolve::{factor_auto_with, LdltAnalysis};
use crate::metrics::Norms;

pub const CACHE_MAGIC: &[u8; 4] = b"CEMB";
pub const CACHE_VERSION: u32 = 1;

/// Penalty components below this fraction of the largest are dropped.
const GRAM_DROP: f64 = 1e-12;

/// How the penalty term enters the local linear system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalForm {
    /// Symmetric saddle form with one multiplier per kept Gram eigenvalue;
    /// keeps the stencil sparse.
    #[default]
    Augmented,
    /// `A + sum_K Z_K^T S_K Z_K` assembled explicitly. Dense per element,
    /// meant for small meshes and cross-checks.
    Direct,
}

/// The `l*` basis functions of one coarse element, stored on the strict
/// interior nodes of its oversampling region.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBasis {
    pub block: CoarseBlock,
    /// Row-major `l* x n_interior`.
    pub values: Vec<f64>,
}

/// Rectangle of fine nodes `x0..x0+nx` by `y0..y0+ny`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRect {
    pub x0: usize,
    pub y0: usize,
    pub nx: usize,
    pub ny: usize,
}

impl NodeRect {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn intersect(&self, o: &NodeRect) -> Option<NodeRect> {
        let x0 = self.x0.max(o.x0);
        let y0 = self.y0.max(o.y0);
        let x1 = (self.x0 + self.nx).min(o.x0 + o.nx);
        let y1 = (self.y0 + self.ny).min(o.y0 + o.ny);
        (x1 > x0 && y1 > y0).then(|| NodeRect { x0, y0, nx: x1 - x0, ny: y1 - y0 })
    }

    #[inline]
    pub fn local(&self, ix: usize, iy: usize) -> usize {
        (iy - self.y0) * self.nx + (ix - self.x0)
    }
}

/// Strict interior node rectangle of a coarse block.
pub fn interior_rect(g: &GridHierarchy, block: CoarseBlock) -> NodeRect {
    let s = g.sub_n();
    NodeRect {
        x0: block.x0 * s + 1,
        y0: block.y0 * s + 1,
        nx: (block.width() * s).saturating_sub(1),
        ny: (block.height() * s).saturating_sub(1),
    }
}

/// Closed node rectangle of a coarse block, boundary included.
pub fn closed_rect(g: &GridHierarchy, block: CoarseBlock) -> NodeRect {
    let s = g.sub_n();
    NodeRect { x0: block.x0 * s, y0: block.y0 * s, nx: block.width() * s + 1, ny: block.height() * s + 1 }
}

/// All multiscale basis functions for one layer count.
#[derive(Debug, Clone, PartialEq)]
pub struct MsBasisSet {
    pub fine_n: usize,
    pub coarse_n: usize,
    pub l_star: usize,
    pub layers: usize,
    pub provenance: [u8; 32],
    pub elements: Vec<ElementBasis>,
}

impl MsBasisSet {
    pub fn n_elem(&self) -> usize {
        self.elements.len()
    }

    pub fn n_basis(&self) -> usize {
        self.elements.len() * self.l_star
    }

    /// Coarse index `p = i * l* + j` to `(i, j)`.
    pub fn split_index(&self, p: usize) -> (usize, usize) {
        (p / self.l_star, p % self.l_star)
    }

    pub fn support(&self, g: &GridHierarchy, i: usize) -> NodeRect {
        interior_rect(g, self.elements[i].block)
    }

    pub fn values(&self, i: usize, j: usize) -> &[f64] {
        let v = &self.elements[i].values;
        let n = v.len() / self.l_star;
        &v[j * n..(j + 1) * n]
    }

    /// Basis function `(i, j)` as a vector over every fine node.
    pub fn to_fine(&self, g: &GridHierarchy, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; g.n_nodes()];
        let r = self.support(g, i);
        let v = self.values(i, j);
        for ly in 0..r.ny {
            for lx in 0..r.nx {
                out[g.node_index(r.x0 + lx, r.y0 + ly)] = v[ly * r.nx + lx];
            }
        }
        out
    }

    pub fn check_grid(&self, g: &GridHierarchy) -> Result<()> {
        if self.fine_n != g.fine_n() || self.coarse_n != g.coarse_n() {
            return Err(Error::Provenance {
                expected: format!("grid {}x{}", self.fine_n, self.coarse_n),
                actual: format!("grid {}x{}", g.fine_n(), g.coarse_n()),
            });
        }
        Ok(())
    }
}

/// Content hash of everything a basis set depends on.
pub fn provenance(g: &GridHierarchy, field: &CoefficientField, l_star: usize, layers: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"signcem-basis");
    for v in [g.fine_n() as u64, g.coarse_n() as u64, l_star as u64, layers as u64] {
        h.update(v.to_le_bytes());
    }
    for v in field.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

pub fn hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Symbolic analyses shared between local systems with equal sparsity.
#[derive(Debug, Default)]
pub struct SymbolicCache {
    entries: Mutex<HashMap<u64, Vec<(Vec<usize>, Vec<usize>, LdltAnalysis)>>>,
}

impl SymbolicCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn analysis(&self, a: &SparseSymMatrix) -> Result<LdltAnalysis> {
        let mut hasher = DefaultHasher::new();
        a.row_ptr().hash(&mut hasher);
        a.col_idx().hash(&mut hasher);
        let key = hasher.finish();
        {
            let map = self.entries.lock().expect("cache lock");
            if let Some(list) = map.get(&key) {
                for (rp, ci, an) in list {
                    if rp == a.row_ptr() && ci == a.col_idx() {
                        return Ok(an.clone());
                    }
                }
            }
        }
        let an = LdltAnalysis::new(a)?;
        self.entries
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_default()
            .push((a.row_ptr().to_vec(), a.col_idx().to_vec(), an.clone()));
        Ok(an)
    }
}

/// Eigen-decomposition `S = Q diag(d) Q^T` of a small symmetric matrix,
/// column-major `Q`.
fn small_eigen(s: &[f64], l: usize) -> (Vec<f64>, Vec<f64>) {
    let m = Mat::from_fn(l, l, |i, j| s[i * l + j]);
    let evd = m.self_adjoint_eigen(Side::Lower).expect("small symmetric eigenproblem");
    let d: Vec<f64> = (0..l).map(|k| evd.S().column_vector()[k]).collect();
    let u = evd.U();
    let q = (0..l * l).map(|k| u[(k % l, k / l)]).collect();
    (d, q)
}

/// Local linear system of one oversampling region, with all `l*`
/// right-hand sides.
struct LocalSystem {
    matrix: SparseSymMatrix,
    rhs: Vec<f64>,
    n_interior: usize,
}

fn local_system(
    g: &GridHierarchy,
    field: &CoefficientField,
    aux: &AuxSpace,
    i: usize,
    region: &Region,
    form: LocalForm,
) -> Result<LocalSystem> {
    let dofs = g.local_dof_map(region);
    let nb = dofs.node_box();
    let mask = dofs.interior_mask();
    let mut imap = vec![usize::MAX; nb.n_nodes()];
    let mut n_x = 0;
    for (k, keep) in mask.iter().enumerate() {
        if *keep {
            imap[k] = n_x;
            n_x += 1;
        }
    }
    let l = aux.l_star();
    let a = assemble_box(g, Some(field), Weight::SignedSigma, Operator::Stiffness, &nb, Some(mask))?;

    // (interior index, element-local node) pairs of each region element
    let coupling = |e: usize| -> Vec<(usize, usize)> {
        let eb = g.element_box(e);
        (0..eb.n_nodes())
            .filter_map(|k| {
                let (ix, iy) = eb.local_ij(k);
                let idx = imap[nb.local(ix, iy).expect("element inside region")];
                (idx != usize::MAX).then_some((idx, k))
            })
            .collect()
    };

    let (matrix, n_total) = match form {
        LocalForm::Augmented => augmented(&a, aux, region, l, coupling)?,
        LocalForm::Direct => direct(&a, aux, region, l, coupling)?,
    };

    // right-hand sides: Z_{K_i}^T S_{K_i} e_j
    let ea = aux.element(i);
    let s = ea.signed_gram();
    let mut rhs = vec![0.0; n_total * l];
    for (idx, node) in coupling(i) {
        for j in 0..l {
            rhs[j * n_total + idx] = (0..l).map(|aa| s[aa * l + j] * ea.z_row(aa)[node]).sum();
        }
    }
    Ok(LocalSystem { matrix, rhs, n_interior: n_x })
}

/// `[[A, W^T], [W, -D^-1]]` with one multiplier per kept Gram eigenvalue,
/// written straight into CSR.
fn augmented(
    a: &SparseSymMatrix,
    aux: &AuxSpace,
    region: &Region,
    l: usize,
    coupling: impl Fn(usize) -> Vec<(usize, usize)>,
) -> Result<(SparseSymMatrix, usize)> {
    let n_x = a.dim();
    let mut extra: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_x];
    let mut mult_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for &e in region.elements() {
        let ea = aux.element(e);
        let (d, q) = small_eigen(ea.signed_gram(), l);
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pairs = coupling(e);
        for k in 0..l {
            if d[k].abs() <= GRAM_DROP * dmax {
                continue;
            }
            let r = n_x + mult_rows.len();
            let mut row = Vec::with_capacity(pairs.len());
            for &(idx, node) in &pairs {
                let w: f64 = (0..l).map(|jj| q[k * l + jj] * ea.z_row(jj)[node]).sum();
                if w != 0.0 {
                    row.push((idx, w));
                    extra[idx].push((r, w));
                }
            }
            mult_rows.push((row, -1.0 / d[k]));
        }
    }
    let n = n_x + mult_rows.len();
    let nnz = a.nnz() + 2 * extra.iter().map(Vec::len).sum::<usize>() + mult_rows.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for (r, ex) in extra.iter().enumerate() {
        col_idx.extend_from_slice(a.row_cols(r));
        values.extend_from_slice(a.row_values(r));
        for &(c, v) in ex {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    for (r, (row, diag)) in mult_rows.iter().enumerate() {
        for &(c, v) in row {
            col_idx.push(c);
            values.push(v);
        }
        col_idx.push(n_x + r);
        values.push(*diag);
        row_ptr.push(col_idx.len());
    }
    Ok((SparseSymMatrix::from_csr(n, row_ptr, col_idx, values, Definiteness::Indefinite)?, n))
}

/// `A + sum_K Z_K^T S_K Z_K`, assembled from dense element blocks.
fn direct(
    a: &SparseSymMatrix,
    aux: &AuxSpace,
    region: &Region,
    l: usize,
    coupling: impl Fn(usize) -> Vec<(usize, usize)>,
) -> Result<(SparseSymMatrix, usize)> {
    let n = a.dim();
    let mut triplets = Vec::with_capacity(a.nnz() + region.elements().len() * 128);
    for r in 0..n {
        for (c, v) in a.row_cols(r).iter().zip(a.row_values(r)) {
            triplets.push((r, *c, *v));
        }
    }
    for &e in region.elements() {
        let ea = aux.element(e);
        let s = ea.signed_gram();
        let pairs = coupling(e);
        // (S Z)_a[node] = sum_b S[a][b] z_b[node]
        let sz: Vec<Vec<f64>> = (0..l)
            .map(|aa| {
                pairs
                    .iter()
                    .map(|&(_, node)| (0..l).map(|bb| s[aa * l + bb] * ea.z_row(bb)[node]).sum())
                    .collect()
            })
            .collect();
        for &(r, n1) in &pairs {
            for (p2, &(c, _)) in pairs.iter().enumerate() {
                let v: f64 = (0..l).map(|aa| ea.z_row(aa)[n1] * sz[aa][p2]).sum();
                triplets.push((r, c, v));
            }
        }
    }
    Ok((SparseSymMatrix::from_triplets(n, triplets, Definiteness::Indefinite)?, n))
}

/// Builds the `l*` basis functions of element `i` on `m` layers.
pub fn build_element(
    g: &GridHierarchy,
    field: &CoefficientField,
    aux: &AuxSpace,
    i: usize,
    layers: usize,
    form: LocalForm,
    cache: &SymbolicCache,
) -> Result<ElementBasis> {
    let region = g.oversample(i, layers);
    let wrap = |source: Error, j: usize| Error::LocalSolve { element: i, eigen: j, layers, source: Box::new(source) };
    let sys = local_system(g, field, aux, i, &region, form).map_err(|e| wrap(e, 0))?;
    let l = aux.l_star();
    let n = sys.matrix.dim();
    let analysis = cache.analysis(&sys.matrix).map_err(|e| wrap(e, 0))?;
    let f = factor_auto_with(&sys.matrix, &analysis).map_err(|e| wrap(e, 0))?;
    let mut x = sys.rhs;
    f.solve_many_in_place(&mut x, l).map_err(|e| wrap(e, 0))?;
    let mut values = Vec::with_capacity(l * sys.n_interior);
    for j in 0..l {
        let col = &x[j * n..j * n + sys.n_interior];
        if let Some(k) = col.iter().position(|v| !v.is_finite()) {
            return Err(wrap(Error::Singular { pivot: Some(k) }, j));
        }
        values.extend_from_slice(col);
    }
    Ok(ElementBasis { block: region.block(), values })
}

/// Basis function `(i, j)` on `m` layers as a vector over every fine node.
pub fn build_basis(
    g: &GridHierarchy,
    field: &CoefficientField,
    aux: &AuxSpace,
    i: usize,
    j: usize,
    layers: usize,
) -> Result<Vec<f64>> {
    if j >= aux.l_star() {
        return Err(Error::Config(format!("eigenfunction {j} not in auxiliary space of size {}", aux.l_star())));
    }
    let eb = build_element(g, field, aux, i, layers, LocalForm::Augmented, &SymbolicCache::new())?;
    Ok(element_on_fine(g, &eb, aux.l_star()).swap_remove(j))
}

/// Every basis function of the multiscale space, parallel over elements.
pub fn build_all(
    g: &GridHierarchy,
    field: &CoefficientField,
    aux: &AuxSpace,
    layers: usize,
) -> Result<MsBasisSet> {
    build_all_with(g, field, aux, layers, LocalForm::Augmented)
}

pub fn build_all_with(
    g: &GridHierarchy,
    field: &CoefficientField,
    aux: &AuxSpace,
    layers: usize,
    form: LocalForm,
) -> Result<MsBasisSet> {
    field.check_grid(g)?;
    if aux.n_elem() != g.n_elem() {
        return Err(Error::DimensionMismatch { expected: g.n_elem(), actual: aux.n_elem() });
    }
    let cache = SymbolicCache::new();
    let elements = (0..g.n_elem())
        .into_par_iter()
        .map(|i| build_element(g, field, aux, i, layers, form, &cache))
        .collect::<Result<Vec<_>>>()?;
    log::debug!("built {} bases on {} layers, {} symbolic analyses", elements.len() * aux.l_star(), layers, cache.len());
    Ok(MsBasisSet {
        fine_n: g.fine_n(),
        coarse_n: g.coarse_n(),
        l_star: aux.l_star(),
        layers,
        provenance: provenance(g, field, aux.l_star(), layers),
        elements,
    })
}

/// One row of a localization study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub eigen: usize,
    pub layers: usize,
    pub rel_energy: f64,
    pub rel_l2: f64,
}

fn element_on_fine(g: &GridHierarchy, eb: &ElementBasis, l: usize) -> Vec<Vec<f64>> {
    let r = interior_rect(g, eb.block);
    let n = r.len();
    (0..l)
        .map(|j| {
            let mut out = vec![0.0; g.n_nodes()];
            for ly in 0..r.ny {
                let row = g.node_index(r.x0, r.y0 + ly);
                out[row..row + r.nx].copy_from_slice(&eb.values[j * n + ly * r.nx..j * n + (ly + 1) * r.nx]);
            }
            out
        })
        .collect()
}

/// Relative differences between every `phi_{i,j}` on each of `layer_list`
/// and on the reference layer count, ordered by eigenfunction then layers.
pub fn decay_study(
    g: &GridHierarchy,
    field: &CoefficientField,
    aux: &AuxSpace,
    i: usize,
    layer_list: &[usize],
    m_ref: usize,
) -> Result<Vec<DecayRow>> {
    if let Some(&m) = layer_list.iter().find(|&&m| m > m_ref) {
        return Err(Error::Config(format!("layer count {m} exceeds the reference {m_ref}")));
    }
    if i >= g.n_elem() {
        return Err(Error::Config(format!("element {i} outside a mesh of {} elements", g.n_elem())));
    }
    let l = aux.l_star();
    let norms = Norms::new(g, field)?;
    let cache = SymbolicCache::new();
    let build = |m: usize| -> Result<Vec<Vec<f64>>> {
        let eb = build_element(g, field, aux, i, m, LocalForm::Augmented, &cache)?;
        Ok(element_on_fine(g, &eb, l))
    };
    let reference = build(m_ref)?;
    let per_layer = layer_list.iter().map(|&m| build(m)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(l * layer_list.len());
    for (j, rf) in reference.iter().enumerate() {
        let (re, rl) = (norms.energy(rf), norms.l2(rf));
        for (phis, &m) in per_layer.iter().zip(layer_list) {
            let d: Vec<f64> = phis[j].iter().zip(rf).map(|(a, b)| a - b).collect();
            rows.push(DecayRow { eigen: j, layers: m, rel_energy: norms.energy(&d) / re, rel_l2: norms.l2(&d) / rl });
        }
    }
    Ok(rows)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

/// Writes the basis set in the little-endian sparse cache format.
pub fn write_cache<W: Write>(g: &GridHierarchy, set: &MsBasisSet, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&set.provenance)?;
    put_u64(&mut w, set.n_elem() as u64)?;
    put_u64(&mut w, set.l_star as u64)?;
    put_u64(&mut w, set.layers as u64)?;
    for i in 0..set.n_elem() {
        let r = set.support(g, i);
        for j in 0..set.l_star {
            let v = set.values(i, j);
            put_u64(&mut w, i as u64)?;
            put_u64(&mut w, j as u64)?;
            put_u64(&mut w, v.len() as u64)?;
            for ly in 0..r.ny {
                for lx in 0..r.nx {
                    put_u64(&mut w, g.node_index(r.x0 + lx, r.y0 + ly) as u64)?;
                    w.write_all(&v[ly * r.nx + lx].to_bits().to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_cache(g: &GridHierarchy, set: &MsBasisSet, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_cache(g, set, std::fs::File::create(&tmp)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a cached basis set, rejecting it unless its provenance matches.
pub fn read_cache<R: Read>(
    g: &GridHierarchy,
    expected: &[u8; 32],
    r: R,
    path: &Path,
) -> Result<MsBasisSet> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut r = BufReader::new(r);
    let mut u64buf = [0u8; 8];
    let mut get_u64 = |r: &mut BufReader<R>| -> Result<u64> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != CACHE_VERSION {
        return Err(bad(format!("unsupported version {}", u32::from_le_bytes(ver))));
    }
    let mut prov = [0u8; 32];
    r.read_exact(&mut prov)?;
    if &prov != expected {
        return Err(Error::Provenance { expected: hex(expected), actual: hex(&prov) });
    }
    let n_elem = get_u64(&mut r)? as usize;
    let l_star = get_u64(&mut r)? as usize;
    let layers = get_u64(&mut r)? as usize;
    if n_elem != g.n_elem() || l_star == 0 {
        return Err(bad(format!("header describes {n_elem} elements and l*={l_star}")));
    }
    let mut elements = Vec::with_capacity(n_elem);
    for i in 0..n_elem {
        let region = g.oversample(i, layers);
        let rect = interior_rect(g, region.block());
        let mut values = Vec::with_capacity(l_star * rect.len());
        for j in 0..l_star {
            let (ri, rj, nnz) = (get_u64(&mut r)?, get_u64(&mut r)?, get_u64(&mut r)? as usize);
            if ri as usize != i || rj as usize != j || nnz != rect.len() {
                return Err(bad(format!("record ({ri}, {rj}) with {nnz} entries out of place")));
            }
            for k in 0..nnz {
                let node = get_u64(&mut r)? as usize;
                let (lx, ly) = (k % rect.nx, k / rect.nx);
                if node != g.node_index(rect.x0 + lx, rect.y0 + ly) {
                    return Err(bad(format!("record ({i}, {j}) has node {node} outside its support")));
                }
                values.push(f64::from_bits(get_u64(&mut r)?));
            }
        }
        elements.push(ElementBasis { block: region.block(), values });
    }
    Ok(MsBasisSet { fine_n: g.fine_n(), coarse_n: g.coarse_n(), l_star, layers, provenance: prov, elements })
}

pub fn load_cache(g: &GridHierarchy, expected: &[u8; 32], path: &Path) -> Result<MsBasisSet> {
    read_cache(g, expected, std::fs::File::open(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxspace::build_aux_space;
    use crate::coeff::{flat_interface, periodic_square};

    fn setup() -> (GridHierarchy, CoefficientField, AuxSpace) {
        let g = GridHierarchy::new(32, 4).unwrap();
        let f = periodic_square(&g, 4, 1.0, 0.1).unwrap();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        (g, f, aux)
    }

    #[test]
    fn support_and_boundary() {
        let (g, f, aux) = setup();
        let set = build_all(&g, &f, &aux, 1).unwrap();
        assert_eq!(set.n_basis(), 48);
        for i in 0..g.n_elem() {
            let region = g.oversample(i, 1);
            for j in 0..3 {
                let phi = set.to_fine(&g, i, j);
                for (n, v) in phi.iter().enumerate() {
                    if !region.interior_nodes().contains(&n) {
                        assert_eq!(*v, 0.0);
                    }
                }
                assert!(phi.iter().any(|v| v.abs() > 0.0));
            }
        }
    }

    #[test]
    fn augmented_matches_direct() {
        for (g, f) in [
            {
                let g = GridHierarchy::new(24, 4).unwrap();
                let f = periodic_square(&g, 2, 1.0, 0.1).unwrap();
                (g, f)
            },
            {
                // straddling elements: Gram matrices are not +-identity
                let g = GridHierarchy::new(24, 4).unwrap();
                let f = flat_interface(&g, 0.45, 1.0, 1.3).unwrap().0;
                (g, f)
            },
        ] {
            let aux = build_aux_space(&g, &f, 3).unwrap();
            for m in [1, 2] {
                let a = build_all_with(&g, &f, &aux, m, LocalForm::Augmented).unwrap();
                let d = build_all_with(&g, &f, &aux, m, LocalForm::Direct).unwrap();
                for (ea, ed) in a.elements.iter().zip(&d.elements) {
                    let scale = ed.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                    for (x, y) in ea.values.iter().zip(&ed.values) {
                        assert!((x - y).abs() <= 1e-9 * scale, "{x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn saturation_identity() {
        let (g, f, aux) = setup();
        let a = build_basis(&g, &f, &aux, 5, 1, 4).unwrap();
        let b = build_basis(&g, &f, &aux, 5, 1, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decay_is_monotone() {
        let g = GridHierarchy::new(48, 8).unwrap();
        let f = periodic_square(&g, 4, 1.0, 0.1).unwrap();
        let aux = build_aux_space(&g, &f, 3).unwrap();
        let rows = decay_study(&g, &f, &aux, 18, &[1, 2, 3, 4], 5).unwrap();
        assert_eq!(rows.len(), 12);
        for j in 0..3 {
            let r: Vec<_> = rows.iter().filter(|r| r.eigen == j).collect();
            assert!(r.windows(2).all(|w| w[1].rel_energy < w[0].rel_energy), "{rows:?}");
        }
        let same = decay_study(&g, &f, &aux, 18, &[5], 5).unwrap();
        assert!(same.iter().all(|r| r.rel_energy == 0.0));
        assert!(decay_study(&g, &f, &aux, 18, &[6], 5).is_err());
    }

    #[test]
    fn linear_in_eigenvector_scaling() {
        // scaling sigma scales both the system and the penalty; the basis is
        // unchanged because psi rescales inversely with the mass weight
        let (g, f, aux) = setup();
        let f2 = f.scaled(4.0).unwrap();
        let aux2 = build_aux_space(&g, &f2, 3).unwrap();
        let a = build_basis(&g, &f, &aux, 6, 2, 1).unwrap();
        let b = build_basis(&g, &f2, &aux2, 6, 2, 1).unwrap();
        let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - 2.0 * y).abs() <= 1e-9 * scale, "{x} {y}");
        }
    }

    #[test]
    fn cache_round_trip_and_provenance() {
        let (g, f, aux) = setup();
        let set = build_all(&g, &f, &aux, 1).unwrap();
        let mut buf = Vec::new();
        write_cache(&g, &set, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CEMB");
        let back = read_cache(&g, &set.provenance, buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, set);
        let other = provenance(&g, &f.scaled(2.0).unwrap(), 3, 1);
        assert!(matches!(
            read_cache(&g, &other, buf.as_slice(), Path::new("mem")),
            Err(Error::Provenance { .. })
        ));
        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(read_cache(&g, &set.provenance, corrupt.as_slice(), Path::new("mem")).is_err());
    }

    #[test]
    fn deterministic_rebuild() {
        let (g, f, aux) = setup();
        let a = build_all(&g, &f, &aux, 2).unwrap();
        let b = build_all(&g, &f, &aux, 2).unwrap();
        for (x, y) in a.elements.iter().zip(&b.elements) {
            assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn basis_gram_is_nondegenerate() {
        let (g, f, aux) = setup();
        let set = build_all(&g, &f, &aux, 1).unwrap();
        let norms = Norms::new(&g, &f).unwrap();
        let phis: Vec<Vec<f64>> = (0..set.n_basis()).map(|p| {
            let (i, j) = set.split_index(p);
            set.to_fine(&g, i, j)
        }).collect();
        let n = phis.len();
        let gram = Mat::from_fn(n, n, |a, b| norms.energy_inner(&phis[a], &phis[b]));
        let ev = gram.self_adjoint_eigenvalues(Side::Lower).unwrap();
        assert!(ev[0] > 1e-12 * ev[n - 1], "{} {}", ev[0], ev[n - 1]);
    }
}
