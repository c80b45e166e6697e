//! Direct factorizations of sparse symmetric systems, definite or not.
//!
//! `Method::Auto` first tries an unpivoted sparse LDL^T with a minimum degree
//! ordering, which also yields the inertia. When a pivot is tiny or the
//! factor fails a probe solve it falls back to a sparse LU with partial
//! pivoting and a column ordering.

use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, supernodal, LdltRef, SymbolicCholesky,
    SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use dyn_stack::{MemBuffer, MemStack};
use faer::{Conj, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::assembly::SparseSymMatrix;
use crate::error::{Error, Result};

/// Pivots below this fraction of the largest matrix entry count as zero.
pub const PIVOT_TOL: f64 = 1e-14;
/// Relative residual a probe solve must reach for a factor to be accepted.
const PROBE_RESIDUAL: f64 = 1e-9;
/// Relative forward error of the probe beyond which a matrix is singular.
const PROBE_FORWARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    Ldlt,
    Lu,
}

/// Counts of positive, negative and zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Reusable column ordering and elimination structure for one sparsity
/// pattern.
#[derive(Debug, Clone)]
pub struct LuAnalysis {
    n: usize,
    nnz: usize,
    symbolic: SymbolicLu<usize>,
}

impl LuAnalysis {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        let symbolic = SymbolicLu::try_new(symbolic_view(a))
            .map_err(|e| Error::Factorization(format!("symbolic lu: {e:?}")))?;
        Ok(Self { n: a.dim(), nnz: a.nnz(), symbolic })
    }

    fn matches(&self, a: &SparseSymMatrix) -> bool {
        self.n == a.dim() && self.nnz == a.nnz()
    }
}

/// Reusable fill-reducing ordering and elimination tree for unpivoted
/// LDL^T on one sparsity pattern.
#[derive(Debug, Clone)]
pub struct LdltAnalysis {
    n: usize,
    nnz: usize,
    symbolic: Arc<SymbolicCholesky<usize>>,
}

impl LdltAnalysis {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        let symbolic = factorize_symbolic_cholesky(
            symbolic_view(a),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| Error::Factorization(format!("symbolic ldlt: {e:?}")))?;
        Ok(Self { n: a.dim(), nnz: a.nnz(), symbolic: Arc::new(symbolic) })
    }

    fn matches(&self, a: &SparseSymMatrix) -> bool {
        self.n == a.dim() && self.nnz == a.nnz()
    }
}

enum Inner {
    Empty,
    Ldlt { symbolic: Arc<SymbolicCholesky<usize>>, values: Vec<f64> },
    Lu(Lu<usize, f64>),
}

/// An immutable factorization; solves may run concurrently.
pub struct Factorization {
    n: usize,
    inner: Inner,
    inertia: Option<Inertia>,
    matrix: SparseSymMatrix,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.inner {
            Inner::Empty => "empty",
            Inner::Ldlt { .. } => "ldlt",
            Inner::Lu(_) => "lu",
        };
        f.debug_struct("Factorization")
            .field("n", &self.n)
            .field("kind", &kind)
            .field("inertia", &self.inertia)
            .finish()
    }
}

fn symbolic_view(a: &SparseSymMatrix) -> SymbolicSparseColMatRef<'_, usize> {
    // full symmetric storage: the CSR arrays are also valid CSC arrays
    SymbolicSparseColMatRef::new_checked(a.dim(), a.dim(), a.row_ptr(), None, a.col_idx())
}

fn matrix_view(a: &SparseSymMatrix) -> SparseColMatRef<'_, usize, f64> {
    SparseColMatRef::new(symbolic_view(a), a.values())
}

/// Factors `a` with the automatic strategy.
pub fn factor(a: &SparseSymMatrix) -> Result<Factorization> {
    factor_with(a, Method::Auto)
}

pub fn factor_with(a: &SparseSymMatrix, method: Method) -> Result<Factorization> {
    if a.dim() == 0 {
        return Ok(Factorization {
            n: 0,
            inner: Inner::Empty,
            inertia: Some(Inertia { positive: 0, negative: 0, zero: 0 }),
            matrix: a.clone(),
        });
    }
    match method {
        Method::Ldlt => factor_ldlt(a),
        Method::Lu => factor_lu(a, None),
        Method::Auto => match factor_ldlt(a) {
            Ok(f) => Ok(f),
            Err(Error::Singular { .. } | Error::Factorization(_)) => factor_lu(a, None),
            Err(e) => Err(e),
        },
    }
}

/// LU factorization reusing a previous analysis of the same pattern.
pub fn factor_lu_with(a: &SparseSymMatrix, analysis: &LuAnalysis) -> Result<Factorization> {
    if !analysis.matches(a) {
        return Err(Error::DimensionMismatch { expected: analysis.nnz, actual: a.nnz() });
    }
    factor_lu(a, Some(analysis))
}

/// Automatic strategy reusing an LDL^T analysis of the same pattern; the LU
/// fallback is analysed afresh.
pub fn factor_auto_with(a: &SparseSymMatrix, analysis: &LdltAnalysis) -> Result<Factorization> {
    if !analysis.matches(a) {
        return Err(Error::DimensionMismatch { expected: analysis.nnz, actual: a.nnz() });
    }
    match factor_ldlt_from(a, analysis.symbolic.clone()) {
        Ok(f) => Ok(f),
        Err(Error::Singular { .. } | Error::Factorization(_)) => factor_lu(a, None),
        Err(e) => Err(e),
    }
}

fn factor_ldlt(a: &SparseSymMatrix) -> Result<Factorization> {
    factor_ldlt_from(a, LdltAnalysis::new(a)?.symbolic)
}

fn factor_ldlt_from(a: &SparseSymMatrix, symbolic: Arc<SymbolicCholesky<usize>>) -> Result<Factorization> {
    let n = a.dim();
    let mut values = vec![0.0; symbolic.len_val()];
    let par = Par::Seq;
    let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(par, Default::default()));
    symbolic
        .factorize_numeric_ldlt(
            &mut values,
            matrix_view(a),
            Side::Lower,
            Default::default(),
            par,
            MemStack::new(&mut mem),
            Default::default(),
        )
        .map_err(|e| match e {
            faer::linalg::cholesky::ldlt::factor::LdltError::ZeroPivot { index } => {
                Error::Singular { pivot: Some(index) }
            }
        })?;

    let d = ldlt_diagonal(&symbolic, &values);
    let tol = PIVOT_TOL * a.max_abs();
    if let Some(k) = d.iter().position(|v| !v.is_finite() || v.abs() < tol) {
        return Err(Error::Singular { pivot: Some(k) });
    }
    let positive = d.iter().filter(|v| **v > 0.0).count();
    let inertia = Inertia { positive, negative: n - positive, zero: 0 };
    let f = Factorization {
        n,
        inner: Inner::Ldlt { symbolic, values },
        inertia: Some(inertia),
        matrix: a.clone(),
    };
    f.probe()?;
    Ok(f)
}

/// Diagonal of `D` in elimination order.
fn ldlt_diagonal(symbolic: &SymbolicCholesky<usize>, values: &[f64]) -> Vec<f64> {
    match symbolic.raw() {
        SymbolicCholeskyRaw::Simplicial(s) => {
            let col_ptr = s.col_ptr();
            (0..s.nrows()).map(|j| values[col_ptr[j]]).collect()
        }
        SymbolicCholeskyRaw::Supernodal(s) => {
            let f = supernodal::SupernodalLdltRef::new(s, values);
            let mut d = Vec::with_capacity(s.nrows());
            for k in 0..s.n_supernodes() {
                let m = f.supernode(k).val();
                for j in 0..m.ncols() {
                    d.push(m[(j, j)]);
                }
            }
            d
        }
    }
}

fn factor_lu(a: &SparseSymMatrix, analysis: Option<&LuAnalysis>) -> Result<Factorization> {
    let symbolic = match analysis {
        Some(an) => an.symbolic.clone(),
        None => LuAnalysis::new(a)?.symbolic,
    };
    let lu = Lu::try_new_with_symbolic(symbolic, matrix_view(a))
        .map_err(|_| Error::Singular { pivot: None })?;
    let f = Factorization { n: a.dim(), inner: Inner::Lu(lu), inertia: None, matrix: a.clone() };
    f.probe()?;
    Ok(f)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Pivot sign counts, when the factorization exposes them.
    pub fn inertia(&self) -> Option<Inertia> {
        self.inertia
    }

    pub fn is_ldlt(&self) -> bool {
        matches!(self.inner, Inner::Ldlt { .. })
    }

    /// Solves against a random right-hand side with known solution.
    fn probe(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let x: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = self.matrix.mul_vec(&x);
        let bn = norm(&b);
        if bn == 0.0 {
            return Err(Error::Singular { pivot: None });
        }
        let mut y = b.clone();
        self.raw_solve_in_place(&mut y, 1);
        let r = residual(&self.matrix, &y, &b);
        let fwd = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm(&x);
        if !(r <= PROBE_RESIDUAL * bn) || !(fwd <= PROBE_FORWARD) {
            log::debug!("probe rejected factor: residual {:e}, forward {:e}", r / bn, fwd);
            return Err(Error::Singular { pivot: None });
        }
        Ok(())
    }

    /// Column-major block of `ncols` right-hand sides, overwritten in place.
    fn raw_solve_in_place(&self, rhs: &mut [f64], ncols: usize) {
        let n = self.n;
        if n == 0 {
            return;
        }
        let mut view = MatMut::from_column_major_slice_mut(rhs, n, ncols);
        match &self.inner {
            Inner::Empty => {}
            Inner::Ldlt { symbolic, values } => {
                let par = Par::Seq;
                let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(ncols, par));
                LdltRef::new(symbolic, values).solve_in_place_with_conj(
                    Conj::No,
                    view.as_mut(),
                    par,
                    MemStack::new(&mut mem),
                );
            }
            Inner::Lu(lu) => lu.solve_in_place(view.as_mut()),
        }
    }

    /// Solves `A x = b`, refining once if the residual is not yet at
    /// rounding level.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_many_in_place(&mut x, 1)?;
        Ok(x)
    }

    /// Column-major block of right-hand sides, overwritten by the solutions.
    pub fn solve_many_in_place(&self, rhs: &mut [f64], ncols: usize) -> Result<()> {
        if rhs.len() != self.n * ncols {
            return Err(Error::DimensionMismatch { expected: self.n * ncols, actual: rhs.len() });
        }
        if self.n == 0 {
            return Ok(());
        }
        let b = rhs.to_vec();
        self.raw_solve_in_place(rhs, ncols);
        let mut corr = vec![0.0; rhs.len()];
        let mut refine = false;
        for j in 0..ncols {
            let cols = j * self.n..(j + 1) * self.n;
            let ax = self.matrix.mul_vec(&rhs[cols.clone()]);
            let bj = &b[cols.clone()];
            let r: Vec<f64> = bj.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if norm(&r) > 1e-13 * norm(bj) {
                refine = true;
            }
            corr[cols].copy_from_slice(&r);
        }
        if refine {
            self.raw_solve_in_place(&mut corr, ncols);
            for (x, c) in rhs.iter_mut().zip(&corr) {
                *x += c;
            }
        }
        Ok(())
    }
}

/// Dense LU with partial pivoting for small symmetric (possibly indefinite)
/// systems stored column-major.
pub struct DenseFactorization {
    n: usize,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

impl DenseFactorization {
    pub fn new(n: usize, a: &[f64]) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, actual: a.len() });
        }
        let m = MatRef::from_column_major_slice(a, n, n);
        let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let lu = m.partial_piv_lu();
        let u = lu.U();
        for k in 0..n {
            if !(u[(k, k)].abs() >= PIVOT_TOL * scale) || scale == 0.0 {
                return Err(Error::Singular { pivot: Some(k) });
            }
        }
        Ok(Self { n, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: b.len() });
        }
        let mut x = b.to_vec();
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        Ok(x)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SparseSymMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}
