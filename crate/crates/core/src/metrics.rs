//! Weighted energy and L2 norms, and relative error indices.

use serde::Serialize;

use crate::assembly::{assemble_box, assemble_global, Operator, SparseSymMatrix, Weight};
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, Region};

/// Global norm matrices on every fine node, assembled once.
#[derive(Debug, Clone)]
pub struct Norms {
    energy: SparseSymMatrix,
    mass: SparseSymMatrix,
}

impl Norms {
    pub fn new(g: &GridHierarchy, field: &CoefficientField) -> Result<Self> {
        Ok(Self {
            energy: assemble_global(g, Some(field), Weight::AbsSigma, Operator::Stiffness)?,
            mass: assemble_global(g, None, Weight::Unit, Operator::Mass)?,
        })
    }

    /// `sqrt(v^T A_|sigma| v)`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        self.energy.form(v, v).max(0.0).sqrt()
    }

    pub fn energy_inner(&self, v: &[f64], w: &[f64]) -> f64 {
        self.energy.form(v, w)
    }

    /// `sqrt(v^T M v)` with the consistent unit mass.
    pub fn l2(&self, v: &[f64]) -> f64 {
        self.mass.form(v, v).max(0.0).sqrt()
    }

    pub fn energy_matrix(&self) -> &SparseSymMatrix {
        &self.energy
    }

    pub fn mass_matrix(&self) -> &SparseSymMatrix {
        &self.mass
    }

    /// Relative errors of `u_num` against `u_ref`.
    pub fn error_report(&self, u_ref: &[f64], u_num: &[f64]) -> Result<ErrorReport> {
        if u_ref.len() != u_num.len() {
            return Err(Error::DimensionMismatch { expected: u_ref.len(), actual: u_num.len() });
        }
        let e: Vec<f64> = u_ref.iter().zip(u_num).map(|(a, b)| a - b).collect();
        let (ref_energy, ref_l2) = (self.energy(u_ref), self.l2(u_ref));
        if !(ref_energy > 0.0 && ref_l2 > 0.0) {
            return Err(Error::ZeroReference);
        }
        let (err_energy, err_l2) = (self.energy(&e), self.l2(&e));
        let report = ErrorReport {
            rel_energy: err_energy / ref_energy,
            rel_l2: err_l2 / ref_l2,
            ref_energy,
            ref_l2,
            err_energy,
            err_l2,
        };
        if report.rel_energy.is_nan() || report.rel_l2.is_nan() {
            return Err(Error::ZeroReference);
        }
        Ok(report)
    }
}

/// Relative and absolute errors of one numerical solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rel_energy: f64,
    pub rel_l2: f64,
    pub ref_energy: f64,
    pub ref_l2: f64,
    pub err_energy: f64,
    pub err_l2: f64,
}

/// Energy norm of a fine-node vector over a region, or the whole domain.
pub fn energy_norm(
    g: &GridHierarchy,
    field: &CoefficientField,
    v: &[f64],
    region: Option<&Region>,
) -> Result<f64> {
    check_len(g, v)?;
    let nb = region.map_or_else(|| g.domain_box(), |r| r.node_box());
    let a = assemble_box(g, Some(field), Weight::AbsSigma, Operator::Stiffness, &nb, None)?;
    let local: Vec<f64> = (0..nb.n_nodes())
        .map(|k| {
            let (ix, iy) = nb.local_ij(k);
            v[g.node_index(ix, iy)]
        })
        .collect();
    Ok(a.form(&local, &local).max(0.0).sqrt())
}

pub fn l2_norm(g: &GridHierarchy, v: &[f64]) -> Result<f64> {
    check_len(g, v)?;
    let m = assemble_global(g, None, Weight::Unit, Operator::Mass)?;
    Ok(m.form(v, v).max(0.0).sqrt())
}

pub fn error_report(
    g: &GridHierarchy,
    field: &CoefficientField,
    u_ref: &[f64],
    u_num: &[f64],
) -> Result<ErrorReport> {
    check_len(g, u_ref)?;
    Norms::new(g, field)?.error_report(u_ref, u_num)
}

fn check_len(g: &GridHierarchy, v: &[f64]) -> Result<()> {
    if v.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch { expected: g.n_nodes(), actual: v.len() });
    }
    Ok(())
}
