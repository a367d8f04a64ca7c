//! The effective matrix g⁰ of the homogenized operator −div g⁰∇.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cell::CellSolution;
use crate::error::{Error, Result};
use crate::fiber::FiberModel;

/// Relative asymmetry tolerated in g_kl before the cell solve is considered broken.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EffectiveMatrix {
    /// g⁰ = ½ (g_kl).
    pub g0: DMatrix<f64>,
    /// g_kl = (w_kl, 1) − (v_k, w_l) − (v_l, w_k).
    pub gkl_raw: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl EffectiveMatrix {
    pub fn dim(&self) -> usize {
        self.g0.nrows()
    }

    /// Builds the record from a symmetric g⁰ directly.
    pub fn from_g0(g0: DMatrix<f64>) -> Self {
        let min_eigenvalue = min_eigenvalue(&g0);
        Self { gkl_raw: &g0 * 2.0, g0, min_eigenvalue }
    }

    /// Row-major entries of g⁰.
    pub fn g0_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.g0.row(i).iter().copied().collect()).collect()
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn grid_inner(u: &[f64], v: &[f64], h: f64) -> f64 {
    h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

pub fn effective_matrix(model: &FiberModel, cell: &CellSolution) -> Result<EffectiveMatrix> {
    let d = model.grid().dim();
    if cell.dim() != d || cell.v[0].len() != model.grid().len() {
        return Err(Error::DimensionMismatch("cell solution does not match the grid".into()));
    }
    let h = model.grid().weight();
    let g = DMatrix::from_fn(d, d, |k, l| {
        h * cell.wkl[k][l].iter().sum::<f64>()
            - grid_inner(&cell.v[k], &cell.w[l], h)
            - grid_inner(&cell.v[l], &cell.w[k], h)
    });
    let scale = g.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let asymmetry = (0..d)
        .flat_map(|k| (0..d).map(move |l| (k, l)))
        .map(|(k, l)| (g[(k, l)] - g[(l, k)]).abs())
        .fold(0.0, f64::max);
    if asymmetry > SYMMETRY_TOLERANCE * scale {
        return Err(Error::EffectiveAsymmetric(asymmetry / scale));
    }
    let gkl_raw = (&g + g.transpose()) * 0.5;
    let g0 = &gkl_raw * 0.5;
    Ok(EffectiveMatrix { min_eigenvalue: min_eigenvalue(&g0), g0, gkl_raw })
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub min_eigenvalue: f64,
    /// μ₋C(a).
    pub floor: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Compares the smallest eigenvalue of g⁰ with the coercivity floor μ₋C(a),
/// allowing `slack` for discretization error.
pub fn check_positivity(g: &EffectiveMatrix, floor: f64, slack: f64) -> PositivityReport {
    let margin = g.min_eigenvalue - floor;
    PositivityReport {
        min_eigenvalue: g.min_eigenvalue,
        floor,
        margin,
        pass: g.min_eigenvalue > 0.0 && margin >= -slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell_problem;
    use crate::grid::Grid;
    use crate::kernels::{KernelSpec, MuSpec};

    #[test]
    fn box_kernel_with_constant_mu() {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        for mu0 in [1.0, 2.5] {
            let model = FiberModel::new(&k, &MuSpec::constant(1, mu0).unwrap(), Grid::new(1, 32).unwrap()).unwrap();
            let cell = solve_cell_problem(&model).unwrap();
            let g = effective_matrix(&model, &cell).unwrap();
            assert!((g.g0[(0, 0)] - mu0 / 24.0).abs() < 1e-15 * mu0);
            assert!((g.gkl_raw[(0, 0)] - mu0 / 12.0).abs() < 1e-15 * mu0);
        }
    }

    #[test]
    fn positivity_report() {
        let g = EffectiveMatrix::from_g0(DMatrix::from_element(1, 1, 1.0 / 24.0));
        let r = check_positivity(&g, 1.0 / 48.0, 0.0);
        assert!(r.pass && (r.margin - 1.0 / 48.0).abs() < 1e-15);
        let bad = EffectiveMatrix::from_g0(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]));
        assert!(!check_positivity(&bad, 0.0, 0.0).pass);
    }
}
