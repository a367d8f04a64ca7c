use nonloc_homog::cell::{solve_cell_problem, CellSolver};
use nonloc_homog::effective::effective_matrix;
use nonloc_homog::fiber::{assemble_truncated, grid_form, FiberModel};
use nonloc_homog::grid::Grid;
use nonloc_homog::harness::constants_bundle;
use nonloc_homog::kernels::{KernelSpec, MuSpec};
use nonloc_homog::linalg::{c, hermitian_defect, hermitian_eigenvalues, operator_norm};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn box_cosine() -> &'static FiberModel {
    static MODEL: OnceLock<FiberModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        FiberModel::new(&k, &MuSpec::cosine_product(1, 1.0, 0.5).unwrap(), Grid::new(1, 32).unwrap()).unwrap()
    })
}

fn gaussian_2d() -> &'static FiberModel {
    static MODEL: OnceLock<FiberModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let k = KernelSpec::gaussian(2, 0.25, 1.0).unwrap();
        FiberModel::new(&k, &MuSpec::cosine_product(2, 1.0, 0.4).unwrap(), Grid::new(2, 8).unwrap()).unwrap()
    })
}

fn vector(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
}

fn norm2(u: &[Complex64], h: f64) -> f64 {
    h * u.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fibers_are_hermitian(xi in -PI..PI) {
        let op = box_cosine().assemble(&[xi]).unwrap();
        prop_assert!(hermitian_defect(&op.matrix) <= 1e-15);
    }

    #[test]
    fn sandwich_between_mu_bounds(xi in -PI..PI, u in vector(32)) {
        let model = box_cosine();
        let h = model.grid().weight();
        let full = grid_form(&model.assemble(&[xi]).unwrap().matrix, &u, h).re;
        let unit = grid_form(&model.assemble_mu_one(&[xi]).unwrap().matrix, &u, h).re;
        let tol = 1e-13 * norm2(&u, h);
        prop_assert!(full >= 0.5 * unit - tol, "{} < {}", full, 0.5 * unit);
        prop_assert!(full <= 1.5 * unit + tol, "{} > {}", full, 1.5 * unit);
    }

    #[test]
    fn coercivity_in_quasimomentum(xi in -PI..PI) {
        let model = box_cosine();
        let k = constants_bundle(model.kernel(), model.mu()).unwrap();
        let lowest = hermitian_eigenvalues(&model.assemble(&[xi]).unwrap().matrix)[0];
        prop_assert!(lowest >= k.coercivity() * xi * xi - 1e-12);
    }

    #[test]
    fn coercivity_in_two_dimensions(x in -PI..PI, y in -PI..PI) {
        let model = gaussian_2d();
        let k = constants_bundle(model.kernel(), model.mu()).unwrap();
        let lowest = hermitian_eigenvalues(&model.assemble(&[x, y]).unwrap().matrix)[0];
        prop_assert!(lowest >= k.coercivity() * (x * x + y * y) - 1e-12);
    }

    #[test]
    fn lipschitz_in_quasimomentum(xi in -PI..PI, eta in -PI..PI) {
        let model = box_cosine();
        let diff = model.increment(&[xi]).unwrap() - model.increment(&[eta]).unwrap();
        prop_assert!(operator_norm(&diff).unwrap() <= 1.5 * 0.25 * (xi - eta).abs() + 1e-13);
    }

    #[test]
    fn truncation_is_monotone(low in 0.05f64..2.0, gap in 0.0f64..2.0, u in vector(32)) {
        let model = box_cosine();
        let h = model.grid().weight();
        let a = grid_form(&assemble_truncated(model, low).unwrap().matrix, &u, h).re;
        let b = grid_form(&assemble_truncated(model, low + gap).unwrap().matrix, &u, h).re;
        prop_assert!(a <= b + 1e-13 * norm2(&u, h));
    }

    #[test]
    fn mu_scaling_is_exact(scale in 0.1f64..10.0, xi in -PI..PI) {
        let model = box_cosine();
        let scaled = FiberModel::new(model.kernel(), &model.mu().scaled(scale).unwrap(), *model.grid()).unwrap();
        let a = model.assemble(&[xi]).unwrap().matrix * c(scale, 0.0);
        let b = scaled.assemble(&[xi]).unwrap().matrix;
        prop_assert!(operator_norm(&(a - b)).unwrap() <= 1e-14 * scale);
    }
}

#[test]
fn constants_are_in_the_kernel_at_zero() {
    for model in [box_cosine(), gaussian_2d()] {
        let op = model.assemble(&vec![0.0; model.grid().dim()]).unwrap();
        let n = op.matrix.nrows();
        let ones = nalgebra::DVector::from_element(n, c(1.0, 0.0));
        assert!((&op.matrix * ones).norm() < 1e-13);
    }
}

#[test]
fn spectral_floor_at_zero() {
    for model in [box_cosine(), gaussian_2d()] {
        let k = constants_bundle(model.kernel(), model.mu()).unwrap();
        let values = hermitian_eigenvalues(&model.assemble(&vec![0.0; model.grid().dim()]).unwrap().matrix);
        assert!(values[1] >= k.d0_bound, "{} < {}", values[1], k.d0_bound);
    }
}

#[test]
fn effective_matrix_scales_with_mu() {
    let model = box_cosine();
    let cell = solve_cell_problem(model).unwrap();
    let g = effective_matrix(model, &cell).unwrap();
    for scale in [0.5, 3.0] {
        let scaled = FiberModel::new(model.kernel(), &model.mu().scaled(scale).unwrap(), *model.grid()).unwrap();
        let cell_s = solve_cell_problem(&scaled).unwrap();
        let g_s = effective_matrix(&scaled, &cell_s).unwrap();
        assert!((g_s.g0[(0, 0)] - scale * g.g0[(0, 0)]).abs() <= 1e-13 * scale);
        let dv = cell.v[0].iter().zip(&cell_s.v[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dv <= 1e-13);
    }
}

#[test]
fn mean_zero_is_preserved() {
    for model in [box_cosine(), gaussian_2d()] {
        let cell = solve_cell_problem(model).unwrap();
        for v in &cell.v {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let norm = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
            assert!(mean.abs() <= 1e-10 * norm.max(f64::MIN_POSITIVE));
        }
    }
}

#[test]
fn truncated_cell_problems_converge() {
    let k = KernelSpec::gaussian(1, 0.1, 1.0).unwrap();
    let model = FiberModel::new(&k, &MuSpec::cosine_product(1, 1.0, 0.5).unwrap(), Grid::new(1, 64).unwrap()).unwrap();
    let cell = solve_cell_problem(&model).unwrap();
    let peak = model.kernel_at_zero().iter().copied().fold(0.0, f64::max);
    let error = |level: f64| {
        let op = assemble_truncated(&model, level).unwrap();
        let real = op.matrix.map(|z| z.re);
        let n = real.nrows();
        let shifted = &real + nalgebra::DMatrix::from_element(n, n, 1.0 / n as f64);
        let mean = cell.w[0].iter().sum::<f64>() / n as f64;
        let rhs = nalgebra::DVector::from_iterator(n, cell.w[0].iter().map(|x| x - mean));
        let v = shifted.cholesky().unwrap().solve(&rhs);
        v.iter().zip(&cell.v[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let errors: Vec<f64> = [0.25, 0.5, 0.75, 1.0].iter().map(|f| error(f * peak)).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[3] < 1e-12, "{errors:?}");
}

#[test]
fn cell_solver_reduced_resolvent_annihilates_constants() {
    let model = box_cosine();
    let solver = CellSolver::new(model).unwrap();
    let r = solver.reduced_resolvent();
    let ones = nalgebra::DVector::from_element(32, 1.0);
    assert!((&r * ones).norm() < 1e-12);
}
