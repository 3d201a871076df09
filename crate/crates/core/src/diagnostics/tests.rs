use super::*;
use crate::dbm::{matrix_flow_sample, spectrum, EigenIntegrator, SdeConfig};
use crate::ensembles::{linearize, sample_rect_gaussian, svd_initial_data, DataBlock, EnsembleDims};
use crate::freeconv::{classical_locations, FcDensity, Semicircle};
use crate::rng::Seed;
use crate::stats::median;

fn gaussian_init(n: usize, seed: u64) -> (EnsembleDims, InitialData<f64>) {
    let dims = EnsembleDims::square(n).unwrap();
    (dims, svd_initial_data(&sample_rect_gaussian::<f64>(dims, Seed::new(seed)).unwrap()))
}

#[test]
fn partial_stieltjes_examples() {
    let dims = EnsembleDims::square(1).unwrap();
    let s = SpectrumState::from_positive(dims, 0.0, vec![1.0]).unwrap();
    let m = partial_stieltjes(&s, Complex64::new(0.0, 1.0)).unwrap();
    assert!((m - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    assert!(partial_stieltjes(&s, Complex64::new(0.0, 0.0)).is_err());
    let rect = EnsembleDims::new(5, 3).unwrap();
    let init = InitialData::new(vec![0.4, 1.1, 2.0]);
    let s0 = SpectrumState::from_initial(&init, rect).unwrap();
    let z = Complex64::new(0.3, 0.7);
    let a = partial_stieltjes(&s0, z).unwrap();
    let b = solve_mfc(&init, 0.0, z, 1e-14).unwrap();
    assert!((a - b).norm() < 1e-14);
    assert!(a.im > 0.0);
}

#[test]
fn classical_placement_gives_riemann_sum_error() {
    // Eigenvalues at the semicircle quantiles: Λ is the quadrature error of
    // the Stieltjes integral, O(1/(Nη)).
    let n = 400;
    let g = classical_locations(&Semicircle, n).unwrap();
    for eta in [10.0 / n as f64, 0.1, 1.0] {
        for e in [-1.0, 0.0, 0.5] {
            let z = Complex64::new(e, eta);
            let mn = stieltjes_of(&g, z);
            let exact = (-z + (z * z - 4.0).sqrt()) / 2.0;
            let exact = if exact.im > 0.0 { exact } else { (-z - (z * z - 4.0).sqrt()) / 2.0 };
            assert!((mn - exact).norm() * n as f64 * eta <= 10.0);
        }
    }
}

#[test]
fn local_law_improves_with_height() {
    let (dims, init) = gaussian_init(100, 1);
    let x0 = linearize(init.to_block(dims).unwrap());
    let field = FreeConvolutionField::build(init.clone(), 0.1, &[], 1e-4, 1e-12, 0).unwrap();
    let mut ratio = Vec::new();
    for s in 0..50 {
        let st = spectrum(&matrix_flow_sample(&x0, 0.1, Seed::with_stream(2, s)).unwrap()).unwrap();
        let low = local_law_gap(&st, &field, Complex64::new(0.5, 0.1)).unwrap();
        let high = local_law_gap(&st, &field, Complex64::new(0.5, 10.0)).unwrap();
        ratio.push(high / low);
    }
    assert!(median(&ratio) <= 0.1);
}

#[test]
fn rigidity_examples() {
    let g = classical_locations(&Semicircle, 20).unwrap();
    let r = rigidity_scaled(&g, &g, 10, 2..18).unwrap();
    assert!(r.iter().all(|&x| x == 0.0));
    assert!(rigidity_scaled(&g, &g, 10, 5..5).is_err());
    assert!(rigidity_scaled(&g[..19], &g, 10, 0..5).is_err());
    let w = bulk_window(&g, -0.5, 0.5);
    assert!(!w.is_empty() && g[w.clone()].iter().all(|x| x.abs() <= 0.5));
    assert!(g[w.start - 1] < -0.5 && g[w.end] > 0.5);
}

#[test]
fn rigidity_grows_toward_edges() {
    let (dims, init) = gaussian_init(100, 3);
    let t = 0.1;
    let x0 = linearize(init.to_block(dims).unwrap());
    let gam = crate::freeconv::NumericCdf::build(&FcDensity::new(&init, t, 1e-6))
        .unwrap()
        .classical_locations(2 * dims.n());
    let n2 = gam.len();
    let decile = n2 / 10;
    let mut wins = Vec::new();
    for s in 0..50 {
        let st = spectrum(&matrix_flow_sample(&x0, t, Seed::with_stream(4, s)).unwrap()).unwrap();
        let eigs = nontrivial_sorted(&st);
        let edge = rigidity_scaled(&eigs, &gam, dims.n(), n2 - decile..n2).unwrap();
        let center = rigidity_scaled(&eigs, &gam, dims.n(), n2 / 2 - decile / 2..n2 / 2 + decile / 2).unwrap();
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        wins.push(max(&edge) - max(&center));
    }
    assert!(median(&wins) >= 0.0);
}

#[test]
fn sce_residual_examples() {
    let init = InitialData::new(vec![0.5, 1.0, 1.7]);
    let dims = EnsembleDims::new(4, 3).unwrap();
    let s0 = SpectrumState::from_initial(&init, dims).unwrap();
    let z = Complex64::new(0.2, 0.4);
    // t = 0: the residual is |m_N − symmetrized m_V| = 0 for the initial state.
    assert!(sce_residual(&s0, &init, 0.0, z).unwrap() < 1e-15);
    let m = solve_mfc(&init, 0.3, z, 1e-14).unwrap();
    let v = init.singular_values.clone();
    assert!(sce_of(&v, 0.3, z, m).unwrap() < 1e-13);
    let other = SpectrumState::from_positive(dims, 0.0, vec![0.1, 0.2, 0.9]).unwrap();
    let mn = partial_stieltjes(&other, z).unwrap();
    let direct: Complex64 = v.iter().map(|&x| 1.0 / (x - z) + 1.0 / (-x - z)).sum::<Complex64>() / 6.0;
    assert!((sce_residual(&other, &init, 0.0, z).unwrap() - (mn - direct).norm()).abs() < 1e-15);
    assert!(matches!(sce_of(&[1.0], 0.0, Complex64::new(1.0, 1e-16), Complex64::new(0.0, 0.0)), Err(Error::Singular(_))));
}

#[test]
fn resolvent_of_diagonal_block() {
    let v = [0.5, 1.3, 2.1];
    let dims = EnsembleDims::new(5, 3).unwrap();
    let x = linearize(InitialData::new(v.to_vec()).to_block(dims).unwrap());
    let z = Complex64::new(0.4, 0.3);
    let g = resolvent_columns(&x, z).unwrap();
    let xd = x.dense();
    let dense = DMatrix::from_fn(8, 8, |i, j| Complex64::new(xd[(i, j)], 0.0) - if i == j { z } else { 0.0.into() });
    let inv = dense.try_inverse().unwrap();
    for i in 0..8 {
        for j in 0..3 {
            assert!((g[(i, j)] - inv[(i, 5 + j)]).norm() < 1e-10);
        }
    }
    let (lo, ld) = green_function_stats(&x, z).unwrap();
    let expect = v.iter().map(|&vi| (z / (z * z - vi * vi)).norm()).fold(0.0, f64::max);
    assert!(lo < 1e-12);
    assert!((ld - expect).abs() < 1e-10);
}

#[test]
fn resolvent_large_eta_and_bound() {
    let (dims, init) = gaussian_init(200, 5);
    let x0 = linearize(init.to_block(dims).unwrap());
    for s in 0..50 {
        let x = matrix_flow_sample(&x0, 0.2, Seed::with_stream(6, s)).unwrap();
        let (lo, ld) = green_function_stats(&x, Complex64::new(0.3, 10.0)).unwrap();
        assert!(lo <= 0.1);
        assert!(ld <= 0.1 + 1e-12);
        if s < 3 {
            let (lo, ld) = green_function_stats(&x, Complex64::new(0.3, 0.05)).unwrap();
            assert!(lo >= 0.0 && ld <= 1.0 / 0.05);
        }
    }
}

fn logged(n: usize, m: usize, seed: Seed, dt: f64, t: f64) -> StepLog {
    let dims = EnsembleDims::new(m, n).unwrap();
    let init = InitialData::new((0..n).map(|i| 0.3 + 0.15 * i as f64).collect());
    let mut it = EigenIntegrator::new(
        SpectrumState::from_initial(&init, dims).unwrap(),
        SdeConfig::new(dt, DriftMode::Brownian).with_reorder_on_exhaustion(true),
        seed,
    )
    .unwrap();
    it.enable_log();
    it.advance_to(t).unwrap();
    it.take_log().unwrap()
}

#[test]
fn stieltjes_audit_noiseless_is_first_order() {
    let dims = EnsembleDims::new(8, 6).unwrap();
    let init: Vec<f64> = (0..6).map(|i| 0.4 + 0.3 * i as f64).collect();
    let z = Complex64::new(0.5, 0.5);
    let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&dt| {
            let steps = (0.01 / dt) as usize;
            let inc: Vec<(f64, Vec<f64>)> = (0..steps).map(|_| (dt, vec![0.0; 6])).collect();
            let log = StepLog::from_increments(dims, DriftMode::Brownian, init.clone(), &inc).unwrap();
            stieltjes_sde_audit(&log, z, (0.0, 0.01)).unwrap()
        })
        .collect();
    assert!(errs[1] < errs[0] / 5.0 && errs[2] < errs[1] / 5.0, "{errs:?}");
}

#[test]
fn stieltjes_audit_on_paths() {
    let dt = 1e-4;
    for (m, mode_ok) in [(20, true), (24, true)] {
        let mut worst: f64 = 0.0;
        for s in 0..100 {
            let log = logged(20, m, Seed::with_stream(7, s), dt, 0.1);
            worst = worst.max(stieltjes_sde_audit(&log, Complex64::new(0.3, 1.0), (0.0, 0.1)).unwrap());
        }
        assert!(mode_ok && worst < 5.0 * dt, "M={m}: {worst}");
    }
}

#[test]
fn stieltjes_audit_scales_with_height() {
    let mut ratio = Vec::new();
    for s in 0..50 {
        let log = logged(20, 20, Seed::with_stream(8, s), 1e-3, 0.1);
        let low = stieltjes_sde_audit(&log, Complex64::new(0.3, 0.5), (0.0, 0.1)).unwrap();
        let high = stieltjes_sde_audit(&log, Complex64::new(0.3, 2.0), (0.0, 0.1)).unwrap();
        ratio.push(low / high);
    }
    assert!(median(&ratio) >= 4.0);
}

#[test]
fn audit_rejects_bad_logs() {
    let mut log = logged(4, 4, Seed::new(9), 1e-3, 0.01);
    assert!(stieltjes_sde_audit(&log, Complex64::new(0.0, 1.0), (1.0, 2.0)).is_err());
    log.steps[0].db.pop();
    assert!(matches!(stieltjes_sde_audit(&log, Complex64::new(0.0, 1.0), (0.0, 0.01)), Err(Error::Mismatch(_))));
}

#[test]
fn time_grid_sweep_properties() {
    let (dims, init) = gaussian_init(100, 10);
    let domain = SpectralDomain { e0: 0.5, q: 0.5, big_g: 0.4, eta_min: 0.05, eta_max: 1.0, l_exp: 0.0, b_v: 1.0 };
    domain.validate(dims.n()).unwrap();
    let pts = domain.points(3, 2);
    assert_eq!(pts.len(), 6);
    let state = SpectrumState::from_initial(&init, dims).unwrap();
    let p: Vec<f64> = state.positive().to_vec();
    let constant = StepLog::from_increments(dims, DriftMode::Brownian, p.clone(), &[]).unwrap();
    let single = local_law_rows(&p, &init, 0.0, &pts, None).unwrap();
    let sweep = time_grid_sweep(&constant, &init, &pts, 0.01).unwrap();
    assert_eq!(sweep.rows, single);
    let mut it = EigenIntegrator::new(state, SdeConfig::new(1e-3, DriftMode::Brownian), Seed::new(11)).unwrap();
    it.enable_log();
    it.advance_to(0.05).unwrap();
    let log = it.take_log().unwrap();
    let coarse = time_grid_sweep(&log, &init, &pts, 0.01).unwrap().summary();
    let fine = time_grid_sweep(&log, &init, &pts, 0.005).unwrap();
    let fine_sum = fine.summary();
    assert!((coarse.sup_lambda_gap - fine_sum.sup_lambda_gap).abs() < 0.1 * fine_sum.sup_lambda_gap);
    assert!(fine.rows.iter().all(|r| r.lambda_gap <= fine_sum.sup_lambda_gap));
    let mut out = Vec::new();
    fine.write_ndjson(&mut out).unwrap();
    let first: serde_json::Value = serde_json::from_str(String::from_utf8(out).unwrap().lines().next().unwrap()).unwrap();
    for key in ["t", "E", "eta", "lambda_gap", "lambda_o", "lambda_d", "sce_residual"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert!(time_grid_sweep(&log, &init, &pts, 0.0).is_err());
}

#[test]
fn domain_and_threshold_validation() {
    let d = SpectralDomain { e0: 0.0, q: 0.5, big_g: 1.0, eta_min: 1e-4, eta_max: 1.0, l_exp: 0.0, b_v: 1.0 };
    assert!(d.validate(100).is_err());
    assert!(DiagnosticThresholds { xi: 0.0, nu: 1.0, phi_exponent: 3.0 }.validate().is_err());
    let th = DiagnosticThresholds::default();
    assert!((th.polylog(500) - 500f64.ln().powi(3)).abs() < 1e-9);
    let _ = DataBlock::<f64>::zeros(EnsembleDims::square(1).unwrap());
}
