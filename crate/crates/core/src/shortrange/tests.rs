use super::*;
use crate::dbm::{matrix_flow_sample, spectrum};
use crate::ensembles::{linearize, sample_rect_gaussian, svd_initial_data, EnsembleDims, SymTridiagonal};
use crate::freeconv::semicircle_density;
use crate::freeconv::{classical_locations, Semicircle};
use crate::rng::Seed;
use crate::stats::median;

fn gaussian_init(dims: EnsembleDims, seed: u64) -> InitialData<f64> {
    svd_initial_data(&sample_rect_gaussian::<f64>(dims, Seed::new(seed)).unwrap())
}

/// Positive eigenvalues of `X(t₀)` started from diagonal `V`.
fn lambda_t0(dims: EnsembleDims, init: &InitialData<f64>, t0: f64, seed: Seed) -> Vec<f64> {
    let x0 = linearize(init.to_block(dims).unwrap());
    spectrum(&matrix_flow_sample(&x0, t0, seed).unwrap()).unwrap().positive().to_vec()
}

#[test]
fn schedule_examples() {
    let p = make_schedule(400, 0.5, 0.1, 0.2, 0.15).unwrap();
    assert!((p.t0 - 400f64.powf(-0.5)).abs() < 1e-15);
    assert!((p.t1 - 400f64.powf(-0.9)).abs() < 1e-15);
    assert_eq!(p.ell, 1.0 / 400.0);
    match make_schedule(400, 0.5, 0.2, 0.15, 0.1) {
        Err(Error::Schedule(msg)) => assert!(msg.contains("ω₁ < ω_ℓ"), "{msg}"),
        other => panic!("{other:?}"),
    }
    match make_schedule(400, 0.4, 0.05, 0.21, 0.1) {
        Err(Error::Schedule(msg)) => assert!(msg.contains("ω_A < ω₀/2"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let control = make_schedule_unchecked(400, 0.4, 0.05, 0.21, 0.1).unwrap();
    assert!(!control.is_valid() && control.violations.len() == 1);
}

#[test]
fn nearest_location_examples() {
    let g = classical_locations(&Semicircle, 40).unwrap();
    for k in [3, 17, 30] {
        assert_eq!(nearest_location(g[k], &g).unwrap(), k);
    }
    let mid = 0.5 * (g[10] + g[11]);
    let k = nearest_location(mid, &g).unwrap();
    assert!(k == 10 || k == 11);
    assert_eq!(nearest_location(1.0, &[0.0, 2.0]).unwrap(), 0);
    assert!(matches!(nearest_location(5.0, &g), Err(Error::OutsideBulk(_))));
}

/// The cutoff sets straight from their definitions.
fn brute_force(e: f64, p: &ShortRangeParams, gam: &[f64], q: f64) -> (usize, Vec<bool>, Vec<Vec<bool>>) {
    let size = gam.len();
    let nf = p.n as f64;
    let mut k = 0;
    for i in 0..size {
        if (e - gam[i]).abs() < (e - gam[k]).abs() {
            k = i;
        }
    }
    let window: Vec<bool> = (0..size).map(|j| ((j as f64) - (k as f64)).abs() < nf.powf(p.omega_a)).collect();
    let regular: Vec<bool> = gam.iter().map(|g| (g - e).abs() <= q * p.big_g).collect();
    // Signed labels: positions below N are −N..−1, the rest 1..N.
    let label = |i: usize| if i < p.n { i as i64 - p.n as i64 } else { i as i64 - p.n as i64 + 1 };
    let pairs = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    i != j
                        && label(i) != -label(j)
                        && (((i as f64) - (j as f64)).abs() <= nf.powf(p.omega_l)
                            || (label(i) * label(j) > 0 && !regular[i] && !regular[j]))
                })
                .collect()
        })
        .collect();
    (k, window, pairs)
}

fn check_sets(n: usize, e: f64, q: f64, schedule: (f64, f64, f64, f64)) {
    let p = make_schedule(n, schedule.0, schedule.1, schedule.2, schedule.3).unwrap();
    let gam = classical_locations(&Semicircle, 2 * n).unwrap();
    let sets = IndexSets::build(e, &p, &gam, q).unwrap();
    let (k, window, pairs) = brute_force(e, &p, &gam, q);
    assert_eq!(sets.center, k);
    for i in 0..2 * n {
        assert_eq!(sets.in_window(i), window[i], "N={n} window {i}");
        for j in 0..2 * n {
            assert_eq!(sets.short_range(i, j), pairs[i][j], "N={n} pair ({i},{j})");
        }
    }
}

#[test]
fn index_sets_match_brute_force() {
    check_sets(20, 0.6, 0.5, (0.5, 0.1, 0.2, 0.15));
    check_sets(20, -0.3, 0.8, (0.9, 0.2, 0.4, 0.3));
    for n in 2..=50 {
        let gam = classical_locations(&Semicircle, 2 * n).unwrap();
        for e in [-1.2, 0.0, 0.35, 1.5].into_iter().filter(|&e| e >= gam[0] && e <= gam[2 * n - 1]) {
            check_sets(n, e, 0.4, (0.8, 0.1, 0.35, 0.2));
        }
    }
}

#[test]
fn reach_pairs_are_short_range() {
    let n = 50;
    let p = make_schedule(n, 0.5, 0.1, 0.2, 0.15).unwrap();
    let gam = classical_locations(&Semicircle, 2 * n).unwrap();
    let sets = IndexSets::build(0.8, &p, &gam, 0.5).unwrap();
    let reach = (n as f64).powf(p.omega_l);
    for i in 0..2 * n {
        for j in 0..2 * n {
            if i != j && j != sets.mirror(i) && (i.abs_diff(j) as f64) <= reach {
                assert!(sets.short_range(i, j));
            }
        }
    }
}

fn symmetric_system(n: usize, seed: u64, window: Range<usize>, dt: f64) -> CoupledSystem {
    let dims = EnsembleDims::square(n).unwrap();
    let init = gaussian_init(dims, seed);
    let lam = lambda_t0(dims, &init, 0.1, Seed::new(seed + 1));
    let sets = IndexSets::all_pairs(2 * n, n, window).unwrap();
    CoupledSystem::new(dims, &lam, sets, ShiftTable::centered(0.05), CoupledConfig::new(dt), Seed::new(seed + 2)).unwrap()
}

#[test]
fn symmetric_all_pairs_is_exact() {
    for window in [8..13, 0..20] {
        let mut sys = symmetric_system(10, 11, window, 1e-4);
        sys.run_to_end().unwrap();
        assert_eq!(sys.zhat, sys.ztilde);
        assert_eq!(sys.error_sup, 0.0);
        let p = make_schedule(10, 0.5, 0.1, 0.2, 0.15).unwrap();
        assert_eq!(shortrange_error(&sys, &p, 0.1).measured, 0.0);
    }
}

#[test]
fn identical_equations_give_zero_wigner_distance() {
    let mut sys = symmetric_system(10, 21, 0..20, 1e-4);
    sys.run_to_end().unwrap();
    let p = make_schedule(10, 0.5, 0.1, 0.2, 0.15).unwrap();
    let r = wigner_coupling_distance(&sys, &p, 0.05).unwrap();
    assert_eq!(r.distance, 0.0);
    assert!(r.within);
}

#[test]
fn noiseless_pair_follows_repulsion_ode() {
    // Positions 2 and 3 of N = 2 interact only with each other:
    // g' = 2/(2N g) gives g(t)² = g(0)² + 2t/N.
    let dims = EnsembleDims::square(2).unwrap();
    let sets = IndexSets { size: 4, center: 2, window: 2..4, regular: 0..0, reach: 1, all_pairs: false };
    assert!(!sets.short_range(2, 1) && sets.short_range(2, 3));
    let t1 = 0.05;
    let mut cfg = CoupledConfig::new(1e-6);
    cfg.noiseless = true;
    let mut sys =
        CoupledSystem::new(dims, &[0.5, 0.8], sets, ShiftTable::centered(t1), cfg, Seed::new(1)).unwrap();
    sys.run_to_end().unwrap();
    let g = sys.zhat[3] - sys.zhat[2];
    let exact = (0.3f64 * 0.3 + 2.0 * t1 / 2.0).sqrt();
    assert!((g - exact).abs() < 1e-6, "{g} vs {exact}");
}

#[test]
fn replay_is_bit_identical() {
    let dims = EnsembleDims::square(30).unwrap();
    let init = gaussian_init(dims, 5);
    let p = make_schedule(30, 0.5, 0.1, 0.2, 0.15).unwrap();
    let setup = ShortRangeSetup::build(&init, p.clone(), 0.7, 0.5, 1e-4).unwrap();
    let lam = lambda_t0(dims, &init, p.t0, Seed::new(6));
    let run = || {
        let mut cfg = CoupledConfig::new(p.t1 / 200.0);
        cfg.record_every = Some(50);
        let mut s =
            CoupledSystem::new(dims, &lam, setup.sets.clone(), setup.shift.clone(), cfg, Seed::new(7)).unwrap();
        s.run_to_end().unwrap();
        s
    };
    let (a, b) = (run(), run());
    assert_eq!(a.ztilde, b.ztilde);
    assert_eq!(a.zhat, b.zhat);
    assert_eq!(a.zwigner, b.zwigner);
    assert_eq!(a.noise_digest(), b.noise_digest());
    assert_eq!(a.records, b.records);
    assert_eq!(a.records.len(), 5);
    let mut buf = Vec::new();
    write_coupled_ndjson(&a.records, &mut buf).unwrap();
    let back: Vec<CoupledRecord> =
        std::str::from_utf8(&buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, a.records);
}

#[test]
fn suprema_are_monotone_in_horizon() {
    let dims = EnsembleDims::square(40).unwrap();
    let init = gaussian_init(dims, 8);
    let p = make_schedule(40, 0.5, 0.1, 0.2, 0.15).unwrap();
    let setup = ShortRangeSetup::build(&init, p.clone(), 0.8, 0.5, 1e-4).unwrap();
    let lam = lambda_t0(dims, &init, p.t0, Seed::new(9));
    let mut s = CoupledSystem::new(dims, &lam, setup.sets, setup.shift, CoupledConfig::new(p.t1 / 300.0), Seed::new(10))
        .unwrap();
    s.run_to_end().unwrap();
    assert!(s.history.windows(2).all(|w| w[1].error_sup >= w[0].error_sup && w[1].wigner_sup >= w[0].wigner_sup));
    assert!(s.error_sup > 0.0 && s.wigner_sup > 0.0);
    assert!((s.time - p.t1).abs() < 1e-12);
}

#[test]
fn shift_table_tracks_classical_location() {
    let dims = EnsembleDims::square(50).unwrap();
    let init = gaussian_init(dims, 12);
    let p = make_schedule(50, 0.5, 0.1, 0.2, 0.15).unwrap();
    let setup = ShortRangeSetup::build(&init, p.clone(), 0.9, 0.5, 1e-4).unwrap();
    let k = setup.sets.center;
    let later = fc_locations(&init, p.t0 + p.t1, 1e-4).unwrap();
    assert!((setup.shift.gamma_at(p.t1) - later[k]).abs() < 1e-4, "{} vs {}", setup.shift.gamma_at(p.t1), later[k]);
    assert_eq!(setup.shift.gamma_at(0.0), setup.locations[k]);
    let pv = principal_value(&init, p.t0, setup.locations[k], DriftMode::Brownian).unwrap();
    assert!((setup.shift.compensation_at(0.0) - pv.value).abs() < 1e-12);
}

#[test]
fn rectangular_run_stays_ordered() {
    let dims = EnsembleDims::new(60, 40).unwrap();
    let init = gaussian_init(dims, 13);
    let p = make_schedule(40, 0.5, 0.1, 0.2, 0.15).unwrap();
    let setup = ShortRangeSetup::build(&init, p.clone(), 0.9, 0.5, 1e-4).unwrap();
    let lam = lambda_t0(dims, &init, p.t0, Seed::new(14));
    let mut s = CoupledSystem::new(dims, &lam, setup.sets, setup.shift, CoupledConfig::new(p.t1 / 300.0), Seed::new(15))
        .unwrap();
    s.run_to_end().unwrap();
    let full = s.full_spectrum();
    assert!(full.windows(2).all(|w| w[1] > w[0]));
    assert!(full[40] > 0.0 && full[39] < 0.0);
}

#[test]
fn shortrange_error_mostly_within_bound() {
    let n = 100;
    let dims = EnsembleDims::square(n).unwrap();
    let init = gaussian_init(dims, 16);
    let p = make_schedule(n, 0.5, 0.1, 0.2, 0.15).unwrap();
    let setup = ShortRangeSetup::build(&init, p.clone(), 0.8, 0.5, 1e-4).unwrap();
    let mut within = 0;
    let mut scaled = Vec::new();
    for s in 0..20 {
        let lam = lambda_t0(dims, &init, p.t0, Seed::with_stream(17, s));
        let mut sys = CoupledSystem::new(
            dims,
            &lam,
            setup.sets.clone(),
            setup.shift.clone(),
            CoupledConfig::new(p.t1 / 400.0),
            Seed::with_stream(18, s),
        )
        .unwrap();
        sys.run_to_end().unwrap();
        let r = shortrange_error(&sys, &p, 0.1);
        within += r.within as usize;
        scaled.push(wigner_coupling_distance(&sys, &p, 0.05).unwrap().scaled);
    }
    assert!(within >= 18, "{within}/20");
    assert!(median(&scaled) < 1.0);
}

#[test]
fn goe_level_repulsion_has_unit_mean() {
    let n2 = 400;
    let mu = classical_locations(&Semicircle, n2).unwrap();
    let dens: Vec<f64> = mu.iter().map(|&m| semicircle_density(m)).collect();
    let samples: Vec<Vec<f64>> = (0..200)
        .map(|s| SymTridiagonal::<f64>::sample_goe(n2, Seed::with_stream(19, s)).unwrap().eigenvalues())
        .collect();
    let r = level_repulsion_stat(&samples, 150..250, &dens, n2 / 2, 0.35).unwrap();
    assert!((r.mean_scaled_gap - 1.0).abs() < 0.05, "{}", r.mean_scaled_gap);
    assert!(r.fraction_exceeding < 0.05);
    assert!(level_repulsion_stat::<f64>(&[], 0..2, &dens, 10, 0.2).is_err());
}
