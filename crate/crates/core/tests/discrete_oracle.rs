use bandcorr_core::green::Side;
use bandcorr_core::oracle::{
    build_discrete_model, compare_with_analytic, direct_block, evolve_covariance, evolve_covariance_direct,
    extract_band_rates, ModeRef, OracleParams, OracleRun, SYMPLECTIC_TOL,
};
use bandcorr_core::Error;

/// Small machine for the full-model integrator: `ω_r = 5`, 100 modes per side.
fn small() -> OracleParams {
    let omega_r = 5.0;
    let omega_d = omega_r / 11f64.sqrt();
    OracleParams {
        omega_r,
        omega_d,
        amplitude: omega_r * omega_r / 32.0,
        gamma0: 0.2,
        cutoff: 50.0,
        mass: 10.0,
        env_mass: 1.0,
        modes: 100,
        spacing: omega_d / 12.0,
        t_right: 2.0,
        t_left: 0.5,
        k_max: 2,
    }
}

fn max_step(p: &OracleParams) -> f64 {
    0.05 / p.omega_max()
}

#[test]
fn uncoupled_reservoirs_have_zero_couplings() {
    let p = OracleParams { gamma0: 0.0, ..small() };
    let m = build_discrete_model(&p).unwrap();
    assert!(m.couplings.iter().all(|&l| l == 0.0));
    assert_eq!(m.counterterm, 0.0);
}

#[test]
fn grid_reproduces_continuum_integrals() {
    let m = build_discrete_model(&OracleParams::reduced_scale()).unwrap();
    assert_eq!(m.frequencies.len(), 400);
    assert!(m.continuum_sum_deviation() < 0.01, "{}", m.continuum_sum_deviation());
    assert!(m.counterterm_mismatch() < 0.02, "{}", m.counterterm_mismatch());
    // 2.5 ω_r top of the grid.
    assert!(m.params.omega_max() >= 2.5 * m.params.omega_r);
}

#[test]
fn coarse_grid_is_rejected_with_a_suggestion() {
    let p = OracleParams { cutoff: 5.0, spacing: 1.25, omega_r: 50.0, omega_d: 15.0, ..small() };
    match build_discrete_model(&p) {
        Err(Error::Oracle(msg)) => assert!(msg.contains("modes"), "{msg}"),
        other => panic!("expected a coarse-grid error, got {other:?}"),
    }
}

#[test]
fn too_few_modes_or_low_grid_top_are_rejected() {
    assert!(matches!(build_discrete_model(&OracleParams { modes: 99, ..small() }), Err(Error::Oracle(_))));
    let low = OracleParams { spacing: small().spacing / 2.0, ..small() };
    assert!(matches!(build_discrete_model(&low), Err(Error::Oracle(_))));
}

#[test]
fn step_and_horizon_limits() {
    let p = small();
    let m = build_discrete_model(&p).unwrap();
    let tracked = [ModeRef::System];
    assert!(evolve_covariance(&m, &tracked, p.period(), 2.0 * max_step(&p), 4).is_err());
    let recurrence = 2.0 * std::f64::consts::PI / p.spacing;
    assert!(evolve_covariance(&m, &tracked, recurrence, max_step(&p), 4).is_err());
    assert!(evolve_covariance(&m, &[ModeRef::Bath(Side::R, 101)], p.period(), max_step(&p), 4).is_err());
}

#[test]
fn free_oscillator_keeps_its_vacuum() {
    let p = OracleParams { gamma0: 0.0, amplitude: 0.0, ..small() };
    let m = build_discrete_model(&p).unwrap();
    let traj = evolve_covariance(&m, &[ModeRef::System, ModeRef::Bath(Side::L, 7)], 2.0 * p.period(), max_step(&p), 8)
        .unwrap();
    for b in &traj.blocks {
        assert!((b[(0, 0)] - 0.5).abs() < 1e-9 && (b[(1, 1)] - 0.5).abs() < 1e-9);
        assert!(b[(0, 1)].abs() < 1e-10 && b[(0, 2)].abs() < 1e-10);
        let n = 1.0 / (m.frequencies[6] / p.t_left).exp_m1();
        assert!((b[(2, 2)] - 0.5 - n).abs() < 1e-9);
    }
}

#[test]
fn undriven_energy_is_conserved() {
    let p = OracleParams { amplitude: 0.0, ..small() };
    let m = build_discrete_model(&p).unwrap();
    let run = evolve_covariance_direct(&m, p.period(), max_step(&p)).unwrap();
    let e0 = run.energy[0];
    let worst = run.energy.iter().map(|e| ((e - e0) / e0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn floquet_path_matches_full_model() {
    let p = small();
    let m = build_discrete_model(&p).unwrap();
    let tracked = [ModeRef::System, ModeRef::Bath(Side::R, 6), ModeRef::Bath(Side::L, 18)];
    let traj = evolve_covariance(&m, &tracked, 2.0 * p.period(), max_step(&p), 2).unwrap();
    assert!(traj.symplectic_drift < SYMPLECTIC_TOL);
    // Samples at 0, T/2, T, 3T/2.
    let t = traj.times[3];
    assert!((t - 1.5 * p.period()).abs() < 1e-12);
    let direct = evolve_covariance_direct(&m, t, max_step(&p)).unwrap();
    let reference = direct_block(&m, &direct.sigma, &tracked);
    let diff = (&traj.blocks[3] - &reference).amax();
    assert!(diff < 1e-8 * reference.amax(), "{diff:e}");
}

#[test]
fn trajectory_dump_has_one_row_per_sample() {
    let p = small();
    let m = build_discrete_model(&p).unwrap();
    let traj = evolve_covariance(&m, &[ModeRef::Bath(Side::R, 3)], p.period(), max_step(&p), 4).unwrap();
    let mut out = Vec::new();
    traj.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,s00,s01,s11");
    assert_eq!(lines.len(), 1 + traj.times.len());
    assert_eq!(lines[1].split(',').count(), 4);
}

#[test]
fn reduced_scale_matches_band_formulas() {
    let p = OracleParams::reduced_scale();
    let run = OracleRun::reduced_scale(&p);
    assert_eq!(run.band, 16);
    let cmp = compare_with_analytic(&p, &run).unwrap();
    assert!(cmp.symplectic_drift < SYMPLECTIC_TOL, "{:e}", cmp.symplectic_drift);
    for row in &cmp.rows {
        assert!(row.relative_error() < 0.15, "{}: {:e} vs {:e}", row.quantity, row.fitted, row.analytic);
    }
    let g = |q: &str| cmp.rows.iter().find(|r| r.quantity == q).unwrap().fitted;
    assert!(g("gamma_plus") < 0.0 && g("gamma_minus") > 0.0);
    // Hot right band cools, left partners warm up.
    assert!(g("heat_i") < 0.0 && g("heat_j_nonresonant") > 0.0 && g("heat_j_resonant") > 0.0);
}

fn reduced_rates(p: &OracleParams) -> (bandcorr_core::oracle::FittedRates, bandcorr_core::oracle::FittedRates) {
    let m = build_discrete_model(p).unwrap();
    let tracked = [ModeRef::Bath(Side::R, 16), ModeRef::Bath(Side::L, 32), ModeRef::Bath(Side::L, 64)];
    let traj = evolve_covariance(&m, &tracked, 33.0 * p.period(), p.period() / 2048.0, 16).unwrap();
    (
        extract_band_rates(&traj, (0, 1), p.omega_d, 5.0).unwrap(),
        extract_band_rates(&traj, (0, 2), p.omega_d, 5.0).unwrap(),
    )
}

#[test]
fn undriven_equilibrium_is_stationary() {
    let p = OracleParams { amplitude: 0.0, t_left: 20.0, ..OracleParams::reduced_scale() };
    let (a, b) = reduced_rates(&p);
    // Scale of the driven heat current at these bands is ~1e-5.
    for slope in [a.heat.0, a.heat.1, b.heat.1] {
        assert!(slope.abs() < 1e-8, "{slope:e}");
    }
    for slope in [a.purity_slope.0, a.purity_slope.1, b.purity_slope.1] {
        assert!(slope.abs() < 1e-9, "{slope:e}");
    }
    assert!(a.gamma.abs() < 1e-12 && b.gamma.abs() < 1e-12);
}

#[test]
fn zero_temperature_creates_only_nonresonant_pairs() {
    let p = OracleParams { t_right: 0.0, t_left: 0.0, ..OracleParams::reduced_scale() };
    let (nonres, res) = reduced_rates(&p);
    assert!(nonres.gamma < 0.0);
    assert!(res.gamma.abs() < 1e-3 * nonres.gamma.abs(), "{:e} vs {:e}", res.gamma, nonres.gamma);
    assert!(nonres.heat.0 > 0.0 && nonres.heat.1 > 0.0 && res.heat.1 > 0.0);
}
