use std::f64::consts::PI;

use bandcorr_core::green::*;
use num_complex::Complex64;
use proptest::prelude::*;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn default_machine() -> (Reservoirs, DrivingSpec) {
    let wr = 800.0;
    let res = Reservoirs::symmetric(1.0, 10.0 * wr, 1.0, 0.1).unwrap();
    (res, DrivingSpec::cosine(wr, wr / 11f64.sqrt(), wr * wr / 32.0).unwrap())
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

/// Composite Simpson on `[0, π/2)` after `ω = Λ tan θ`.
fn integrate_over_frequency(cutoff: f64, f: impl Fn(f64) -> Complex64) -> Complex64 {
    let n = 20_000;
    let h = (PI / 2.0) / n as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..=n {
        let th = (i as f64 * h).min(PI / 2.0 - 1e-12);
        let w = cutoff * th.tan();
        let jac = cutoff / th.cos().powi(2);
        let weight = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(w) * jac;
    }
    acc * h / 3.0
}

#[test]
fn spectral_density_reference_points() {
    let sd = SpectralDensity::lorentz_drude(0.7, 40.0, 2.0, 0.2, Side::R).unwrap();
    assert_eq!(sd.value(0.0).unwrap(), 0.0);
    let at_cutoff = sd.value(40.0).unwrap();
    assert!((at_cutoff - 2.0 * 0.7 * 40.0 / PI).abs() < 1e-12);
    assert!(sd.value(-1.0).is_err());
    assert!(SpectralDensity::lorentz_drude(0.0, 1.0, 1.0, 1.0, Side::L).is_err());
}

#[test]
fn kernel_at_zero_from_quadrature() {
    let sd = SpectralDensity::lorentz_drude(0.7, 40.0, 2.0, 0.2, Side::R).unwrap();
    let q = integrate_over_frequency(40.0, |w| {
        Complex64::new(if w > 0.0 { sd.value(w).unwrap() / (sd.mass * w) } else { 2.0 * 0.7 / (PI * 40.0) * 40.0 }, 0.0)
    });
    assert!((q.re - sd.dissipation_kernel(0.0)).abs() < 1e-8 * sd.dissipation_kernel(0.0));
}

#[test]
fn laplace_transform_reference_points() {
    let sd = SpectralDensity::lorentz_drude(0.7, 40.0, 2.0, 0.2, Side::R).unwrap();
    assert!((sd.dissipation_laplace(Complex64::new(0.0, 0.0)).unwrap() - 0.7).norm() < 1e-15);
    let at_i_cutoff = sd.dissipation_laplace(40.0 * I).unwrap();
    assert!(rel(at_i_cutoff, Complex64::new(0.35, -0.35)) < 1e-15);
    assert!(sd.dissipation_laplace(Complex64::new(-1.0, 0.0)).is_err());
}

#[test]
fn laplace_transform_matches_quadrature() {
    // ∫₀^∞ e^{−st} cos(ωt) dt = s/(s² + ω²) turns the transform into one frequency integral.
    let sd = SpectralDensity::lorentz_drude(0.7, 40.0, 2.0, 0.2, Side::R).unwrap();
    let s = 0.3 * 40.0;
    let q = integrate_over_frequency(40.0, |w| {
        let kernel = 2.0 * 0.7 * 40.0 * 40.0 / (PI * (w * w + 1600.0));
        Complex64::new(kernel * s / (s * s + w * w), 0.0)
    });
    let exact = sd.dissipation_laplace(Complex64::new(s, 0.0)).unwrap();
    assert!(rel(q, exact) < 1e-6);
}

#[test]
fn static_green_reference_points() {
    let (res, _) = default_machine();
    let g0 = static_green(&res, 800.0, Complex64::new(0.0, 0.0)).unwrap();
    assert!(rel(g0, Complex64::new(1.0 / 640_000.0, 0.0)) < 1e-15);
    // 40-digit reference.
    let at_res = static_green(&res, 800.0, 800.0 * I).unwrap();
    assert!(rel(at_res, Complex64::new(6.25e-5, -6.25e-4)) < 1e-13);
    let gamma = res.dissipation_laplace(800.0 * I).unwrap();
    assert!(rel(at_res, (800.0 * I * gamma).inv()) < 1e-13);

    let weak = Reservoirs::symmetric(1e-12, 8000.0, 1.0, 0.1).unwrap();
    let w = 300.0;
    let g = static_green(&weak, 800.0, w * I).unwrap();
    assert!(rel(g, Complex64::new(1.0 / (640_000.0 - w * w), 0.0)) < 1e-10);
}

#[test]
fn order_zero_is_static_green() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 0).unwrap();
    let s = 123.0 * I;
    assert_eq!(gc.evaluate(0, s).unwrap(), gc.static_green(s).unwrap());
    assert_eq!(gc.evaluate(1, s).unwrap(), Complex64::new(0.0, 0.0));
    assert_eq!(gc.evaluate(-1, s).unwrap(), Complex64::new(0.0, 0.0));
}

#[test]
fn undriven_coefficients_are_diagonal_at_every_order() {
    let (res, _) = default_machine();
    let drv = DrivingSpec::undriven(800.0, 241.0).unwrap();
    for m in 0..=4 {
        let gc = GreenCoefficients::with_window(&res, &drv, m, 3).unwrap();
        let s = Complex64::new(0.1, 77.0);
        assert_eq!(gc.evaluate(0, s).unwrap(), gc.static_green(s).unwrap());
        for k in [-3, -1, 2] {
            assert_eq!(gc.evaluate(k, s).unwrap(), Complex64::new(0.0, 0.0));
        }
        assert!(residual_check(&gc, s).unwrap() < 1e-15);
    }
}

#[test]
fn first_order_sidebands() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 1).unwrap();
    let v = 800.0 * 800.0 / 32.0;
    for s in [Complex64::new(0.0, 120.0), Complex64::new(2.0, -300.0)] {
        for k in [1, -1] {
            let shift = Complex64::new(0.0, k as f64 * drv.omega_d);
            let expect = -(v / 2.0) * gc.static_green(s + shift).unwrap() * gc.static_green(s).unwrap();
            assert!(rel(gc.evaluate(k, s).unwrap(), expect) < 1e-14);
        }
    }
    // 40-digit reference at ω = ω_d/2.
    let a1 = gc.evaluate_axis(1, drv.omega_d / 2.0).unwrap();
    assert!(rel(a1, Complex64::new(-3.140_344_864_677_286e-8, 5.665_129_669_199_218e-11)) < 1e-12);
}

#[test]
fn second_order_reference() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 2).unwrap();
    let w = drv.omega_d / 2.0;
    let a0 = gc.evaluate_axis(0, w).unwrap();
    let am1 = gc.evaluate_axis(-1, w).unwrap();
    assert!(rel(a0, Complex64::new(1.599_738_465_278_833e-6, -6.177_075_991_531_312e-10)) < 1e-12);
    assert!(rel(am1, Complex64::new(-2.556_250_324_660_270_6e-8, 0.0)) < 1e-12);
}

#[test]
fn harmonic_outside_window_is_rejected() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 2).unwrap();
    assert_eq!(gc.k_max(), 4);
    assert!(matches!(
        gc.evaluate_axis(5, 1.0),
        Err(bandcorr_core::Error::HarmonicOutOfWindow { k: 5, k_max: 4 })
    ));
}

#[test]
fn residual_shrinks_with_order() {
    let (res, drv) = default_machine();
    for w in [0.3, 0.9, 1.4].map(|f| f * 800.0) {
        let s = w * I;
        let residuals: Vec<f64> = (0..=6)
            .map(|m| {
                let gc = GreenCoefficients::with_window(&res, &drv, m, 12).unwrap();
                residual_check(&gc, s).unwrap()
            })
            .collect();
        for pair in residuals.windows(2) {
            assert!(pair[1] <= pair[0] || pair[1] < 1e-14, "{residuals:?}");
        }
    }
}

#[test]
fn second_order_residual_is_third_order_small() {
    let (res, drv) = default_machine();
    let s = 0.9 * 800.0 * I;
    let gc2 = solve_green_coefficients(&res, &drv, 2).unwrap();
    let gc6 = GreenCoefficients::with_window(&res, &drv, 6, 12).unwrap();
    let v = drv.coeff(1).norm();
    let eps = (-2..=2)
        .map(|k| v * gc2.static_green(s + Complex64::new(0.0, k as f64 * drv.omega_d)).unwrap().norm())
        .fold(0.0, f64::max);
    let r = residual_check(&gc2, s).unwrap();
    assert!(r <= 2.0 * eps.powi(3), "residual {r}, bound {}", eps.powi(3));
    let (a2, a6) = (gc2.evaluate(0, s).unwrap(), gc6.evaluate(0, s).unwrap());
    assert!(rel(a2, a6) < 2.0 * eps.powi(2));
}

#[test]
fn auto_order_reaches_target_residual() {
    let (res, drv) = default_machine();
    let probes = [0.2, 0.5, 0.9].map(|f| f * 800.0);
    let gc = GreenCoefficients::auto_order(&res, &drv, &probes).unwrap();
    assert!(gc.order() > 2 && gc.order() <= MAX_ORDER);
    for w in probes {
        assert!(residual_check(&gc, w * I).unwrap() < AUTO_RESIDUAL);
    }
}

#[test]
fn sideband_peaks_sit_at_shifted_resonances() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 2).unwrap();
    let scan: Vec<(f64, f64)> = (1..4000)
        .map(|i| {
            let w = i as f64 * 0.5;
            (w, gc.evaluate_axis(1, w).unwrap().norm())
        })
        .collect();
    let mut peaks: Vec<f64> = scan
        .windows(3)
        .filter(|t| t[1].1 > t[0].1 && t[1].1 > t[2].1)
        .map(|t| t[1].0)
        .collect();
    peaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let near = |target: f64| peaks.iter().any(|p| (p - target).abs() < 5.0);
    assert!(near(800.0), "{peaks:?}");
    assert!(near(800.0 - drv.omega_d), "{peaks:?}");
}

#[test]
fn undamped_limit_of_static_coefficient() {
    let res = Reservoirs::symmetric(1e-9, 8000.0, 1.0, 0.1).unwrap();
    let drv = DrivingSpec::undriven(800.0, 241.0).unwrap();
    let gc = solve_green_coefficients(&res, &drv, 2).unwrap();
    let w = 400.0;
    let got = gc.evaluate_axis(0, w).unwrap().norm_sqr();
    let expect = 1.0 / (640_000.0f64 - w * w).powi(2);
    assert!((got - expect).abs() < 1e-6 * expect);
}

#[test]
fn green_function_is_analytic_in_right_half_plane() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 2).unwrap();
    let centre = Complex64::new(60.0, 500.0);
    let radius = 40.0;
    let n = 256;
    for k in [0, 1] {
        let mut avg = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let z = centre + radius * Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
            avg += gc.evaluate(k, z).unwrap();
        }
        avg /= n as f64;
        let direct = gc.evaluate(k, centre).unwrap();
        assert!(rel(avg, direct) < 1e-8);
    }
}

#[test]
fn default_driving_is_perturbative() {
    let (res, drv) = default_machine();
    let gc = solve_green_coefficients(&res, &drv, 2).unwrap();
    assert!(gc.warnings().is_empty(), "{:?}", gc.warnings());
    let strong = DrivingSpec::cosine(800.0, 800.0 / 11f64.sqrt(), 800.0 * 800.0).unwrap();
    let gc = solve_green_coefficients(&res, &strong, 2).unwrap();
    assert!(gc.warnings().iter().any(|w| matches!(w, GreenWarning::Perturbative { .. })));
    let parametric = DrivingSpec::cosine(800.0, 1600.0, 1e4).unwrap();
    let gc = solve_green_coefficients(&res, &parametric, 2).unwrap();
    assert!(gc.warnings().contains(&GreenWarning::ParametricResonance { n: 1 }));
}

proptest! {
    #[test]
    fn reality_symmetry(w in -3000.0f64..3000.0, k in -4i32..=4, m in 0usize..=4) {
        let (res, drv) = default_machine();
        let gc = GreenCoefficients::with_window(&res, &drv, m, 4).unwrap();
        let a = gc.evaluate_axis(k, w).unwrap();
        let b = gc.evaluate_axis(-k, -w).unwrap().conj();
        let scale = a.norm().max(b.norm());
        prop_assert!((a - b).norm() <= 1e-12 * scale + f64::MIN_POSITIVE);
    }
}
