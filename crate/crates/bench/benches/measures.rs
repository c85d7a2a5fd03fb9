use std::hint::black_box;

use bandcorr_core::bands::{self, BandPair, BandSpec, PairRates, Relation, ThermalEnvironment};
use bandcorr_core::gaussian::{self, MeasuredSide, TwoModeCovariance};
use bandcorr_core::green::{DrivingSpec, GreenCoefficients, Reservoirs, Side};
use bandcorr_core::sweep::{run_sweep, SweepConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

const WR: f64 = 800.0;

fn machine() -> (Reservoirs, DrivingSpec) {
    let res = Reservoirs::symmetric(1.0, 10.0 * WR, 10.0, 1.0).unwrap();
    let drv = DrivingSpec::cosine(WR, WR / 11f64.sqrt(), WR * WR / 32.0).unwrap();
    (res, drv)
}

fn toolbox(c: &mut Criterion) {
    let sigma = TwoModeCovariance::standard(1.7, 0.9, 0.8, -0.6);
    c.bench_function("mutual_information_exact", |b| {
        b.iter(|| gaussian::mutual_information_exact(black_box(&sigma)))
    });
    c.bench_function("gaussian_discord_exact", |b| {
        b.iter(|| gaussian::gaussian_discord_exact(black_box(&sigma), MeasuredSide::J))
    });
    c.bench_function("log_negativity_exact", |b| b.iter(|| gaussian::log_negativity_exact(black_box(&sigma))));
}

fn green(c: &mut Criterion) {
    let (res, drv) = machine();
    c.bench_function("auto_order_green", |b| {
        b.iter(|| GreenCoefficients::auto_order(&res, &drv, &[drv.omega_d / 2.0, WR]))
    });
    let gc = GreenCoefficients::auto_order(&res, &drv, &[drv.omega_d / 2.0, WR]).unwrap();
    let mut w = 1.0;
    // Fresh frequencies each call so the memo cache does not answer.
    c.bench_function("green_all_uncached", |b| {
        b.iter(|| {
            w += 1e-3;
            gc.all(Complex64::new(0.0, w))
        })
    });
}

fn band_pair(c: &mut Criterion) {
    let (res, drv) = machine();
    let wd = drv.omega_d;
    let gc = GreenCoefficients::auto_order(&res, &drv, &[wd / 2.0, WR]).unwrap();
    let env = ThermalEnvironment::new(7.5, 7.5).unwrap();
    let pair = BandPair {
        band_i: BandSpec::new(0.4 * wd, 0.1, Side::R).unwrap(),
        band_j: BandSpec::new(0.6 * wd, 0.1, Side::L).unwrap(),
        relation: Relation::NonResonant(1),
    };
    c.bench_function("correlation_report", |b| {
        b.iter(|| bands::correlation_report(black_box(&pair), &env, &gc, 20.0))
    });
    let rates = PairRates::new(&pair, &env, &gc).unwrap();
    c.bench_function("report_from_rates", |b| {
        b.iter(|| bands::report_from_rates(black_box(&pair), &env, &gc, &rates, 20.0))
    });
}

fn sweep(c: &mut Criterion) {
    let config = SweepConfig::default();
    c.bench_function("default_sweep_81", |b| b.iter(|| run_sweep(black_box(&config))));
}

criterion_group!(benches, toolbox, green, band_pair, sweep);
criterion_main!(benches);
