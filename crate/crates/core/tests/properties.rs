use std::f64::consts::{LN_2, PI};

use lightstore::analysis::{
    phase_sweep, retrieval_efficiency, retrieval_peak, run_delay, storage_time, wrap_phase, EfficiencyWindows,
    PeakMeasure, SweepOptions,
};
use lightstore::detect::retrieval_interval;
use lightstore::sequence::scenario::{signal_pulse, storage_control_at};
use lightstore::sequence::{scenario, ExperimentSpec, Scenario, Waveform};
use lightstore::solver::{run, stability_limit};
use proptest::prelude::*;

/// Optically thick medium in which a short pulse is stored whole, well
/// inside the transparency window.
fn contained(gamma_s: f64) -> ExperimentSpec {
    let mut s = scenario(Scenario::Fig3Trace(0)).unwrap();
    s.medium.gamma_e = 1.0;
    s.medium.gamma_s = gamma_s;
    s.medium.coupling_g2n = s.medium.light_speed * 6000.0 / (2.0 * s.medium.length_cm);
    s.control = storage_control_at(7.45, 37.0, 57.0, 7.45);
    s.signal = signal_pulse(5.0, 30.0);
    s.bfield = Waveform::constant(0.0);
    s.grid.t_end = 160.0;
    s.grid.dt = 0.001;
    s
}

#[test]
fn contained_pulse_is_conserved() {
    let spec = contained(0.0);
    assert!(spec.grid.dt <= stability_limit(&spec));
    assert!(spec.validate().is_empty());
    let r = run(&spec).unwrap();
    let e = retrieval_efficiency(&r, &EfficiencyWindows::from_spec(&spec).unwrap(), spec.medium.light_speed).unwrap();
    assert!(e.escaped < 1e-6, "{e:?}");
    assert!(e.retrieved > 0.95 * e.stored, "{e:?}");
    assert!(e.escaped + e.retrieved >= 0.95, "{e:?}");
}

#[test]
fn half_life_storage() {
    let windows = EfficiencyWindows::from_spec(&contained(0.0)).unwrap();
    let t = storage_time(&run(&contained(0.0)).unwrap(), &windows).unwrap();
    let spec = contained(LN_2 / (2.0 * t));
    let r = run(&spec).unwrap();
    let e = retrieval_efficiency(&r, &windows, spec.medium.light_speed).unwrap();
    let ratio = e.retrieved / e.stored;
    assert!((ratio / 0.5 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn about_half_escapes_before_storage() {
    let spec = scenario(Scenario::Fig2a).unwrap();
    let r = run(&spec).unwrap();
    let e = retrieval_efficiency(&r, &EfficiencyWindows::from_spec(&spec).unwrap(), spec.medium.light_speed).unwrap();
    assert!((e.escaped - 0.5).abs() <= 0.15, "{e:?}");
    assert_eq!(r.diagnostics.escaped_fraction, Some(e.escaped));
    for f in [e.escaped, e.stored, e.retrieved] {
        assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn detector_is_causal() {
    for which in [Scenario::Fig2a, Scenario::Fig2b, Scenario::Slowlight] {
        let spec = scenario(which).unwrap();
        let start = spec.signal.knots().iter().find(|k| k.1 != 0.0).unwrap().0;
        let r = run(&spec).unwrap();
        let b = r.detector.baseline;
        for (t, v) in r.times.iter().zip(&r.detector.signal_channel) {
            if *t < start - 0.5 {
                assert_eq!(*v, b, "t = {t}");
            }
        }
    }
}

#[test]
fn doubling_the_signal_doubles_the_field_exactly() {
    let spec = scenario(Scenario::Fig2b).unwrap();
    let mut twice = spec.clone();
    twice.signal = spec.signal.scaled(2.0);
    let a = run(&spec).unwrap();
    let b = run(&twice).unwrap();
    assert!(a.field_out.iter().zip(&b.field_out).all(|(x, y)| 2.0 * x == *y));
}

#[test]
fn fitted_phase_tracks_applied_phase() {
    let mut base = scenario(Scenario::Fig3Trace(0)).unwrap();
    base.medium.gamma_s = 0.0;
    let sweep = phase_sweep(&base, 10, 4.0 * PI, SweepOptions::default()).unwrap();
    let first = sweep.entries[0].fitted_phase;
    for e in &sweep.entries {
        assert!(wrap_phase(e.fitted_phase - first + e.expected_phase).abs() < 0.05);
    }
}

#[test]
fn peak_is_periodic_in_phase() {
    let base = scenario(Scenario::Fig3Trace(0)).unwrap();
    let a = phase_sweep(&base, 5, 2.0 * PI, SweepOptions::default()).unwrap();
    let b = phase_sweep(&base, 5, 2.0 * PI, SweepOptions::default()).unwrap();
    assert_eq!(a, b);
    let shifted: Vec<f64> = a
        .entries
        .iter()
        .map(|e| {
            let s = lightstore::analysis::sweep_spec(&base, e.expected_phase + 2.0 * PI).unwrap();
            retrieval_peak(&run(&s).unwrap(), PeakMeasure::FieldPeak).unwrap()
        })
        .collect();
    for (e, p) in a.entries.iter().zip(shifted) {
        assert!((e.retrieval_peak - p).abs() < 0.01 * a.fringe_fit.amplitude);
    }
}

#[test]
fn zero_span_sweep_is_flat() {
    let base = scenario(Scenario::Fig3Trace(0)).unwrap();
    let s = phase_sweep(&base, 3, 0.0, SweepOptions::default()).unwrap();
    let p0 = s.entries[0].retrieval_peak;
    assert!(s.entries.iter().all(|e| e.retrieval_peak == p0));
    assert_eq!(s.fringe_fit.amplitude, 0.0);
    assert_eq!(s.fringe_fit.offset, p0);
}

#[test]
fn serial_and_parallel_sweeps_agree() {
    let base = scenario(Scenario::Fig3Trace(0)).unwrap();
    let par = phase_sweep(&base, 4, 2.0 * PI, SweepOptions::default()).unwrap();
    let ser = phase_sweep(
        &base,
        4,
        2.0 * PI,
        SweepOptions {
            parallel: false,
            ..SweepOptions::default()
        },
    )
    .unwrap();
    assert_eq!(par, ser);
}

#[test]
fn peak_measures_order() {
    let r = run(&scenario(Scenario::Fig2a).unwrap()).unwrap();
    let at_field = retrieval_peak(&r, PeakMeasure::FieldPeak).unwrap();
    let max = retrieval_peak(&r, PeakMeasure::ChannelMax).unwrap();
    assert!(max >= at_field);
    assert!(retrieval_peak(&r, PeakMeasure::Energy).unwrap() > 0.0);
}

#[test]
fn auto_balance_matches_baseline_to_peak() {
    let mut spec = scenario(Scenario::Fig3Trace(0)).unwrap();
    spec.detection.auto_balance = true;
    let r = run(&spec).unwrap();
    let w = retrieval_interval(&r.control_hat).unwrap();
    let peak = w.clone().map(|i| r.field_out[i].norm_sqr()).fold(0.0, f64::max);
    let eps = r.diagnostics.mix_amplitude;
    let plateau = r.control_hat[r.control_hat.len() - 1];
    assert!(((eps * plateau).powi(2) / peak - 1.0).abs() < 0.01);
}

#[test]
fn slow_light_delay_tracks_control() {
    // v_g ∝ Ω² at fixed g²N, so halving Ω² doubles the delay.
    let spec = scenario(Scenario::Slowlight).unwrap();
    let d1 = run_delay(&run(&spec).unwrap()).unwrap();
    let mut weak = spec.clone();
    weak.control = Waveform::constant(spec.control.max_abs() * (0.5f64).sqrt());
    weak.signal = signal_pulse(5.0, 220.0);
    weak.grid.t_end = 300.0;
    let d2 = run_delay(&run(&weak).unwrap()).unwrap();
    assert!((d2 / d1 - 2.0).abs() < 0.1, "{d1} {d2}");
}

#[test]
fn noise_is_reproducible() {
    let mut spec = scenario(Scenario::Fig2a).unwrap();
    spec.detection.noise_std = 1e-3;
    spec.detection.noise_seed = 7;
    let a = run(&spec).unwrap();
    let b = run(&spec).unwrap();
    assert_eq!(a.detector, b.detector);
    assert!(a.detector.signal_channel.iter().all(|&v| v >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn run_is_linear_in_signal(alpha in -4.0f64..4.0) {
        let mut spec = scenario(Scenario::Fig2a).unwrap();
        spec.grid.t_end = 60.0;
        let base = run(&spec).unwrap();
        spec.signal = spec.signal.scaled(alpha);
        let scaled = run(&spec).unwrap();
        let peak = base.field_out.iter().map(|e| e.norm()).fold(0.0, f64::max);
        for (a, b) in base.field_out.iter().zip(&scaled.field_out) {
            prop_assert!((alpha * a - b).norm() <= 1e-12 * peak * alpha.abs().max(1.0));
        }
    }

    #[test]
    fn detector_intensities_are_nonnegative(phase in -PI..PI, eps2 in 0.0f64..0.099) {
        let mut spec = scenario(Scenario::Fig2b).unwrap();
        spec.grid.t_end = 100.0;
        spec.detection.mix_phase = phase;
        spec.detection.mix_amplitude = eps2.sqrt();
        let r = run(&spec).unwrap();
        prop_assert!(r.detector.signal_channel.iter().all(|&v| v >= 0.0));
        prop_assert!(r.detector.control_channel.iter().all(|&v| v >= 0.0));
    }
}
