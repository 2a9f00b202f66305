use std::sync::Arc;

use horoshear_core::lie::exp_algebra;
use horoshear_core::observables::{bump_eval, Centering, DEFAULT_SOBOLEV_ORDER};
use horoshear_core::{
    rng, AlgebraVector, BumpProfile, BumpSpec, FuchsianGroupModel, HalfPlanePoint, Mat2,
    Observable, ObservableSpec,
};
use rand::Rng;

fn bolza() -> Arc<FuchsianGroupModel> {
    Arc::new(FuchsianGroupModel::bolza())
}

fn frame_bump(radius: f64, amplitude: f64) -> BumpSpec {
    BumpSpec {
        center: exp_algebra(&AlgebraVector::new(-0.4, 0.2, 0.7), 1.0),
        radius,
        smoothness: 6,
        amplitude,
        profile: BumpProfile::Frame,
    }
}

fn surface_observable(group: Arc<FuchsianGroupModel>) -> Observable {
    Observable::k_invariant(group, HalfPlanePoint::I, 1.2, 6, 1.0).unwrap()
}

/// Mean and standard error of `f` over Haar samples.
fn haar_mean(f: &Observable, n: usize, seed: u64) -> (f64, f64) {
    let values: Vec<f64> = f
        .group()
        .haar_samples(n, seed)
        .unwrap()
        .iter()
        .map(|p| f.eval(p))
        .collect();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

#[test]
fn bump_at_half_radius() {
    // ‖exp(sU) − I‖_F = |s|, so this point sits at ρ = r_b/2.
    let spec = frame_bump(0.8, 1.0);
    let g = spec.center * exp_algebra(&AlgebraVector::U, 0.4);
    let by_hand = {
        let x: f64 = 1.0 - 0.25;
        x * x * x * x * x * x
    };
    assert!((bump_eval(&spec, &g) - by_hand).abs() < 1e-15);
    assert!((by_hand - 0.177_978_515_625).abs() < 1e-15);
    assert_eq!(bump_eval(&spec, &spec.center), 1.0);
    assert_eq!(
        bump_eval(&spec, &(spec.center * exp_algebra(&AlgebraVector::U, 0.8))),
        0.0
    );
}

#[test]
fn evaluation_is_gamma_invariant() {
    let group = bolza();
    for f in [
        surface_observable(group.clone()),
        Observable::new(group.clone(), frame_bump(0.6, 1.0), 1).unwrap(),
    ] {
        assert!(f.truncation_defect(1000, 7) <= 1e-8);
        for p in group.haar_samples(100, 201).unwrap() {
            let here = f.eval(&p);
            // Independent oracle: the Poincaré series over every word of length ≤ 4.
            assert!((here - f.eval_brute_force(&p.rep, 4)).abs() <= 1e-8);
            for gen in &group.generators {
                let moved = *gen * p.rep;
                assert!((f.eval_group(&moved) - here).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn centered_observable_has_zero_haar_mean() {
    let group = bolza();
    for centering in [Centering::MonteCarlo, Centering::Exact] {
        let spec = ObservableSpec {
            center: Mat2::IDENTITY,
            radius: 1.2,
            smoothness: 6,
            amplitude: 1.0,
            k_invariant: true,
            seed: 3,
            centering_samples: 100_000,
            sobolev_order: 1,
            centering,
        };
        let f = spec.build(group.clone()).unwrap();
        let (mean, se) = haar_mean(&f, 100_000, 202);
        assert!(mean.abs() <= 3.0 * se, "{centering:?}: {mean} ± {se}");
    }
}

#[test]
fn centering_is_stable_and_linear() {
    let group = bolza();
    let f = Observable::new(group.clone(), frame_bump(0.6, 1.0), 1).unwrap();
    let a = f.clone().make_zero_average(50_000, 1).unwrap();
    let b = f.clone().make_zero_average(50_000, 2).unwrap();
    let combined = (a.mean_stderr.powi(2) + b.mean_stderr.powi(2)).sqrt();
    assert!((a.mean_hat - b.mean_hat).abs() <= 3.0 * combined);
    // Centering an already centered observable re-estimates the same mean.
    let twice = a.clone().make_zero_average(50_000, 2).unwrap();
    assert!((twice.mean_hat - a.mean_hat).abs() <= 3.0 * combined);

    let doubled = Observable::new(group.clone(), frame_bump(0.6, 2.0), 1).unwrap();
    let d_same = doubled.clone().make_zero_average(50_000, 1).unwrap();
    assert!((d_same.mean_hat - 2.0 * a.mean_hat).abs() <= 1e-12 * a.mean_hat.abs());
    let d_other = doubled.make_zero_average(50_000, 2).unwrap();
    assert!(
        (d_other.mean_hat - 2.0 * a.mean_hat).abs()
            <= 3.0 * (d_other.mean_stderr + 2.0 * a.mean_stderr)
    );

    let zero = Observable::new(group, frame_bump(0.6, 0.0), 1)
        .unwrap()
        .make_zero_average(10_000, 1)
        .unwrap();
    assert_eq!(zero.mean_hat, 0.0);
}

/// Nested central difference of `f` along `w` repeated `order` times.
fn nth_difference(f: &Observable, g: &Mat2, w: &AlgebraVector, order: u32, h: f64) -> f64 {
    if order == 0 {
        return f.eval_group(g);
    }
    let plus = nth_difference(f, &(*g * exp_algebra(w, h)), w, order - 1, h);
    let minus = nth_difference(f, &(*g * exp_algebra(w, -h)), w, order - 1, h);
    (plus - minus) / (2.0 * h)
}

#[test]
fn difference_quotients_converge_at_second_order() {
    // Up to order k − 2 = 4, halving h divides the central-difference error by 4.
    let group = bolza();
    let f = Observable::new(group, frame_bump(0.7, 1.0), 1).unwrap();
    let g = f.bump.center * exp_algebra(&AlgebraVector::new(0.05, -0.08, 0.06), 1.0);
    for w in [AlgebraVector::V, AlgebraVector::X, AlgebraVector::U] {
        for order in 1..=4 {
            let h = 0.02;
            let d: Vec<f64> = (0..3)
                .map(|i| nth_difference(&f, &g, &w, order, h / 2f64.powi(i)))
                .collect();
            let ratio = (d[0] - d[1]) / (d[1] - d[2]);
            assert!(
                (ratio - 4.0).abs() <= 0.8,
                "{w} order {order}: ratio {ratio}"
            );
        }
    }
}

#[test]
fn sobolev_proxy_properties() {
    let group = bolza();
    let f = Observable::new(group.clone(), frame_bump(0.6, 1.0), 1).unwrap();
    assert!(
        (f.scaled(2.0).sobolev_proxy(3) - 2.0 * f.sobolev_proxy(3)).abs()
            <= 1e-6 * f.sobolev_proxy(3)
    );
    let zero = Observable::new(group.clone(), frame_bump(0.6, 0.0), 1).unwrap();
    assert_eq!(zero.sobolev_proxy(4), 0.0);

    let half = Observable::new(group, frame_bump(0.3, 1.0), 1).unwrap();
    let ratio = half.sobolev_proxy(1) / f.sobolev_proxy(1);
    assert!((1.5..=4.0).contains(&ratio), "ratio {ratio}");
    assert_eq!(f.sobolev_hat, f.sobolev_proxy(1));
}

#[test]
fn k_invariant_observable_ignores_rotations() {
    let group = bolza();
    let f = surface_observable(group.clone()).center_exactly().unwrap();
    assert!(f.k_invariant);
    assert_eq!(f.sobolev_order, DEFAULT_SOBOLEV_ORDER);
    let mut r = rng::stream(203, 0);
    let mut worst: f64 = 0.0;
    for p in group.haar_samples(20, 204).unwrap() {
        let base = f.eval(&p);
        for _ in 0..100 {
            let k = Mat2::rotation(std::f64::consts::TAU * r.random::<f64>());
            worst = worst.max((f.eval_group(&(p.rep * k)) - base).abs());
        }
    }
    assert!(worst <= 1e-8, "{worst}");

    let frame = Observable::new(group, frame_bump(0.6, 1.0), 1).unwrap();
    assert!(frame.rotation_defect(8, 16, 5) > 1e-3);
}

#[test]
fn zero_amplitude_observable_vanishes() {
    let group = bolza();
    let f = Observable::new(group.clone(), frame_bump(0.6, 0.0), 1).unwrap();
    for p in group.haar_samples(50, 205).unwrap() {
        assert_eq!(f.eval(&p), 0.0);
    }
}
