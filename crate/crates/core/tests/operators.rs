mod common;

use common::*;
use proptest::prelude::*;
use srcascade::degradation::{
    add_awgn, apply_w, apply_w_adjoint, simulate_sequence, Blur, DegradationSpec, Motion, ObservationOperator,
    ShiftMode,
};
use srcascade::imaging::{
    convolve_circular, correlate_circular, gradient_adjoint, gradient_forward, resize_bicubic, rgb_to_ycbcr,
    shift_subpixel, shift_subpixel_adjoint, upsample_zero, ycbcr_to_rgb, decimate,
};
use srcascade::registration::estimate_shift;
use srcascade::synthetic::textured_scene;
use srcascade::{GradientPair, ImagePlane, Kernel2D};

fn random_kernel(radius: usize, seed: u64) -> Kernel2D {
    let side = 2 * radius + 1;
    let p = random_plane(side, side, seed);
    Kernel2D::from_weights(radius, p.into_data()).unwrap()
}

#[test]
fn shift_matches_dense_bilinear_warp() {
    let x = random_plane(8, 8, 1);
    let y = random_plane(8, 8, 2);
    for (dx, dy) in [(0.3, -0.7), (2.5, 1.25), (-5.9, 7.1)] {
        let m = shift_matrix(8, 8, dx, dy);
        assert!(max_abs_diff(shift_subpixel(&x, dx, dy).data(), &m.matvec(x.data())) < 1e-14);
        assert!(max_abs_diff(shift_subpixel_adjoint(&y, dx, dy).data(), &m.transpose().matvec(y.data())) < 1e-14);
    }
}

#[test]
fn observation_matches_dense_matrix_on_8x8() {
    let spec = DegradationSpec::new(2, Blur::gaussian(1.0), 0.0, 0).unwrap();
    let k = spec.blur.kernel().unwrap();
    let motion = Motion::new(0.5, 1.5);
    let dense = observation_matrix(8, 8, 2, &k, motion.dx, motion.dy);
    assert_eq!((dense.rows, dense.cols), (16, 64));
    let z = random_plane(8, 8, 3);
    let g = random_plane(4, 4, 4);
    let wz = apply_w(&z, motion, &spec).unwrap();
    let wtg = apply_w_adjoint(&g, motion, &spec).unwrap();
    assert!(max_abs_diff(wz.data(), &dense.matvec(z.data())) < 1e-12);
    assert!(max_abs_diff(wtg.data(), &dense.transpose().matvec(g.data())) < 1e-12);
    let op = ObservationOperator::from_spec(&spec).unwrap();
    assert_eq!(op.apply(&z, motion).unwrap(), wz);
}

#[test]
fn noiseless_frames_are_exact_observations() {
    let hr = textured_scene(32, 32, 5);
    let spec = DegradationSpec::new(4, Blur::gaussian(1.5), 0.0, 6).unwrap();
    let seq = simulate_sequence(&hr, &spec, 16, ShiftMode::Grid).unwrap();
    assert_eq!(seq.len(), 16);
    for (f, m) in seq.frames.iter().zip(&seq.motions) {
        assert_eq!(f, &apply_w(&hr, *m, &spec).unwrap());
    }
}

#[test]
fn awgn_sample_variance() {
    let img = ImagePlane::filled(256, 256, 0.5);
    let noisy = add_awgn(&img, 0.005, 9).unwrap();
    let n = img.len() as f64;
    let diffs: Vec<f64> = noisy.data().iter().map(|v| v - 0.5).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var - 0.005).abs() < 0.0005, "sample variance {var}");
    assert_eq!(noisy, add_awgn(&img, 0.005, 9).unwrap());
}

#[test]
fn registration_recovers_constructed_shifts() {
    let r = textured_scene(64, 64, 10);
    let near = |got: (f64, f64), want: (f64, f64)| (got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12;
    assert!(near(estimate_shift(&r, &r).unwrap(), (0.0, 0.0)));
    let rolled = shift_subpixel(&r, 3.0, -2.0);
    assert!(near(estimate_shift(&r, &rolled).unwrap(), (3.0, -2.0)));
    let (dx, dy) = estimate_shift(&r, &shift_subpixel(&r, 0.25, 0.5)).unwrap();
    assert!((dx - 0.25).abs() < 0.05 && (dy - 0.5).abs() < 0.05, "({dx}, {dy})");
}

#[test]
fn color_round_trip() {
    let (r, g, b) = (random_plane(9, 7, 11), random_plane(9, 7, 12), random_plane(9, 7, 13));
    let (r, g, b) = (r.map(|v| 0.5 + 0.5 * v), g.map(|v| 0.5 + 0.5 * v), b.map(|v| 0.5 + 0.5 * v));
    let (y, cb, cr) = rgb_to_ycbcr(&r, &g, &b).unwrap();
    let (r2, g2, b2) = ycbcr_to_rgb(&y, &cb, &cr).unwrap();
    for (a, b) in [(&r, &r2), (&g, &g2), (&b, &b2)] {
        assert!(max_abs_diff(a.data(), b.data()) < 1e-10);
    }
}

#[test]
fn bicubic_is_scale_consistent_on_constants() {
    let c = ImagePlane::filled(6, 10, 0.3);
    for s in [0.25, 0.5, 2.0, 3.0] {
        let out = resize_bicubic(&c, s).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_and_correlation_are_adjoint(h in 5usize..12, w in 5usize..12, r in 0usize..3, seed in any::<u64>()) {
        let k = random_kernel(r, seed);
        let x = random_plane(h, w, seed ^ 1);
        let y = random_plane(h, w, seed ^ 2);
        let lhs = convolve_circular(&x, &k).unwrap().dot(&y);
        let rhs = x.dot(&correlate_circular(&y, &k).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn shift_is_adjoint(h in 2usize..12, w in 2usize..12, dx in -20.0f64..20.0, dy in -20.0f64..20.0, seed in any::<u64>()) {
        let x = random_plane(h, w, seed);
        let y = random_plane(h, w, seed ^ 3);
        let lhs = shift_subpixel(&x, dx, dy).dot(&y);
        let rhs = x.dot(&shift_subpixel_adjoint(&y, dx, dy));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn decimation_is_adjoint_exactly(s in 1usize..5, lh in 1usize..6, lw in 1usize..6, seed in any::<u64>()) {
        let x = random_plane(lh * s, lw * s, seed);
        let g = random_plane(lh, lw, seed ^ 4);
        // zero insertion adds no rounding of its own, only the summation order differs
        let lhs = decimate(&x, s).unwrap().dot(&g);
        let rhs = x.dot(&upsample_zero(&g, s).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
    }

    #[test]
    fn gradient_is_adjoint(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        let x = random_plane(h, w, seed);
        let q = GradientPair::new(random_plane(h, w, seed ^ 5), random_plane(h, w, seed ^ 6)).unwrap();
        let lhs = gradient_forward(&x).dot(&q);
        let rhs = x.dot(&gradient_adjoint(&q));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn observation_is_adjoint(s in 1usize..4, lh in 9usize..12, lw in 9usize..12, dx in -4.0f64..4.0, dy in -4.0f64..4.0,
                              sigma in 0.3f64..1.2, seed in any::<u64>()) {
        let spec = DegradationSpec::new(s, Blur::gaussian(sigma), 0.0, 0).unwrap();
        let z = random_plane(lh * s, lw * s, seed);
        let g = random_plane(lh, lw, seed ^ 7);
        let m = Motion::new(dx, dy);
        let lhs = apply_w(&z, m, &spec).unwrap().dot(&g);
        let rhs = z.dot(&apply_w_adjoint(&g, m, &spec).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn integer_shift_round_trips(h in 1usize..10, w in 1usize..10, dx in -9i32..9, dy in -9i32..9, seed in any::<u64>()) {
        let x = random_plane(h, w, seed);
        let back = shift_subpixel_adjoint(&shift_subpixel(&x, dx as f64, dy as f64), dx as f64, dy as f64);
        prop_assert_eq!(back, x);
    }
}
