use std::path::Path;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::wavefield::ScanAxis;

fn curve(x: Vec<f64>, p: impl Fn(f64) -> f64, w: impl Fn(f64) -> f64) -> PolarizationCurve {
    let n = x.len();
    PolarizationCurve {
        axis: ScanAxis::Theta,
        px: vec![0.0; n],
        py: x.iter().map(|v| p(*v)).collect(),
        pz: vec![1.0; n],
        weights: x.iter().map(|v| w(*v)).collect(),
        valid: vec![true; n],
        abscissa: x,
        unit: "rad",
    }
}

fn axis(n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

fn second_moment(x: &[f64], w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let m: f64 = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / s;
    x.iter().zip(w).map(|(x, w)| (x - m).powi(2) * w).sum::<f64>() / s
}

#[test]
fn kernel_taps_have_unit_sum() {
    let k = ResolutionKernel::new(3.0).unwrap();
    let t = k.taps(1.0).unwrap();
    assert_eq!(t.len(), 31);
    assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(matches!(k.taps(3.5), Err(Error::KernelUnderResolved { .. })));
    assert!(ResolutionKernel::new(0.0).is_err());
    assert!(ResolutionKernel::new(f64::NAN).is_err());
}

#[test]
fn narrow_kernel_is_nearly_identity() {
    let x = axis(4001, 1.0);
    let step = x[1] - x[0];
    let c = curve(x, |v| (0.5 * v).sin(), |v| (-0.25 * v * v).exp());
    let out = convolve_resolution(&c, &ResolutionKernel::new(step).unwrap()).unwrap();
    for i in 10..c.abscissa.len() - 10 {
        assert!((out.py[i] - c.py[i]).abs() < 1e-6, "{i}");
        assert!((out.weights[i] - c.weights[i]).abs() < 1e-6);
    }
}

#[test]
fn gaussian_widths_add_in_quadrature() {
    let x = axis(2001, 20.0);
    let (w, s) = (1.5, 2.0);
    let c = curve(x.clone(), |_| 0.3, |v| (-0.5 * v * v / (w * w)).exp());
    let out = convolve_resolution(&c, &ResolutionKernel::new(s).unwrap()).unwrap();
    let width = second_moment(&x, &out.weights).sqrt();
    assert_relative_eq!(width, (w * w + s * s).sqrt(), max_relative = 0.01);
    assert!(out.py.iter().all(|p| (p - 0.3).abs() < 1e-12));
}

#[test]
fn polarization_is_intensity_weighted() {
    let x = axis(201, 10.0);
    let c = curve(x, |v| if v < 0.0 { 1.0 } else { -1.0 }, |v| if v < 0.0 { 3.0 } else { 1.0 });
    let out = convolve_resolution(&c, &ResolutionKernel::new(2.0).unwrap()).unwrap();
    // At the step the smeared average leans towards the brighter side.
    assert!(out.py[100] > 0.0);
    assert!(out.py.iter().all(|p| p.abs() <= 1.0 + 1e-12));
}

#[test]
fn invalid_points_carry_no_weight() {
    let x = axis(101, 5.0);
    let mut c = curve(x, |_| 0.5, |_| 1.0);
    c.py[50] = f64::NAN;
    c.valid[50] = false;
    let out = convolve_resolution(&c, &ResolutionKernel::new(0.5).unwrap()).unwrap();
    assert!(out.py.iter().all(|p| (p - 0.5).abs() < 1e-12));
}

#[test]
fn non_uniform_abscissa_is_rejected() {
    let mut c = curve(axis(11, 1.0), |_| 0.0, |_| 1.0);
    c.abscissa[3] += 0.05;
    assert!(convolve_resolution(&c, &ResolutionKernel::new(0.5).unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_preserves_intensity(
        weights in prop::collection::vec(0.0f64..10.0, 8..200),
        sigma_steps in 1.0f64..20.0,
    ) {
        let n = weights.len();
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut c = curve(x, |_| 0.0, |_| 0.0);
        c.weights = weights;
        let out = convolve_resolution(&c, &ResolutionKernel::new(sigma_steps).unwrap()).unwrap();
        let a: f64 = c.weights.iter().sum();
        let b: f64 = out.weights.iter().sum();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}

fn gd_scan(params: [f64; 4], n: usize, noise: f64, seed: u64) -> MeasuredScan {
    let x = axis(n, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let y = x
        .iter()
        .map(|v| {
            gaussian_derivative(*v, params[0], params[1], params[2], params[3])
                + if noise > 0.0 { dist.sample(&mut rng) } else { 0.0 }
        })
        .collect();
    let sigma = (noise > 0.0).then(|| vec![noise; n]);
    MeasuredScan::new(x, y, sigma).unwrap()
}

#[test]
fn noiseless_gaussian_derivative_is_recovered() {
    let truth = [0.8, 0.3, 1.2, -0.05];
    let fit = fit_gaussian_derivative(&gd_scan(truth, 61, 0.0, 0)).unwrap();
    assert!(fit.converged);
    for (v, t) in fit.values.iter().zip(truth) {
        assert!((v - t).abs() < 1e-8, "{v} vs {t}");
    }
}

#[test]
fn fit_residuals_are_orthogonal_to_jacobian() {
    let scan = gd_scan([0.5, -0.2, 0.9, 0.1], 41, 0.02, 7);
    let fit = fit_gaussian_derivative(&scan).unwrap();
    let [a, x0, w, _] = [fit.values[0], fit.values[1], fit.values[2], fit.values[3]];
    let mut g = [0.0; 4];
    for (x, y) in scan.x.iter().zip(&scan.value) {
        let u = x - x0;
        let e = (-0.5 * u * u / (w * w)).exp();
        let r = gaussian_derivative(*x, a, x0, w, fit.values[3]) - y;
        let cols = [u * e, a * e * (u * u / (w * w) - 1.0), a * u * e * u * u / (w * w * w), 1.0];
        for k in 0..4 {
            g[k] += cols[k] * r;
        }
    }
    for v in g {
        assert!(v.abs() < 1e-8, "{g:?}");
    }
}

#[test]
fn monte_carlo_bias_is_within_reported_uncertainty() {
    let truth = [1.0, 0.2, 1.0, 0.0];
    let noise = 0.05 * 1.0 * (-0.5f64).exp();
    let fits: Vec<FitReport> = (0..100).map(|s| fit_gaussian_derivative(&gd_scan(truth, 51, noise, s)).unwrap()).collect();
    for k in 0..4 {
        let mean = fits.iter().map(|f| f.values[k]).sum::<f64>() / fits.len() as f64;
        let sigma = fits.iter().map(|f| f.covariance[k][k].sqrt()).sum::<f64>() / fits.len() as f64;
        assert!((mean - truth[k]).abs() < sigma, "param {k}: bias {} vs sigma {sigma}", mean - truth[k]);
        let spread = (fits.iter().map(|f| (f.values[k] - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!(spread < 1.5 * sigma && spread > 0.67 * sigma, "param {k}: spread {spread} vs {sigma}");
    }
}

#[test]
fn flat_data_gives_amplitude_consistent_with_zero() {
    let scan = gd_scan([0.0, 0.0, 1.0, 0.4], 51, 0.01, 3);
    match fit_gaussian_derivative(&scan) {
        Ok(fit) => {
            let a = fit.value("amplitude").unwrap();
            let s = fit.sigma("amplitude").unwrap();
            assert!(a.abs() < 3.0 * s || a.abs() < 1e-2, "A = {a} +- {s}");
        }
        Err(e) => assert!(matches!(e, Error::NoConvergence { .. })),
    }
}

#[test]
fn too_few_points_are_rejected() {
    let scan = MeasuredScan::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0; 4], None).unwrap();
    assert!(fit_gaussian_derivative(&scan).is_err());
}

#[test]
fn exact_line_is_recovered() {
    let x = axis(11, 3.0);
    let y = x.iter().map(|v| 2.5 * v - 0.75).collect();
    let fit = linear_fit(&MeasuredScan::new(x, y, None).unwrap()).unwrap();
    assert!((fit.values[0] - 2.5).abs() < 1e-12);
    assert!((fit.values[1] + 0.75).abs() < 1e-12);
    assert!(fit.chi2 < 1e-20);
}

#[test]
fn zero_slope_is_within_uncertainty() {
    let x = axis(41, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = Normal::new(0.0, 0.1).unwrap();
    let y = x.iter().map(|_| 0.2 + d.sample(&mut rng)).collect();
    let fit = linear_fit(&MeasuredScan::new(x, y, Some(vec![0.1; 41])).unwrap()).unwrap();
    assert!(fit.values[0].abs() < 3.0 * fit.sigma("slope").unwrap());
}

#[test]
fn degenerate_abscissa_fails_linear_fit() {
    let scan = MeasuredScan::new(vec![1.0; 5], vec![0.0, 1.0, 2.0, 3.0, 4.0], None).unwrap();
    assert!(linear_fit(&scan).is_err());
}

fn coil(tilt_deg: f64, guide: f64) -> CoilModel {
    CoilModel::new(tilt_deg * DEGREE, guide, 1.8, CoilModel::DEFAULT_PATH_LENGTH, &PhysicalConstants::codata()).unwrap()
}

#[test]
fn coil_is_calibrated_at_zero_divergence() {
    for g in [0.0, 1e-3] {
        let m = coil(5.0, g);
        assert_eq!(coil_tilt_phase(&m, 0.0).unwrap(), 0.0);
        assert_relative_eq!(m.precession(0.0).unwrap(), FRAC_PI_2, max_relative = 1e-15);
    }
    let m = coil(5.0, 0.0);
    assert_relative_eq!(m.gamma * m.coil_field * m.path_length / m.speed, FRAC_PI_2, max_relative = 1e-12);
}

#[test]
fn coil_phase_matches_printed_expression() {
    let m = coil(5.0, 0.0);
    let (t, a) = (5.0 * DEGREE, 1.0 * DEGREE);
    let expected = FRAC_PI_2 * (1.0 / t.cos() - 1.0 / (t - a).cos());
    assert_relative_eq!(coil_tilt_phase(&m, a).unwrap(), expected, max_relative = 1e-14);
    let g = coil(5.0, 1e-3);
    assert_relative_eq!(
        coil_tilt_phase(&g, a).unwrap(),
        expected * (1.0 + 1e-3 / g.coil_field),
        max_relative = 1e-14
    );
}

#[test]
fn coil_phase_is_even_in_alpha_for_vanishing_tilt() {
    let m = coil(1e-4, 0.0);
    for a in [0.005, 0.01, 0.02] {
        let p = coil_tilt_phase(&m, a).unwrap();
        let q = coil_tilt_phase(&m, -a).unwrap();
        assert!((p - q).abs() < 0.05 * p.abs(), "{p} {q}");
        assert_relative_eq!(p, -FRAC_PI_2 * a * a / 2.0, max_relative = 0.05);
    }
}

#[test]
fn coil_domain_is_checked() {
    let m = coil(5.0, 0.0);
    assert!(coil_tilt_phase(&m, 95.0 * DEGREE).is_err());
    assert!(CoilModel::new(FRAC_PI_2, 0.0, 1.8, 0.1, &PhysicalConstants::codata()).is_err());
    assert!(CoilModel::new(0.1, -1.0, 1.8, 0.1, &PhysicalConstants::codata()).is_err());
}

#[test]
fn coil_slope_is_recovered_by_linear_fit() {
    let m = coil(5.0, 1e-3);
    let alphas: Vec<f64> = axis(21, 1.0).iter().map(|a| a * DEGREE).collect();
    let model_slope = {
        let clean = synthetic_coil_scan(&m, &alphas, 0.0, 0).unwrap();
        linear_fit(&clean).unwrap().values[0]
    };
    let mut hits = 0;
    for seed in 0..100 {
        let fit = linear_fit(&synthetic_coil_scan(&m, &alphas, 2e-3, seed).unwrap()).unwrap();
        if (fit.values[0] - model_slope).abs() < fit.sigma("slope").unwrap() {
            hits += 1;
        }
    }
    // About 68% of repeats fall within one sigma.
    assert!((55..=80).contains(&hits), "{hits}");
}

#[test]
fn synthetic_scans_are_reproducible() {
    let m = coil(5.0, 0.0);
    let a = [0.0, 0.01, 0.02];
    assert_eq!(synthetic_coil_scan(&m, &a, 1e-3, 9).unwrap(), synthetic_coil_scan(&m, &a, 1e-3, 9).unwrap());
}

fn parse(text: &str) -> Result<MeasuredScan> {
    parse_scan(text, Path::new("scan.csv"))
}

#[test]
fn minimal_scan_parses() {
    let s = parse("abscissa_unit,rad\nx,value\n0.0,1.0\n0.1,2.0\n").unwrap();
    assert_eq!(s.x, vec![0.0, 0.1]);
    assert_eq!(s.value, vec![1.0, 2.0]);
    assert!(s.sigma.is_none());
}

#[test]
fn arcsec_abscissa_is_converted() {
    let s = parse("# wavelength: 1.8\n# note\nabscissa_unit,arcsec\nx,value,sigma\n-1.5,0.2,0.01\n3,0.1,0.02\n").unwrap();
    assert_relative_eq!(s.x[0], -1.5 * ARCSEC, max_relative = 1e-15);
    assert_relative_eq!(s.x[1], 3.0 * ARCSEC, max_relative = 1e-15);
    assert_eq!(s.unit, AngleUnit::Arcsec);
    assert_eq!(s.sigma, Some(vec![0.01, 0.02]));
    assert_eq!(s.metadata.get("wavelength").map(String::as_str), Some("1.8"));
}

#[test]
fn text_in_numeric_column_names_the_line() {
    let err = parse("abscissa_unit,deg\nx,value\n0.0,1.0\n0.5,abc\n").unwrap_err();
    match err {
        Error::Parse { line, msg, .. } => {
            assert_eq!(line, 4);
            assert!(msg.contains("value"), "{msg}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn malformed_files_are_rejected() {
    assert!(parse("").is_err());
    assert!(parse("abscissa_unit,furlong\nx,value\n0,1\n").is_err());
    assert!(parse("abscissa_unit,deg\nx,sigma\n0,1\n").is_err());
    assert!(parse("abscissa_unit,deg\nx,value\n").is_err());
    assert!(parse("abscissa_unit,deg\nx,value,sigma\n0,1,-2\n").is_err());
    assert!(parse("abscissa_unit,deg\nx,value\n0\n").is_err());
}

#[test]
fn fit_report_serializes_to_json() {
    let x = axis(5, 1.0);
    let fit = linear_fit(&MeasuredScan::new(x.clone(), x, None).unwrap()).unwrap();
    let json = serde_json::to_value(&fit).unwrap();
    assert_eq!(json["names"][0], "slope");
    assert_eq!(json["covariance"].as_array().unwrap().len(), 2);
    assert_eq!(json["converged"], true);
}
