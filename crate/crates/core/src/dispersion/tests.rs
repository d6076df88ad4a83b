use approx::assert_relative_eq;
use proptest::prelude::*;
use rustfft::FftPlanner;

use super::*;
use crate::constants::ARCSEC;
use crate::data::reference_quartz;

fn constants() -> PhysicalConstants {
    PhysicalConstants::codata()
}

/// Centrosymmetric-like scalar reflection with a real coupling.
fn scalar_reflection(v0: f64, vh: f64, h: f64) -> Reflection {
    Reflection {
        hkl: [1, 1, 0],
        h_magnitude: h,
        factors: StructureFactors {
            nuclear: C64::new(vh, 0.0),
            schwinger: C64::new(0.0, 0.0),
            scale: 1.0,
        },
        v0,
    }
}

fn quartz() -> Reflection {
    let crystal = reference_quartz();
    Reflection::new(&crystal, [1, 1, 0], &constants()).unwrap()
}

fn quartz_no_schwinger() -> Reflection {
    let crystal = reference_quartz().without_schwinger();
    Reflection::new(&crystal, [1, 1, 0], &constants()).unwrap()
}

/// Thick-crystal symmetric Bragg reflectivity from the reduced deviation
/// `eta = (Delta/2 + v0) / |vH|`.
fn darwin_oracle(delta: f64, v0: f64, vh: f64) -> f64 {
    let eta = (delta / 2.0 + v0) / vh.abs();
    if eta.abs() <= 1.0 {
        1.0
    } else {
        let r = eta.abs() - (eta * eta - 1.0).sqrt();
        r * r
    }
}

#[test]
fn forbidden_reflection_refracts_only() {
    let c = constants();
    let refl = scalar_reflection(1e-4, 0.0, 2.5);
    let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(1e6), Centering::Kinematic, &c).unwrap();
    let g = t.at(1e-5, 0.0).unwrap();
    let pots = refl.channel(1.0, 0.0);
    assert!(matches!(solve_branches(&g, pots, &c, 1.0), Err(Error::ForbiddenReflection)));
    let out = exit_field(&g, &refl, &Spinor::polarized(&Vec3::x()), &c).unwrap();
    assert_eq!(out.reflected.norm_sqr(), 0.0);
    assert_relative_eq!(out.transmission, 1.0, epsilon = 1e-14);
    let eps = -1e-4 / (2.0 * c.hbar2_over_2m() * g.wavenumber().powi(2));
    let expect = C64::new(0.0, g.wavenumber() * eps * g.path_length()).exp();
    let got = out.channels[0].amplitudes.transmitted;
    assert!((got - expect).norm() < 1e-12);
}

#[test]
fn secular_residuals_are_small() {
    let c = constants();
    let refl = quartz();
    for kind in [GeometryKind::Bragg, GeometryKind::Laue] {
        let t = GeometryTemplate::new(kind, 2.0, &refl, Thickness::Normal(1e6), Centering::Dynamical, &c).unwrap();
        for i in -20..=20 {
            let g = t.at(i as f64 * 0.2 * ARCSEC, 3.0 * ARCSEC).unwrap();
            let (axis, mag) = schwinger_axis(&g.k0, &g.h).unwrap();
            assert_relative_eq!(axis.norm(), 1.0, epsilon = 1e-14);
            for s in [1.0, -1.0] {
                let b = solve_branches(&g, refl.channel(s, mag), &c, s).unwrap();
                for j in 0..2 {
                    assert!(b.secular_residual(j) <= 1e-12, "{:e}", b.secular_residual(j));
                }
                assert!(b.eps[0].re <= b.eps[1].re);
            }
        }
    }
}

#[test]
fn eps_have_opposite_imaginary_parts_in_total_reflection() {
    let c = constants();
    let refl = scalar_reflection(1e-4, 3e-5, 2.5);
    let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(1e6), Centering::Dynamical, &c).unwrap();
    let g = t.at(0.0, 0.0).unwrap();
    let b = solve_branches(&g, refl.channel(1.0, 0.0), &c, 1.0).unwrap();
    assert!(b.eps[0].im * b.eps[1].im < 0.0);
    // |X|^2 = |b| on the plateau; b = -1 up to the refraction correction
    let ab = g.asymmetry().abs();
    assert_relative_eq!(ab, 1.0, epsilon = 1e-4);
    assert_relative_eq!(b.x[0].norm_sqr(), ab, epsilon = 1e-9);
    assert_relative_eq!(b.x[1].norm_sqr(), ab, epsilon = 1e-9);
}

#[test]
fn scalar_bragg_matches_darwin_oracle() {
    let c = constants();
    let (v0, vh) = (1.04e-4, 3.5e-5);
    let refl = scalar_reflection(v0, vh, 2.5);
    // deep enough for the evanescent wave to vanish within double precision
    let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(5e8), Centering::Dynamical, &c).unwrap();
    let mut worst: f64 = 0.0;
    for i in -400..=400 {
        let theta = i as f64 * 0.005 * ARCSEC;
        let g = t.at(theta, 0.0).unwrap();
        let out = exit_field(&g, &refl, &Spinor::polarized(&Vec3::x()), &c).unwrap();
        let oracle = darwin_oracle(c.hbar2_over_2m() * g.deviation, v0, vh);
        if oracle > 0.999_999 {
            worst = worst.max((out.reflectivity - oracle).abs());
        }
    }
    assert!(worst <= 1e-8, "worst {worst:e}");
}

#[test]
fn darwin_width_helper_matches_scan() {
    let c = constants();
    let refl = quartz();
    let w = darwin_plateau_width(&refl, 1.8, &c);
    assert!(w > 0.3 * ARCSEC && w < 2.0 * ARCSEC, "{}", w / ARCSEC);
}

#[test]
fn darwin_width_stays_finite_at_backscatter() {
    let c = constants();
    let refl = quartz();
    let lambda = refl.d_spacing() * 2.0;
    let w = darwin_plateau_width(&refl, lambda, &c);
    let r = backscatter_acceptance_radius(&refl, lambda, &c);
    assert!(w.is_finite());
    assert_relative_eq!(w, 2.0 * r, max_relative = 1e-12);
    let k = 2.0 * std::f64::consts::PI / lambda;
    let delta = c.hbar2_over_2m() * k * refl.h_magnitude * r * r;
    assert_relative_eq!(delta, 2.0 * refl.factors.nuclear_potential().norm(), max_relative = 1e-12);
}

#[test]
fn bragg_mid_plateau_total_reflection() {
    let c = constants();
    let refl = scalar_reflection(1e-4, 3e-5, 2.5);
    let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(1e9), Centering::Dynamical, &c).unwrap();
    let out = exit_field(&t.at(0.0, 0.0).unwrap(), &refl, &Spinor::polarized(&Vec3::x()), &c).unwrap();
    assert_relative_eq!(out.reflectivity, 1.0, epsilon = 1e-10);
}

#[test]
fn laue_zero_thickness_is_identity() {
    let c = constants();
    let refl = quartz();
    let t = GeometryTemplate::new(GeometryKind::Laue, 2.0, &refl, Thickness::Normal(0.0), Centering::Dynamical, &c).unwrap();
    let u0 = Spinor::polarized(&Vec3::new(0.3, -0.4, 0.8).normalize());
    let out = exit_field(&t.at(1e-6, 2e-6).unwrap(), &refl, &u0, &c).unwrap();
    assert!((out.transmitted - u0).norm_sqr() < 1e-28);
    assert!(out.reflected.norm_sqr() < 1e-28);
}

#[test]
fn zero_incident_spinor_gives_zero_field() {
    let c = constants();
    let refl = quartz();
    let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(1e6), Centering::Dynamical, &c).unwrap();
    let out = exit_field(&t.at(0.0, 0.0).unwrap(), &refl, &Spinor::zero(), &c).unwrap();
    assert_eq!(out.transmitted.norm_sqr(), 0.0);
    assert_eq!(out.reflected.norm_sqr(), 0.0);
}

#[test]
fn pendellosung_period_matches_branch_splitting() {
    let c = constants();
    let (v0, vh) = (1.04e-4, 3.5e-5);
    let refl = scalar_reflection(v0, vh, 2.5);
    let t = GeometryTemplate::new(GeometryKind::Laue, 2.0, &refl, Thickness::Normal(0.0), Centering::Dynamical, &c).unwrap();
    let g0 = t.at(0.0, 0.0).unwrap();
    let b = solve_branches(&g0, refl.channel(1.0, 0.0), &c, 1.0).unwrap();
    let period = 2.0 * std::f64::consts::PI * g0.cos_gamma() / (g0.wavenumber() * (b.eps[0] - b.eps[1]).norm());

    let n = 4096;
    let span = 150.3 * period;
    let dd = span / n as f64;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let mut g = g0.clone();
            g.thickness = Thickness::Normal(i as f64 * dd);
            exit_field(&g, &refl, &Spinor::polarized(&Vec3::x()), &c).unwrap().transmission
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let pad = 16 * n;
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = (0..pad)
        .map(|i| {
            let v = if i < n {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                (samples[i] - mean) * w
            } else {
                0.0
            };
            rustfft::num_complex::Complex::new(v, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
    let mag: Vec<f64> = buf[..pad / 2].iter().map(|z| z.norm()).collect();
    let k = (1..pad / 2 - 1).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let (l, m, r) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
    let kf = k as f64 + 0.5 * (l - r) / (l - 2.0 * m + r);
    let freq = kf / (pad as f64 * dd);
    let measured = 1.0 / freq;
    assert!((measured / period - 1.0).abs() < 1e-3, "{measured} vs {period}");
}

#[test]
fn quartz_channels_split_only_with_schwinger() {
    let c = constants();
    for (refl, split) in [(quartz(), true), (quartz_no_schwinger(), false)] {
        let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(1e6), Centering::Dynamical, &c).unwrap();
        let g = t.at(0.1 * ARCSEC, 0.0).unwrap();
        let (_, mag) = schwinger_axis(&g.k0, &g.h).unwrap();
        let p = solve_branches(&g, refl.channel(1.0, mag), &c, 1.0).unwrap();
        let m = solve_branches(&g, refl.channel(-1.0, mag), &c, -1.0).unwrap();
        let d = (p.eps[0] - m.eps[0]).norm();
        if split {
            assert!(d > 1e-14, "{d:e}");
        } else {
            assert_eq!(d, 0.0);
        }
    }
}

#[test]
fn schwinger_off_leaves_spin_unrotated() {
    let c = constants();
    let refl = quartz_no_schwinger();
    let u0 = Spinor::polarized(&Vec3::x());
    let down = Spinor::polarized(&-Vec3::x());
    for kind in [GeometryKind::Bragg, GeometryKind::Laue] {
        let t = GeometryTemplate::new(kind, 2.0, &refl, Thickness::Normal(1e6), Centering::Dynamical, &c).unwrap();
        for i in -10..=10 {
            let out = exit_field(&t.at(i as f64 * 0.3 * ARCSEC, 1.0 * ARCSEC).unwrap(), &refl, &u0, &c).unwrap();
            assert!(down.dot(&out.reflected).norm() <= 1e-14);
            assert!(down.dot(&out.transmitted).norm() <= 1e-14);
        }
    }
}

#[test]
fn reflectivity_is_continuous_across_plateau_edges() {
    let c = constants();
    let refl = quartz();
    let t = GeometryTemplate::new(GeometryKind::Bragg, 2.0, &refl, Thickness::Normal(1e6), Centering::Dynamical, &c).unwrap();
    let step = 0.002 * ARCSEC;
    let r: Vec<f64> = (-1000..=1000)
        .map(|i| exit_field(&t.at(i as f64 * step, 0.0).unwrap(), &refl, &Spinor::polarized(&Vec3::x()), &c).unwrap().reflectivity)
        .collect();
    for w in r.windows(3) {
        let jump = (w[1] - w[0]).abs();
        let next = (w[2] - w[1]).abs();
        assert!(jump <= 10.0 * next + 1e-3, "{jump} vs {next}");
    }
}

fn random_geometry(kind: GeometryKind, lambda: f64, d: f64, theta: f64, rho: f64) -> (DiffractionGeometry, Reflection) {
    let c = constants();
    let refl = quartz();
    let t = GeometryTemplate::new(kind, lambda, &refl, Thickness::Normal(d), Centering::Dynamical, &c).unwrap();
    (t.at(theta, rho).unwrap(), refl)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn flux_is_conserved(
        laue in any::<bool>(),
        lambda in 1.5f64..5.0,
        d in 1e3f64..1e8,
        theta in -20.0f64..20.0,
        rho in -20.0f64..20.0,
        dir in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        let kind = if laue { GeometryKind::Laue } else { GeometryKind::Bragg };
        let (g, refl) = random_geometry(kind, lambda, d, theta * ARCSEC, rho * ARCSEC);
        prop_assume!(g.is_physical());
        let v = Vec3::new(dir.0, dir.1, dir.2);
        prop_assume!(v.norm() > 1e-3);
        let out = exit_field(&g, &refl, &Spinor::polarized(&v.normalize()), &constants()).unwrap();
        prop_assert!((out.reflectivity + out.transmission - 1.0).abs() <= 1e-10,
            "R + T - 1 = {:e}", out.reflectivity + out.transmission - 1.0);
        prop_assert!(out.max_boundary_residual(kind) <= 1e-12);
    }
}

#[test]
fn laue_branch_fluxes_sum_to_unity() {
    let c = constants();
    for &(d, theta, rho) in &[(1e6, 0.0, 0.0), (3.5e8, 0.4, -0.2), (2e7, -1.5, 0.7)] {
        let (g, refl) = random_geometry(GeometryKind::Laue, 2.0, d, theta * ARCSEC, rho * ARCSEC);
        let u0 = Spinor::polarized(&Vec3::new(1.0, 0.0, 0.0));
        let out = exit_field(&g, &refl, &u0, &c).unwrap();
        let b = out.asymmetry.abs();
        let total: f64 = (0..2)
            .map(|j| out.branch_transmitted[j].norm_sqr() + out.branch_reflected[j].norm_sqr() / b)
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "incoherent flux {total}");
    }
}
