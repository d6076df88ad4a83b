use std::ffi::{CStr, CString};
use std::ptr;

use spinorbit_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe { so_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn quartz() -> *mut SoCrystal {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { so_crystal_quartz(&mut c) }, SoStatus::Ok);
    c
}

fn scan(geometry: SoGeometry, thickness_um: f64, wavelength: f64, half: f64, n: usize) -> SoScan {
    SoScan {
        geometry: geometry as u32,
        hkl: [1, 1, 0],
        thickness_um,
        wavelength,
        theta_half_width: half,
        rho_half_width: half,
        n_theta: n,
        n_rho: n,
        polarization: [1.0, 0.0, 0.0],
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(so_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { so_crystal_quartz(ptr::null_mut()) }, SoStatus::NullPointer);
    assert!(last_error().contains("null"));
    let mut out = 0.0;
    let hkl = [1, 1, 0];
    assert_eq!(
        unsafe { so_darwin_width(ptr::null(), hkl.as_ptr(), 2.0, &mut out) },
        SoStatus::NullPointer
    );
    unsafe {
        so_crystal_free(ptr::null_mut());
        so_grid_free(ptr::null_mut());
    }
}

#[test]
fn physics_errors_map_to_their_status() {
    let c = quartz();
    let mut out = 0.0;
    let zero = [0, 0, 0];
    assert_eq!(unsafe { so_darwin_width(c, zero.as_ptr(), 2.0, &mut out) }, SoStatus::Physics);
    let mut g = ptr::null_mut();
    let too_long = scan(SoGeometry::Bragg, 100.0, 6.0, 1e-5, 3);
    assert_eq!(unsafe { so_grid_scan(c, &too_long, &mut g) }, SoStatus::Physics);
    assert!(g.is_null());
    unsafe { so_crystal_free(c) };
}

#[test]
fn enum_arguments_are_range_checked() {
    let c = quartz();
    let mut g = ptr::null_mut();
    let mut bad = scan(SoGeometry::Bragg, 100.0, 2.0, 1e-5, 3);
    bad.geometry = 9;
    assert_eq!(unsafe { so_grid_scan(c, &bad, &mut g) }, SoStatus::InvalidArgument);
    unsafe { so_crystal_free(c) };
}

#[test]
fn missing_material_is_an_io_error() {
    let m = CString::new("no/such/material.toml").unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { so_crystal_load(m.as_ptr(), ptr::null(), &mut c) }, SoStatus::Io);
    let q = CString::new("builtin:quartz").unwrap();
    assert_eq!(unsafe { so_crystal_load(q.as_ptr(), ptr::null(), &mut c) }, SoStatus::Ok);
    unsafe { so_crystal_free(c) };
}

#[test]
fn backscattering_vortex_through_the_c_api() {
    // the reflected flipped phase chirps radially far faster than this
    // grid resolves, so only the transmitted vortex is checked here
    let c = quartz();
    let s = scan(SoGeometry::Bragg, 10_000.0, 5.0279, 0.5f64.to_radians(), 128);
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { so_grid_scan(c, &s, &mut g) }, SoStatus::Ok, "{}", last_error());
    let (mut nt, mut nr) = (0, 0);
    assert_eq!(unsafe { so_grid_shape(g, &mut nt, &mut nr) }, SoStatus::Ok);
    assert_eq!((nt, nr), (128, 128));
    let winding = |beam: SoBeam, comp: SoComponent| {
        let mut w = 0i64;
        assert_eq!(unsafe { so_grid_winding(g, beam as u32, comp as u32, 30, &mut w) }, SoStatus::Ok);
        w
    };
    assert_eq!(winding(SoBeam::Transmitted, SoComponent::NonFlipped), 0);
    assert_eq!(winding(SoBeam::Reflected, SoComponent::NonFlipped), 0);
    assert_eq!(winding(SoBeam::Transmitted, SoComponent::Flipped), 1);
    unsafe {
        so_grid_free(g);
        so_crystal_free(c);
    }
}

#[test]
fn oam_distribution_has_requested_length() {
    let c = quartz();
    let s = scan(SoGeometry::Laue, 35_000.0, 5.0279, 0.003, 64);
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { so_grid_scan(c, &s, &mut g) }, SoStatus::Ok, "{}", last_error());
    let mut p = vec![0.0; 9];
    let mut mean = 0.0;
    let ok = unsafe {
        so_grid_oam(
            g,
            SoBeam::Transmitted as u32,
            SoComponent::Flipped as u32,
            SoCoherence::PendellosungAveraged as u32,
            4,
            32,
            64,
            p.as_mut_ptr(),
            p.len(),
            &mut mean,
        )
    };
    assert_eq!(ok, SoStatus::Ok, "{}", last_error());
    assert!(p.iter().all(|v| *v >= 0.0) && p.iter().sum::<f64>() <= 1.0 + 1e-9);
    let wrong = unsafe {
        so_grid_interference(g, 1, 1, 4, 32, 64, p.as_mut_ptr(), 8, &mut mean)
    };
    assert_eq!(wrong, SoStatus::InvalidArgument);
    let ok = unsafe { so_grid_interference(g, 1, 1, 4, 32, 64, p.as_mut_ptr(), 9, &mut mean) };
    assert_eq!(ok, SoStatus::Ok);
    assert!(mean.is_finite());
    unsafe {
        so_grid_free(g);
        so_crystal_free(c);
    }
}

#[test]
fn coil_phase_vanishes_without_divergence() {
    let mut out = 1.0;
    let s = unsafe { so_coil_phase(5f64.to_radians(), 0.0, 0.0, 1.8, 0.1, &mut out) };
    assert_eq!(s, SoStatus::Ok);
    assert!(out.abs() < 1e-15);
}

#[test]
fn presets_run_through_the_c_api() {
    let dir = tempfile::tempdir().unwrap();
    let name = CString::new("coil-model").unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { so_run_preset(name.as_ptr(), out.as_ptr(), 1) }, SoStatus::Ok);
    assert!(dir.path().join("summary.json").exists());
    let bad = CString::new("fig99").unwrap();
    assert_eq!(unsafe { so_run_preset(bad.as_ptr(), out.as_ptr(), 1) }, SoStatus::Config);
}
