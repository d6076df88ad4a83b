//! C interface to the spinorbit simulator.
//!
//! Crystals and wave grids are opaque handles, created by the `so_*`
//! constructors and released with the matching `_free`. Every fallible
//! call returns an [`SoStatus`]; the message of the last failure on the
//! calling thread is copied out by [`so_last_error`]. Enumerated
//! arguments are passed as `uint32_t` holding a value of the matching
//! `So*` enum, and out-of-range values are rejected.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use spinorbit::crystal::CrystalModel;
use spinorbit::dispersion::{
    backscatter_acceptance_radius, darwin_plateau_width, Centering, GeometryKind, GeometryTemplate, Reflection,
    Thickness,
};
use spinorbit::instrument::{coil_tilt_phase, CoilModel};
use spinorbit::oam::{
    branch_interference_distribution, interference_distribution, mixture_distribution, oam_distribution,
    AzimuthalField, OamDistribution, PolarOptions,
};
use spinorbit::run::{run_file, run_preset, RunOptions};
use spinorbit::wavefield::{
    grid_scan, phase_map, winding_number, AxisSpec, Beam, Coherence, SpinComponent, SquareLoop, WaveGrid,
};
use spinorbit::{ErrorKind, PhysicalConstants, Spinor, Vec3};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Physics = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoGeometry {
    Bragg = 0,
    Laue = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoBeam {
    Reflected = 0,
    Transmitted = 1,
}

/// Spin component relative to the incident polarization.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoComponent {
    NonFlipped = 0,
    Flipped = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoCoherence {
    Coherent = 0,
    PendellosungAveraged = 1,
}

/// A (rocking, tilt) scan around the dynamical centre of a reflection.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SoScan {
    /// An `SoGeometry` value.
    pub geometry: u32,
    pub hkl: [i32; 3],
    /// Slab thickness along the surface normal (um).
    pub thickness_um: f64,
    /// Wavelength (A).
    pub wavelength: f64,
    /// Half ranges of the rocking and tilt axes (rad).
    pub theta_half_width: f64,
    pub rho_half_width: f64,
    pub n_theta: usize,
    pub n_rho: usize,
    /// Incident polarization direction, lab frame (x along the beam).
    pub polarization: [f64; 3],
}

/// Opaque crystal model.
pub struct SoCrystal(CrystalModel);

/// Opaque grid of exit spinor fields.
pub struct SoGrid(WaveGrid);

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(spinorbit::Error),
}

impl From<spinorbit::Error> for Fail {
    fn from(e: spinorbit::Error) -> Self {
        Fail::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SoStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return SoStatus::Ok,
        Ok(Err(Fail::Null(what))) => (SoStatus::NullPointer, format!("null pointer: {what}")),
        Ok(Err(Fail::Arg(m))) => (SoStatus::InvalidArgument, m),
        Ok(Err(Fail::Core(e))) => {
            let s = match e.kind() {
                ErrorKind::Config => SoStatus::Config,
                ErrorKind::Physics => SoStatus::Physics,
                ErrorKind::Io => SoStatus::Io,
            };
            (s, e.to_string())
        }
        Err(_) => (SoStatus::Panic, "internal panic".to_string()),
    };
    set_error(msg);
    status
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: callers pass pointers obtained from this library or valid C objects.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: as above, for caller-owned output slots.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn c_str(p: *const c_char, what: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and NUL-terminated by contract.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

fn opt_path(p: *const c_char, what: &'static str) -> Result<Option<PathBuf>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        c_str(p, what).map(|s| Some(PathBuf::from(s)))
    }
}

fn beam(v: u32) -> Result<Beam, Fail> {
    match v {
        0 => Ok(Beam::Reflected),
        1 => Ok(Beam::Transmitted),
        _ => Err(Fail::Arg(format!("beam {v} is not an SoBeam"))),
    }
}

fn component(v: u32) -> Result<SpinComponent, Fail> {
    match v {
        0 => Ok(SpinComponent::NonFlipped),
        1 => Ok(SpinComponent::Flipped),
        _ => Err(Fail::Arg(format!("component {v} is not an SoComponent"))),
    }
}

fn coherence(v: u32) -> Result<Coherence, Fail> {
    match v {
        0 => Ok(Coherence::Coherent),
        1 => Ok(Coherence::PendellosungAveraged),
        _ => Err(Fail::Arg(format!("coherence {v} is not an SoCoherence"))),
    }
}

fn reflection(c: &SoCrystal, hkl: *const i32) -> Result<Reflection, Fail> {
    if hkl.is_null() {
        return Err(Fail::Null("hkl"));
    }
    // SAFETY: hkl points to three integers by contract.
    let h = unsafe { std::slice::from_raw_parts(hkl, 3) };
    Ok(Reflection::new(&c.0, [h[0], h[1], h[2]], &PhysicalConstants::codata())?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn so_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// always NUL-terminated when `len > 0`). Returns the full message length
/// without the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn so_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// The bundled alpha-quartz model.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with `so_crystal_free`.
#[no_mangle]
pub unsafe extern "C" fn so_crystal_quartz(out: *mut *mut SoCrystal) -> SoStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        *slot = Box::into_raw(Box::new(SoCrystal(spinorbit::data::reference_quartz())));
        Ok(())
    })
}

/// Loads a material file (or `builtin:quartz`) searched on the data path,
/// with an optional form-factor table (null for the bundled one).
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_crystal_load(
    material: *const c_char,
    form_factors: *const c_char,
    out: *mut *mut SoCrystal,
) -> SoStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let m = c_str(material, "material")?;
        let ff = opt_path(form_factors, "form_factors")?;
        let crystal = spinorbit::data::load_crystal(&m, ff.as_deref())?;
        *slot = Box::into_raw(Box::new(SoCrystal(crystal)));
        Ok(())
    })
}

/// # Safety
/// `crystal` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn so_crystal_free(crystal: *mut SoCrystal) {
    if !crystal.is_null() {
        drop(Box::from_raw(crystal));
    }
}

/// Darwin plateau width (rad) of reflection `hkl[3]` at `wavelength` (A).
///
/// # Safety
/// Pointers must be valid; `hkl` points to three integers.
#[no_mangle]
pub unsafe extern "C" fn so_darwin_width(
    crystal: *const SoCrystal,
    hkl: *const i32,
    wavelength: f64,
    out: *mut f64,
) -> SoStatus {
    guard(|| {
        let c = non_null(crystal, "crystal")?;
        let slot = out_ref(out, "out")?;
        *slot = darwin_plateau_width(&reflection(c, hkl)?, wavelength, &PhysicalConstants::codata());
        Ok(())
    })
}

/// Angular acceptance radius (rad) at exact backscattering.
///
/// # Safety
/// Pointers must be valid; `hkl` points to three integers.
#[no_mangle]
pub unsafe extern "C" fn so_acceptance_radius(
    crystal: *const SoCrystal,
    hkl: *const i32,
    wavelength: f64,
    out: *mut f64,
) -> SoStatus {
    guard(|| {
        let c = non_null(crystal, "crystal")?;
        let slot = out_ref(out, "out")?;
        *slot = backscatter_acceptance_radius(&reflection(c, hkl)?, wavelength, &PhysicalConstants::codata());
        Ok(())
    })
}

/// Builds the exit-field grid of a scan.
///
/// # Safety
/// Pointers must be valid; the handle is released with `so_grid_free`.
#[no_mangle]
pub unsafe extern "C" fn so_grid_scan(crystal: *const SoCrystal, scan: *const SoScan, out: *mut *mut SoGrid) -> SoStatus {
    guard(|| {
        let c = non_null(crystal, "crystal")?;
        let s = non_null(scan, "scan")?;
        let slot = out_ref(out, "out")?;
        let kind = match s.geometry {
            0 => GeometryKind::Bragg,
            1 => GeometryKind::Laue,
            v => return Err(Fail::Arg(format!("geometry {v} is not an SoGeometry"))),
        };
        let p = Vec3::new(s.polarization[0], s.polarization[1], s.polarization[2]);
        if !(p.norm() > 0.0) || !p.iter().all(|v| v.is_finite()) {
            return Err(Fail::Arg("polarization must be a finite non-zero vector".into()));
        }
        let constants = PhysicalConstants::codata();
        let refl = Reflection::new(&c.0, s.hkl, &constants)?;
        let template = GeometryTemplate::new(
            kind,
            s.wavelength,
            &refl,
            Thickness::Normal(s.thickness_um * 1e4),
            Centering::Dynamical,
            &constants,
        )?;
        let theta = AxisSpec::symmetric(s.theta_half_width, s.n_theta)?;
        let rho = AxisSpec::symmetric(s.rho_half_width, s.n_rho)?;
        let grid = grid_scan(&template, &refl, &Spinor::polarized(&p), theta, rho, &constants)?;
        *slot = Box::into_raw(Box::new(SoGrid(grid)));
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn so_grid_free(grid: *mut SoGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_grid_shape(grid: *const SoGrid, n_theta: *mut usize, n_rho: *mut usize) -> SoStatus {
    guard(|| {
        let g = non_null(grid, "grid")?;
        *out_ref(n_theta, "n_theta")? = g.0.n_theta();
        *out_ref(n_rho, "n_rho")? = g.0.n_rho();
        Ok(())
    })
}

/// Grid-integrated non-flipped and flipped flux of one beam.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_grid_spin_flux(
    grid: *const SoGrid,
    beam_: u32,
    coherence_: u32,
    non_flipped: *mut f64,
    flipped: *mut f64,
) -> SoStatus {
    guard(|| {
        let g = non_null(grid, "grid")?;
        let (nf, fl) = g.0.integrated_spin_flux(beam(beam_)?, coherence(coherence_)?);
        *out_ref(non_flipped, "non_flipped")? = nf;
        *out_ref(flipped, "flipped")? = fl;
        Ok(())
    })
}

/// Winding number of a spin component's phase along the square loop of
/// half width `half_width` cells around the grid centre.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_grid_winding(
    grid: *const SoGrid,
    beam_: u32,
    component_: u32,
    half_width: usize,
    out: *mut i64,
) -> SoStatus {
    guard(|| {
        let g = non_null(grid, "grid")?;
        let slot = out_ref(out, "out")?;
        let map = phase_map(&g.0, component(component_)?, beam(beam_)?);
        *slot = winding_number(&map, &SquareLoop::centered(&map, half_width))?;
        Ok(())
    })
}

fn write_distribution(d: &OamDistribution, p: *mut f64, p_len: usize, mean: *mut f64) -> Result<(), Fail> {
    if p_len != d.p.len() {
        return Err(Fail::Arg(format!("p_len must be 2 * truncation + 1 = {}", d.p.len())));
    }
    if p.is_null() {
        return Err(Fail::Null("p"));
    }
    // SAFETY: p points to p_len writable doubles by contract.
    unsafe { std::slice::from_raw_parts_mut(p, p_len) }.copy_from_slice(&d.p);
    *out_ref(mean, "mean")? = d.mean;
    Ok(())
}

fn polar(n_r: usize, n_phi: usize) -> PolarOptions {
    PolarOptions {
        n_r,
        n_phi,
        ..PolarOptions::default()
    }
}

fn branches(g: &WaveGrid, b: Beam, c: SpinComponent, o: &PolarOptions) -> spinorbit::Result<Vec<AzimuthalField>> {
    (0..2).map(|j| AzimuthalField::from_grid_branch(g, b, c, j, o)).collect()
}

/// OAM distribution `p[l]`, `l = -truncation..=truncation`, of one spin
/// component on an `n_r` x `n_phi` polar grid centred on the scan centre.
///
/// # Safety
/// `p` must point to `p_len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_grid_oam(
    grid: *const SoGrid,
    beam_: u32,
    component_: u32,
    coherence_: u32,
    truncation: i64,
    n_r: usize,
    n_phi: usize,
    p: *mut f64,
    p_len: usize,
    mean: *mut f64,
) -> SoStatus {
    guard(|| {
        let g = &non_null(grid, "grid")?.0;
        let (b, c) = (beam(beam_)?, component(component_)?);
        let o = polar(n_r, n_phi);
        let d = match coherence(coherence_)? {
            Coherence::Coherent => oam_distribution(&AzimuthalField::from_grid(g, b, c, &o)?, truncation)?,
            Coherence::PendellosungAveraged => mixture_distribution(&branches(g, b, c, &o)?, truncation)?,
        };
        write_distribution(&d, p, p_len, mean)
    })
}

/// Distribution of the spin interference term `conj(psi_+) psi_-`.
///
/// # Safety
/// `p` must point to `p_len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_grid_interference(
    grid: *const SoGrid,
    beam_: u32,
    coherence_: u32,
    truncation: i64,
    n_r: usize,
    n_phi: usize,
    p: *mut f64,
    p_len: usize,
    mean: *mut f64,
) -> SoStatus {
    guard(|| {
        let g = &non_null(grid, "grid")?.0;
        let b = beam(beam_)?;
        let o = polar(n_r, n_phi);
        let (nf, fl) = (SpinComponent::NonFlipped, SpinComponent::Flipped);
        let d = match coherence(coherence_)? {
            Coherence::Coherent => interference_distribution(
                &AzimuthalField::from_grid(g, b, nf, &o)?,
                &AzimuthalField::from_grid(g, b, fl, &o)?,
                truncation,
            )?,
            Coherence::PendellosungAveraged => {
                branch_interference_distribution(&branches(g, b, nf, &o)?, &branches(g, b, fl, &o)?, truncation)?
            }
        };
        write_distribution(&d, p, p_len, mean)
    })
}

/// Extra precession (rad) of a coil tilted by `tilt` (rad) for a neutron
/// diverging by `alpha` (rad), with guide field `guide_field` (T).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn so_coil_phase(
    tilt: f64,
    alpha: f64,
    guide_field: f64,
    wavelength: f64,
    path_length: f64,
    out: *mut f64,
) -> SoStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let model = CoilModel::new(tilt, guide_field, wavelength, path_length, &PhysicalConstants::codata())?;
        *slot = coil_tilt_phase(&model, alpha)?;
        Ok(())
    })
}

/// Runs a configuration file; `out_dir` (nullable) overrides its output
/// directory.
///
/// # Safety
/// Strings must be null (where allowed) or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn so_run_config(path: *const c_char, out_dir: *const c_char, seed: u64) -> SoStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        let opts = RunOptions {
            out_dir: opt_path(out_dir, "out_dir")?,
            seed,
        };
        run_file(&path, &opts)?;
        Ok(())
    })
}

/// Runs a shipped preset.
///
/// # Safety
/// Strings must be null (where allowed) or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn so_run_preset(name: *const c_char, out_dir: *const c_char, seed: u64) -> SoStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        let opts = RunOptions {
            out_dir: opt_path(out_dir, "out_dir")?,
            seed,
        };
        run_preset(&name, &opts)?;
        Ok(())
    })
}
