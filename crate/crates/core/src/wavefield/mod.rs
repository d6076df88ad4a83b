//! Exit fields over (rocking, tilt) grids and the quantities read off them:
//! polarization curves and maps, spin-component phase maps and vortex
//! winding numbers.
//!
//! Grids are stored row-major with rocking `theta` varying fastest, so row
//! `j` holds all `theta` values at tilt `rho[j]`. With `k_y = K theta` and
//! `k_z = K rho` a row is a horizontal line of the transverse momentum
//! plane.

mod io;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{read_binary, write_binary, write_csv, BINARY_HEADER_LEN, BINARY_MAGIC};

use crate::constants::PhysicalConstants;
use crate::dispersion::{exit_field, GeometryKind, GeometryTemplate, Reflection};
use crate::error::{Error, Result};
use crate::spinor::{Spinor, Vec3, C64};

/// Uniform axis `start..=end` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub start: f64,
    pub end: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn new(start: f64, end: f64, n: usize) -> Result<Self> {
        let a = Self { start, end, n };
        a.validate()?;
        Ok(a)
    }

    /// Symmetric axis `-half..=half`.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        Self::new(-half, half, n)
    }

    fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::InvalidArgument("axis range must be finite".into()));
        }
        match self.n {
            0 => Err(Error::InvalidArgument("axis needs at least one point".into())),
            1 => Ok(()),
            _ if self.end > self.start => Ok(()),
            _ => Err(Error::InvalidArgument(format!(
                "axis must be increasing ({} .. {})",
                self.start, self.end
            ))),
        }
    }

    pub fn step(&self) -> f64 {
        if self.n > 1 {
            (self.end - self.start) / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n)
            .map(|i| if i + 1 == self.n && self.n > 1 { self.end } else { self.start + h * i as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beam {
    Reflected,
    Transmitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Theta,
    Rho,
}

/// Spin component relative to the incident polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinComponent {
    NonFlipped,
    Flipped,
}

/// How the two Bloch-wave branches are combined in derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coherence {
    /// The full coherent exit field.
    #[default]
    Coherent,
    /// Incoherent sum over branches, i.e. averaged over the Pendellosung
    /// oscillation. Meant for thick crystals whose Pendellosung phase is
    /// far finer than any affordable grid.
    PendellosungAveraged,
}

/// Where a grid came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub crystal: String,
    pub hkl: [i32; 3],
    pub wavelength: f64,
    pub kind: GeometryKind,
    /// Thickness value (A) and whether it is a path length.
    pub thickness: f64,
    pub path_thickness: bool,
    /// Glancing angle at the grid centre (rad).
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveGrid {
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub incident: Spinor,
    pub transmitted: Vec<Spinor>,
    pub reflected: Vec<Spinor>,
    /// Branch-resolved fields, see [`crate::dispersion::ExitField`].
    pub branch_transmitted: [Vec<Spinor>; 2],
    pub branch_reflected: [Vec<Spinor>; 2],
    /// `|b_asym|` per point, for flux weighting of the reflected beam.
    pub asymmetry: Vec<f64>,
    /// False where the beam cannot physically enter/leave as assumed.
    pub physical: Vec<bool>,
    /// Number of points whose evaluation failed (stored as NaN).
    pub failures: usize,
    /// Largest boundary residual found by the post-build spot check.
    pub spot_check_residual: f64,
    pub metadata: Option<GridMetadata>,
}

impl WaveGrid {
    /// Empty-metadata grid from raw fields, for analysis of external or
    /// synthetic data.
    pub fn from_fields(
        theta: Vec<f64>,
        rho: Vec<f64>,
        incident: Spinor,
        transmitted: Vec<Spinor>,
        reflected: Vec<Spinor>,
    ) -> Result<Self> {
        let n = theta.len() * rho.len();
        if transmitted.len() != n || reflected.len() != n {
            return Err(Error::GridMismatch(format!(
                "{} x {} grid needs {n} spinors per beam",
                theta.len(),
                rho.len()
            )));
        }
        check_uniform(&theta)?;
        check_uniform(&rho)?;
        Ok(Self {
            theta,
            rho,
            incident,
            branch_transmitted: [transmitted.clone(), vec![Spinor::zero(); n]],
            branch_reflected: [reflected.clone(), vec![Spinor::zero(); n]],
            transmitted,
            reflected,
            asymmetry: vec![1.0; n],
            physical: vec![true; n],
            failures: 0,
            spot_check_residual: 0.0,
            metadata: None,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn index(&self, i_theta: usize, i_rho: usize) -> usize {
        i_rho * self.theta.len() + i_theta
    }

    pub fn beam(&self, beam: Beam) -> &[Spinor] {
        match beam {
            Beam::Reflected => &self.reflected,
            Beam::Transmitted => &self.transmitted,
        }
    }

    pub fn branch(&self, beam: Beam, j: usize) -> &[Spinor] {
        match beam {
            Beam::Reflected => &self.branch_reflected[j],
            Beam::Transmitted => &self.branch_transmitted[j],
        }
    }

    /// The spinor sets whose incoherent sum gives the requested quantity.
    pub fn components(&self, beam: Beam, coherence: Coherence) -> Vec<&[Spinor]> {
        match coherence {
            Coherence::Coherent => vec![self.beam(beam)],
            Coherence::PendellosungAveraged => vec![self.branch(beam, 0), self.branch(beam, 1)],
        }
    }

    fn flux_weight(&self, beam: Beam, i: usize) -> f64 {
        match beam {
            Beam::Reflected => 1.0 / self.asymmetry[i],
            Beam::Transmitted => 1.0,
        }
    }

    /// Flux of `beam` at linear index `i` (reflected flux carries `1/|b|`).
    pub fn flux(&self, beam: Beam, i: usize) -> f64 {
        self.beam(beam)[i].norm_sqr() * self.flux_weight(beam, i)
    }

    /// Polarization axis of the incident spinor (x when it has none).
    pub fn incident_axis(&self) -> Vec3 {
        self.incident.polarization().unwrap_or_else(Vec3::x)
    }

    fn component_basis(&self, component: SpinComponent) -> Spinor {
        let axis = match component {
            SpinComponent::NonFlipped => self.incident_axis(),
            SpinComponent::Flipped => -self.incident_axis(),
        };
        Spinor::polarized(&axis)
    }

    /// Projection of `beam` onto the non-flipped or flipped incident state.
    pub fn spin_amplitudes(&self, beam: Beam, component: SpinComponent) -> Vec<C64> {
        let basis = self.component_basis(component);
        self.beam(beam).iter().map(|s| basis.dot(s)).collect()
    }

    /// As [`WaveGrid::spin_amplitudes`] for a single branch.
    pub fn branch_spin_amplitudes(&self, beam: Beam, component: SpinComponent, j: usize) -> Vec<C64> {
        let basis = self.component_basis(component);
        self.branch(beam, j).iter().map(|s| basis.dot(s)).collect()
    }

    /// Flux summed over the physical grid points of `beam`, split into
    /// (non-flip, flip).
    pub fn integrated_spin_flux(&self, beam: Beam, coherence: Coherence) -> (f64, f64) {
        let up = self.component_basis(SpinComponent::NonFlipped);
        let down = self.component_basis(SpinComponent::Flipped);
        let mut out = (0.0, 0.0);
        for set in self.components(beam, coherence) {
            for (i, s) in set.iter().enumerate() {
                if !self.physical[i] || !s.is_finite() {
                    continue;
                }
                let w = self.flux_weight(beam, i);
                out.0 += up.dot(s).norm_sqr() * w;
                out.1 += down.dot(s).norm_sqr() * w;
            }
        }
        out
    }
}

fn check_uniform(axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Ok(());
    }
    let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::GridMismatch("axis not strictly increasing".into()));
    }
    for (i, v) in axis.iter().enumerate() {
        if (v - (axis[0] + h * i as f64)).abs() > 1e-12 * (axis[0].abs() + h * axis.len() as f64) {
            return Err(Error::GridMismatch(format!("axis not uniform at index {i}")));
        }
    }
    Ok(())
}

type ExitSpinors = [Spinor; 6];

fn nan_spinor() -> Spinor {
    let n = C64::new(f64::NAN, f64::NAN);
    Spinor::new(n, n)
}

/// Evaluates the exit field at every `(theta, rho)` of the grid.
///
/// Points are computed in parallel into a fixed layout, so the result does
/// not depend on scheduling. A failing point is stored as NaN and logged.
/// After the build a deterministic 1% sample is recomputed and its
/// boundary-condition residual recorded in `spot_check_residual`.
pub fn grid_scan(
    template: &GeometryTemplate,
    reflection: &Reflection,
    u0: &Spinor,
    theta: AxisSpec,
    rho: AxisSpec,
    constants: &PhysicalConstants,
) -> Result<WaveGrid> {
    theta.validate()?;
    rho.validate()?;
    let thetas = theta.values();
    let rhos = rho.values();
    let nt = thetas.len();
    let n = nt * rhos.len();
    let points: Vec<(ExitSpinors, f64, bool, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (t, r) = (thetas[i % nt], rhos[i / nt]);
            match template.at(t, r).and_then(|g| exit_field(&g, reflection, u0, constants)) {
                Ok(f) => (
                    [
                        f.transmitted,
                        f.reflected,
                        f.branch_transmitted[0],
                        f.branch_transmitted[1],
                        f.branch_reflected[0],
                        f.branch_reflected[1],
                    ],
                    f.asymmetry.abs(),
                    f.physical,
                    true,
                ),
                Err(e) => {
                    log::error!("exit field failed at theta = {t:e}, rho = {r:e}: {e}");
                    ([nan_spinor(); 6], f64::NAN, false, false)
                }
            }
        })
        .collect();
    let mut grid = WaveGrid {
        theta: thetas,
        rho: rhos,
        incident: *u0,
        transmitted: Vec::with_capacity(n),
        reflected: Vec::with_capacity(n),
        branch_transmitted: [Vec::with_capacity(n), Vec::with_capacity(n)],
        branch_reflected: [Vec::with_capacity(n), Vec::with_capacity(n)],
        asymmetry: Vec::with_capacity(n),
        physical: Vec::with_capacity(n),
        failures: 0,
        spot_check_residual: 0.0,
        metadata: Some(GridMetadata {
            crystal: String::new(),
            hkl: reflection.hkl,
            wavelength: template.wavelength,
            kind: template.kind,
            thickness: template.thickness.value(),
            path_thickness: matches!(template.thickness, crate::dispersion::Thickness::Path(_)),
            psi: template.psi,
        }),
    };
    for (s, b, p, ok) in points {
        grid.transmitted.push(s[0]);
        grid.reflected.push(s[1]);
        grid.branch_transmitted[0].push(s[2]);
        grid.branch_transmitted[1].push(s[3]);
        grid.branch_reflected[0].push(s[4]);
        grid.branch_reflected[1].push(s[5]);
        grid.asymmetry.push(b);
        grid.physical.push(p);
        if !ok {
            grid.failures += 1;
        }
    }
    grid.spot_check_residual = spot_check(&grid, template, reflection, constants);
    if grid.spot_check_residual > 1e-12 {
        log::warn!(
            "grid spot check: boundary residual {:e} exceeds 1e-12",
            grid.spot_check_residual
        );
    }
    Ok(grid)
}

fn spot_check(grid: &WaveGrid, template: &GeometryTemplate, reflection: &Reflection, constants: &PhysicalConstants) -> f64 {
    let n = grid.transmitted.len();
    let m = n.div_ceil(100);
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let nt = grid.n_theta();
    sample(&mut rng, n, m)
        .into_iter()
        .filter_map(|i| {
            let g = template.at(grid.theta[i % nt], grid.rho[i / nt]).ok()?;
            let f = exit_field(&g, reflection, &grid.incident, constants).ok()?;
            let stored = (f.transmitted - grid.transmitted[i]).norm_sqr().sqrt()
                + (f.reflected - grid.reflected[i]).norm_sqr().sqrt();
            Some(f.max_boundary_residual(template.kind).max(stored))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarizationCurve {
    pub axis: ScanAxis,
    pub abscissa: Vec<f64>,
    /// Unit of `abscissa`.
    pub unit: &'static str,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
    pub pz: Vec<f64>,
    /// Summed flux behind each point.
    pub weights: Vec<f64>,
    /// False where the flux vanishes and P is undefined (NaN).
    pub valid: Vec<bool>,
}

fn accumulate(
    grid: &WaveGrid,
    beam: Beam,
    coherence: Coherence,
    indices: impl Iterator<Item = usize> + Clone,
) -> (Vec3, f64) {
    let mut s = Vec3::zeros();
    let mut w = 0.0;
    for set in grid.components(beam, coherence) {
        for i in indices.clone() {
            if !grid.physical[i] || !set[i].is_finite() {
                continue;
            }
            let scale = grid.flux_weight(beam, i);
            s += set[i].sigma_expectation() * scale;
            w += set[i].norm_sqr() * scale;
        }
    }
    (s, w)
}

/// Polarization of `beam` against `axis`, marginalized over the other axis
/// with flux weights: `P = sum <psi|sigma|psi> / sum <psi|psi>`.
pub fn polarization_curve(grid: &WaveGrid, beam: Beam, axis: ScanAxis, coherence: Coherence) -> PolarizationCurve {
    let (nt, nr) = (grid.n_theta(), grid.n_rho());
    let abscissa = match axis {
        ScanAxis::Theta => grid.theta.clone(),
        ScanAxis::Rho => grid.rho.clone(),
    };
    let mut curve = PolarizationCurve {
        axis,
        abscissa,
        unit: "rad",
        px: Vec::new(),
        py: Vec::new(),
        pz: Vec::new(),
        weights: Vec::new(),
        valid: Vec::new(),
    };
    for k in 0..curve.abscissa.len() {
        let (s, w) = match axis {
            ScanAxis::Theta => accumulate(grid, beam, coherence, (0..nr).map(|j| j * nt + k)),
            ScanAxis::Rho => accumulate(grid, beam, coherence, (0..nt).map(|i| k * nt + i)),
        };
        let p = if w > 0.0 { s / w } else { Vec3::repeat(f64::NAN) };
        curve.px.push(p.x);
        curve.py.push(p.y);
        curve.pz.push(p.z);
        curve.weights.push(w);
        curve.valid.push(w > 0.0);
    }
    curve
}

/// Per-point polarization of one beam; row-major like the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationMap {
    pub n_theta: usize,
    pub n_rho: usize,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
    pub pz: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Polarization at every grid point (unweighted by neighbours).
pub fn polarization_map(grid: &WaveGrid, beam: Beam, coherence: Coherence) -> PolarizationMap {
    let n = grid.transmitted.len();
    let mut map = PolarizationMap {
        n_theta: grid.n_theta(),
        n_rho: grid.n_rho(),
        px: Vec::with_capacity(n),
        py: Vec::with_capacity(n),
        pz: Vec::with_capacity(n),
        valid: Vec::with_capacity(n),
    };
    let sets = grid.components(beam, coherence);
    for i in 0..n {
        let s: Vec3 = sets.iter().map(|set| set[i].sigma_expectation()).sum();
        let w: f64 = sets.iter().map(|set| set[i].norm_sqr()).sum();
        let ok = w > 0.0 && w.is_finite();
        let p = if ok { s / w } else { Vec3::repeat(f64::NAN) };
        map.px.push(p.x);
        map.py.push(p.y);
        map.pz.push(p.z);
        map.valid.push(ok);
    }
    map
}

/// Wrapped phase of one spin component, row-major.
///
/// Each map is expressed in its beam's own transverse frame: the
/// transmitted beam travels along +x and uses `(k_y, k_z)` directly, the
/// reflected beam travels back towards -x and uses `(-k_y, k_z)`, so its
/// theta axis is stored reversed. Winding numbers read off the two maps
/// are therefore both right-handed about the respective direction of
/// travel.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub n_theta: usize,
    pub n_rho: usize,
    /// Phase in (-pi, pi]; NaN where masked.
    pub phase: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub mirrored: bool,
}

/// Amplitudes below this are treated as zero and their phase masked.
pub const PHASE_MASK_THRESHOLD: f64 = 1e-300;

impl PhaseMap {
    /// Phase map of arbitrary complex amplitudes in row-major order.
    pub fn from_amplitudes(n_theta: usize, n_rho: usize, values: &[C64]) -> Result<Self> {
        if values.len() != n_theta * n_rho {
            return Err(Error::GridMismatch(format!(
                "{} values for a {n_theta} x {n_rho} map",
                values.len()
            )));
        }
        let mut phase = Vec::with_capacity(values.len());
        let mut amplitude = Vec::with_capacity(values.len());
        for v in values {
            let a = v.norm();
            amplitude.push(a);
            phase.push(if a > PHASE_MASK_THRESHOLD && a.is_finite() {
                wrap(v.arg())
            } else {
                f64::NAN
            });
        }
        Ok(Self {
            n_theta,
            n_rho,
            phase,
            amplitude,
            mirrored: false,
        })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.phase[j * self.n_theta + i]
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        !self.at(i, j).is_finite()
    }
}

fn wrap(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let w = a - 2.0 * pi * ((a + pi) / (2.0 * pi)).floor();
    if w <= -pi {
        w + 2.0 * pi
    } else {
        w
    }
}

pub fn phase_map(grid: &WaveGrid, component: SpinComponent, beam: Beam) -> PhaseMap {
    let amps = grid.spin_amplitudes(beam, component);
    let (nt, nr) = (grid.n_theta(), grid.n_rho());
    let mirrored = beam == Beam::Reflected;
    let ordered: Vec<C64> = if mirrored {
        (0..nt * nr).map(|k| amps[(k / nt) * nt + (nt - 1 - k % nt)]).collect()
    } else {
        amps
    };
    let mut map = PhaseMap::from_amplitudes(nt, nr, &ordered).expect("grid shape");
    map.mirrored = mirrored;
    map
}

/// Closed square loop on a phase map, traversed counter-clockwise in
/// (theta index, rho index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareLoop {
    pub center: (usize, usize),
    pub half_width: usize,
}

impl SquareLoop {
    /// Loop of the given half width around the map centre.
    pub fn centered(map: &PhaseMap, half_width: usize) -> Self {
        Self {
            center: (map.n_theta / 2, map.n_rho / 2),
            half_width,
        }
    }

    fn vertices(&self, n_theta: usize, n_rho: usize) -> Result<Vec<(usize, usize)>> {
        let (ci, cj) = self.center;
        let h = self.half_width;
        if h == 0 || ci < h || cj < h || ci + h >= n_theta || cj + h >= n_rho {
            return Err(Error::InvalidArgument(format!(
                "loop of half width {h} around ({ci}, {cj}) leaves the {n_theta} x {n_rho} map"
            )));
        }
        let (i0, i1, j0, j1) = (ci - h, ci + h, cj - h, cj + h);
        let mut v = Vec::with_capacity(8 * h);
        v.extend((i0..i1).map(|i| (i, j0)));
        v.extend((j0..j1).map(|j| (i1, j)));
        v.extend((i0 + 1..=i1).rev().map(|i| (i, j1)));
        v.extend((j0 + 1..=j1).rev().map(|j| (i0, j)));
        Ok(v)
    }
}

/// Winding number of the phase along a closed loop: the sum of wrapped
/// phase increments divided by 2 pi.
pub fn winding_number(map: &PhaseMap, path: &SquareLoop) -> Result<i64> {
    let v = path.vertices(map.n_theta, map.n_rho)?;
    winding_along(map, &v)
}

fn winding_along(map: &PhaseMap, v: &[(usize, usize)]) -> Result<i64> {
    let mut total = 0.0;
    for k in 0..v.len() {
        let (a, b) = (v[k], v[(k + 1) % v.len()]);
        for &(i, j) in [a, b].iter() {
            if map.is_masked(i, j) {
                return Err(Error::MaskedLoop(i, j));
            }
        }
        total += wrap(map.at(b.0, b.1) - map.at(a.0, a.1));
    }
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

/// Phase singularity on a grid plaquette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Vortex {
    /// Lower-left corner of the plaquette.
    pub i: usize,
    pub j: usize,
    pub charge: i64,
}

/// All unit plaquettes with non-zero winding; plaquettes touching masked
/// points are skipped.
pub fn find_vortices(map: &PhaseMap) -> Vec<Vortex> {
    let mut out = Vec::new();
    for j in 0..map.n_rho.saturating_sub(1) {
        for i in 0..map.n_theta.saturating_sub(1) {
            let v = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if let Ok(w) = winding_along(map, &v) {
                if w != 0 {
                    out.push(Vortex { i, j, charge: w });
                }
            }
        }
    }
    out
}
