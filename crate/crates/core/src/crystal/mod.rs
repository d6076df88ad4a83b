//! Crystal description and the spinor-valued Fourier components of the
//! neutron-crystal potential (nuclear Fermi pseudopotential plus the
//! Schwinger spin-orbit term).
//!
//! Potentials are normalized per unit cell: `V(H,K)` carries a `1/V_cell`
//! factor so that `V(0)` is the usual neutron optical potential in meV.

mod material;

use std::f64::consts::PI;

pub use material::{load_form_factors, parse_form_factors, parse_material, FormFactorTable};

use crate::constants::{PhysicalConstants, FM_TO_ANGSTROM};
use crate::error::{Error, Result};
use crate::spinor::{SpinorMatrix, Vec3, C64};

/// Isotropic electronic form factor, normalized so that `f(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum FormFactor {
    /// `f = 1` everywhere: the electron cloud fully screens the nucleus and
    /// the Schwinger term vanishes.
    Screened,
    /// Sum of Gaussians in `s = sin(theta)/lambda = |H|/(4 pi)`,
    /// `f(s) = (sum_i a_i exp(-b_i s^2) + c) / (sum_i a_i + c)`.
    Gaussians { a: Vec<f64>, b: Vec<f64>, c: f64 },
}

impl FormFactor {
    pub fn gaussians(a: Vec<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::InvalidArgument(
                "form factor needs matching, non-empty a/b coefficient lists".into(),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| *v < 0.0) || c < 0.0 {
            return Err(Error::InvalidArgument(
                "form factor coefficients must be non-negative".into(),
            ));
        }
        if a.iter().sum::<f64>() + c <= 0.0 {
            return Err(Error::InvalidArgument("form factor has zero norm".into()));
        }
        Ok(FormFactor::Gaussians { a, b, c })
    }

    /// Evaluates `f(|H|)` with `|H|` in inverse Angstrom.
    pub fn eval(&self, h_mag: f64) -> f64 {
        match self {
            FormFactor::Screened => 1.0,
            FormFactor::Gaussians { a, b, c } => {
                let s2 = (h_mag / (4.0 * PI)).powi(2);
                let num: f64 = a.iter().zip(b).map(|(ai, bi)| ai * (-bi * s2).exp()).sum();
                (num + c) / (a.iter().sum::<f64>() + c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSite {
    pub label: String,
    /// Fractional coordinates.
    pub position: Vec3,
    /// Coherent scattering length (fm).
    pub scattering_length: f64,
    pub atomic_number: u32,
    pub form_factor: FormFactor,
}

impl AtomSite {
    /// Schwinger strength `gamma = (mu e / hbar c) Z (1 - f(|H|))` in fm.
    pub fn schwinger_strength(&self, h_mag: f64, constants: &PhysicalConstants) -> f64 {
        constants.schwinger_length_fm()
            * self.atomic_number as f64
            * (1.0 - self.form_factor.eval(h_mag))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalModel {
    pub id: String,
    /// Lattice vectors a1, a2, a3 (A), Cartesian.
    pub lattice: [Vec3; 3],
    pub sites: Vec<AtomSite>,
    volume: f64,
}

impl CrystalModel {
    pub fn new(id: impl Into<String>, lattice: [Vec3; 3], sites: Vec<AtomSite>) -> Result<Self> {
        let volume = lattice[0].dot(&lattice[1].cross(&lattice[2])).abs();
        let scale = lattice.iter().map(|a| a.norm()).product::<f64>();
        if !(volume > 1e-10 * scale) || !volume.is_finite() {
            return Err(Error::DegenerateLattice(volume));
        }
        Ok(Self {
            id: id.into(),
            lattice,
            sites,
            volume,
        })
    }

    /// Hexagonal cell with `a1 = a x`, `a2 = a(-1/2, sqrt(3)/2, 0)`, `a3 = c z`.
    pub fn hexagonal_lattice(a: f64, c: f64) -> [Vec3; 3] {
        [
            Vec3::new(a, 0.0, 0.0),
            Vec3::new(-0.5 * a, 0.5 * 3f64.sqrt() * a, 0.0),
            Vec3::new(0.0, 0.0, c),
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume
    }

    /// Cartesian position (A) of a site.
    pub fn cartesian(&self, site: &AtomSite) -> Vec3 {
        self.lattice[0] * site.position.x
            + self.lattice[1] * site.position.y
            + self.lattice[2] * site.position.z
    }

    pub fn reciprocal_basis(&self) -> [Vec3; 3] {
        let [a1, a2, a3] = &self.lattice;
        let v = a1.dot(&a2.cross(a3));
        let f = 2.0 * PI / v;
        [a2.cross(a3) * f, a3.cross(a1) * f, a1.cross(a2) * f]
    }

    /// Copy of the crystal with every Schwinger strength forced to zero.
    pub fn without_schwinger(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.sites {
            s.form_factor = FormFactor::Screened;
        }
        out
    }

    /// Copy with all scattering lengths multiplied by `s`.
    pub fn with_scaled_scattering_lengths(&self, s: f64) -> Self {
        let mut out = self.clone();
        for site in &mut out.sites {
            site.scattering_length *= s;
        }
        out
    }

    /// Spin-independent lattice sums for the reflection `H` (crystal frame).
    pub fn structure_factors(&self, h: &Vec3, constants: &PhysicalConstants) -> StructureFactors {
        let h_mag = h.norm();
        let mut nuclear = C64::new(0.0, 0.0);
        let mut schwinger = C64::new(0.0, 0.0);
        for site in &self.sites {
            let phase = C64::from_polar(1.0, h.dot(&self.cartesian(site)));
            nuclear += phase * site.scattering_length;
            if h_mag > 0.0 {
                schwinger += phase * site.schwinger_strength(h_mag, constants);
            }
        }
        StructureFactors {
            nuclear,
            schwinger,
            scale: constants.fermi_prefactor() * FM_TO_ANGSTROM / self.volume,
        }
    }

    /// Mean optical potential `V(0)` (meV).
    pub fn mean_potential(&self, constants: &PhysicalConstants) -> f64 {
        self.structure_factors(&Vec3::zeros(), constants)
            .nuclear_potential()
            .re
    }
}

/// Lattice sums `F_N = sum_j b_j e^{i H.r_j}` and
/// `F_S = sum_j gamma_j e^{i H.r_j}` (both fm), with the factor converting
/// them to a potential in meV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureFactors {
    pub nuclear: C64,
    pub schwinger: C64,
    /// `(2 pi hbar^2 / m) / V_cell`, in meV per fm.
    pub scale: f64,
}

impl StructureFactors {
    pub fn nuclear_potential(&self) -> C64 {
        self.nuclear * self.scale
    }

    /// Potential seen by spin channel `s = +-1` (eigenvalue of sigma.u along
    /// the Schwinger axis) for Schwinger magnitude `|K x H|/|H|^2`.
    pub fn channel_potential(&self, spin: f64, schwinger_magnitude: f64) -> C64 {
        (self.nuclear - C64::new(0.0, 2.0 * spin * schwinger_magnitude) * self.schwinger)
            * self.scale
    }

    /// Channel potential of the opposite reflection `-H`.
    pub fn channel_potential_conjugate(&self, spin: f64, schwinger_magnitude: f64) -> C64 {
        (self.nuclear.conj()
            + C64::new(0.0, 2.0 * spin * schwinger_magnitude) * self.schwinger.conj())
            * self.scale
    }
}

/// Reciprocal lattice vector for Miller indices `hkl` (crystal Cartesian
/// frame, inverse Angstrom).
pub fn reciprocal_vector(crystal: &CrystalModel, hkl: [i32; 3]) -> Result<Vec3> {
    if hkl == [0, 0, 0] {
        return Err(Error::ZeroReflection);
    }
    let b = crystal.reciprocal_basis();
    Ok(b[0] * hkl[0] as f64 + b[1] * hkl[1] as f64 + b[2] * hkl[2] as f64)
}

/// Unit Schwinger axis `K x H / |K x H|` and magnitude `|K x H| / |H|^2`.
pub fn schwinger_axis(k: &Vec3, h: &Vec3) -> Result<(Vec3, f64)> {
    let (kn, hn) = (k.norm(), h.norm());
    if kn == 0.0 || hn == 0.0 {
        return Err(Error::InvalidArgument("zero wavevector".into()));
    }
    let cross = k.cross(h);
    let cn = cross.norm();
    if cn <= 1e-14 * kn * hn {
        return Err(Error::ParallelVectors);
    }
    Ok((cross / cn, cn / (hn * hn)))
}

/// Full spinor Fourier component
/// `V(H,K) = (2 pi hbar^2/m)(1/V_cell) sum_j [b_j - 2i gamma_j sigma.(K x H)/|H|^2] e^{iH.r_j}`.
///
/// `h` and `k` must be expressed in the crystal Cartesian frame. For
/// `H = 0` the Schwinger term vanishes identically.
pub fn potential_fourier(
    crystal: &CrystalModel,
    h: &Vec3,
    k: &Vec3,
    constants: &PhysicalConstants,
) -> SpinorMatrix {
    let sf = crystal.structure_factors(h, constants);
    let nuclear = SpinorMatrix::scalar(sf.nuclear_potential());
    let h2 = h.norm_squared();
    if h2 == 0.0 {
        return nuclear;
    }
    let axis = k.cross(h) / h2;
    let schwinger = SpinorMatrix::sigma_dot(&axis).scale(C64::new(0.0, -2.0) * sf.schwinger * sf.scale);
    nuclear + schwinger
}
