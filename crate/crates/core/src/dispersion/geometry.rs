use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::Reflection;
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::spinor::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    /// Diffracted beam leaves through the entrance face.
    Bragg,
    /// Both beams leave through the rear face.
    Laue,
}

/// Crystal extent seen by the beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thickness {
    /// Slab thickness `D` (A) along the surface normal; the in-crystal path
    /// is `D / cos(gamma)` and varies with incidence.
    Normal(f64),
    /// Fixed in-crystal path length (A) along the incident direction.
    Path(f64),
}

impl Thickness {
    pub fn value(&self) -> f64 {
        match *self {
            Thickness::Normal(d) | Thickness::Path(d) => d,
        }
    }
}

/// One incidence condition: incident wavevector, reciprocal vector and
/// crystal slab, all in the lab frame (x along the central incident beam,
/// z vertical).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionGeometry {
    pub k0: Vec3,
    pub h: Vec3,
    /// Inward unit surface normal.
    pub normal: Vec3,
    pub kind: GeometryKind,
    pub thickness: Thickness,
    /// Bragg deviation `|k0 + H|^2 - |k0|^2` (A^-2).
    pub deviation: f64,
}

impl DiffractionGeometry {
    pub fn new(k0: Vec3, h: Vec3, normal: Vec3, kind: GeometryKind, thickness: Thickness) -> Result<Self> {
        let g = Self {
            deviation: 2.0 * k0.dot(&h) + h.norm_squared(),
            k0,
            h,
            normal,
            kind,
            thickness,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k0.norm() > 0.0) {
            return Err(Error::InvalidArgument("|k0| must be positive".into()));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("surface normal must be a unit vector".into()));
        }
        let t = self.thickness.value();
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("bad crystal thickness {t}")));
        }
        let b = self.asymmetry();
        let ok = match self.kind {
            GeometryKind::Bragg => b < 0.0,
            GeometryKind::Laue => b > 0.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "asymmetry factor b = {b} inconsistent with {:?} geometry",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        self.k0.norm()
    }

    /// cos of the angle between the incident wavevector and the normal.
    pub fn cos_gamma(&self) -> f64 {
        self.k0.dot(&self.normal) / self.k0.norm()
    }

    /// `b = (k0.n) / ((k0 + H).n)`.
    pub fn asymmetry(&self) -> f64 {
        self.k0.dot(&self.normal) / (self.k0 + self.h).dot(&self.normal)
    }

    /// In-crystal path length used in the propagation phase `|k0| eps L`.
    /// Incidence from behind the entrance face (non-physical points) is
    /// mirrored onto the physical side.
    pub fn path_length(&self) -> f64 {
        match self.thickness {
            Thickness::Normal(d) => d / self.cos_gamma().abs(),
            Thickness::Path(l) => l,
        }
    }

    /// Whether the beam actually enters the crystal through the entrance
    /// face (and, in Laue geometry, the diffracted beam leaves the rear).
    pub fn is_physical(&self) -> bool {
        let kn = self.k0.dot(&self.normal);
        let khn = (self.k0 + self.h).dot(&self.normal);
        kn > 0.0
            && match self.kind {
                GeometryKind::Bragg => khn < 0.0,
                GeometryKind::Laue => khn > 0.0,
            }
    }
}

/// Where the rocking angle is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    /// Kinematic Bragg angle `sin(theta_B) = lambda / 2d`.
    Kinematic,
    /// Centre of the dynamical reflection (refraction corrected), falling
    /// back to exact backscattering when that centre is out of reach.
    #[default]
    Dynamical,
}

/// Symmetric crystal setting for scans over rocking `theta` and tilt `rho`.
///
/// The lab x axis is the incident direction at `(theta, rho) = (0, 0)`,
/// z is vertical and y = z x x. Incidence `(theta, rho)` is
/// `k0 = (sqrt(K^2 - ky^2 - kz^2), ky, kz)` with `ky = K theta`,
/// `kz = K rho`. The reciprocal vector lies in the horizontal plane,
/// `H = |H| (-sin psi, cos psi, 0)`, where `psi` is the glancing angle at
/// the scan centre.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryTemplate {
    pub kind: GeometryKind,
    pub wavelength: f64,
    pub h_magnitude: f64,
    pub thickness: Thickness,
    /// Glancing angle to the reflecting planes at the scan centre.
    pub psi: f64,
    /// `|H|^2 - 2 K |H| sin(psi)`: deviation at the scan centre (A^-2).
    center_deviation: f64,
}

impl GeometryTemplate {
    pub fn new(
        kind: GeometryKind,
        wavelength: f64,
        reflection: &Reflection,
        thickness: Thickness,
        centering: Centering,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(Error::InvalidArgument("wavelength must be positive".into()));
        }
        let k = 2.0 * std::f64::consts::PI / wavelength;
        let h = reflection.h_magnitude;
        let sin_kin = h / (2.0 * k);
        if sin_kin > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "wavelength {wavelength} A exceeds 2d = {} A",
                4.0 * std::f64::consts::PI / h
            )));
        }
        let target = match centering {
            Centering::Kinematic => 0.0,
            Centering::Dynamical => {
                let b = match kind {
                    GeometryKind::Bragg => -1.0,
                    GeometryKind::Laue => 1.0,
                };
                // centre of the reflection: Delta = -v0 (1 - 1/b)
                -reflection.v0 * (1.0 - 1.0 / b) / constants.hbar2_over_2m()
            }
        };
        let sin_psi = (h * h - target) / (2.0 * k * h);
        let (psi, center_deviation) = if sin_psi >= 1.0 {
            log::info!("reflection centre out of reach at {wavelength} A, centring on backscattering");
            (FRAC_PI_2, h * h - 2.0 * k * h)
        } else {
            (sin_psi.asin(), target)
        };
        Ok(Self {
            kind,
            wavelength,
            h_magnitude: h,
            thickness,
            psi,
            center_deviation,
        })
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn reciprocal_vector(&self) -> Vec3 {
        Vec3::new(-self.psi.sin(), self.psi.cos(), 0.0) * self.h_magnitude
    }

    pub fn normal(&self) -> Vec3 {
        let (s, c) = self.psi.sin_cos();
        match self.kind {
            GeometryKind::Bragg => Vec3::new(s, -c, 0.0),
            GeometryKind::Laue => Vec3::new(c, s, 0.0),
        }
    }

    /// Geometry at rocking `theta` and tilt `rho` (rad).
    pub fn at(&self, theta: f64, rho: f64) -> Result<DiffractionGeometry> {
        let k = self.wavenumber();
        let t = theta * theta + rho * rho;
        if !(t < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "transverse angles ({theta}, {rho}) out of range"
            )));
        }
        let cx = (1.0 - t).sqrt();
        let k0 = Vec3::new(k * cx, k * theta, k * rho);
        let h = self.h_magnitude;
        let (s, c) = self.psi.sin_cos();
        // |k0+H|^2 - K^2 expanded about the centre without cancellation
        let deviation = self.center_deviation + 2.0 * k * h * s * t / (1.0 + cx) + 2.0 * h * c * k * theta;
        let g = DiffractionGeometry {
            k0,
            h: self.reciprocal_vector(),
            normal: self.normal(),
            kind: self.kind,
            thickness: self.thickness,
            deviation,
        };
        if g.asymmetry().is_finite() {
            Ok(g)
        } else {
            Err(Error::InvalidArgument(format!(
                "grazing incidence at ({theta}, {rho}): asymmetry undefined"
            )))
        }
    }
}
