//! Two-beam dynamical diffraction per spin channel.
//!
//! Inside the crystal each spin channel `s` (eigenvalue of `sigma.u` along
//! the Schwinger axis `u = K x H / |K x H|`) carries two Bloch waves
//! `exp(i k_j.r) [u_j(0) + u_j(H) exp(iH.r)]`, `j = 1, 2`, with
//! `k_j = k0 + (|k0|/cos gamma) eps_j n`. Writing `x = 2 E eps` and
//! `Delta = (hbar^2/2m)(|k0+H|^2 - |k0|^2)`, the secular system is
//!
//! ```text
//! (x + v0) u(0) + vH u(H)                 = 0
//! v-H u(0)      + (Delta + x/b + v0) u(H) = 0
//! ```
//!
//! so `u(H) = X u(0)` with `X = -(x + v0) / vH`, and `x` solves a quadratic.
//! The boundary problems fix `u_j(0)` for Bragg and Laue slabs; channel
//! results are recombined into lab-frame spinors with the projectors
//! `(1 +- sigma.u)/2`.

mod geometry;

pub use geometry::{Centering, DiffractionGeometry, GeometryKind, GeometryTemplate, Thickness};

use crate::constants::PhysicalConstants;
use crate::crystal::{reciprocal_vector, schwinger_axis, CrystalModel, StructureFactors};
use crate::error::{Error, Result};
use crate::spinor::{Spinor, SpinorMatrix, Vec3, C64};

/// A single reflection of a crystal reduced to what the two-beam problem
/// needs: structure factors and the mean optical potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub hkl: [i32; 3],
    pub h_magnitude: f64,
    pub factors: StructureFactors,
    /// Mean optical potential `V(0)` (meV).
    pub v0: f64,
}

impl Reflection {
    pub fn new(crystal: &CrystalModel, hkl: [i32; 3], constants: &PhysicalConstants) -> Result<Self> {
        let h = reciprocal_vector(crystal, hkl)?;
        Ok(Self {
            hkl,
            h_magnitude: h.norm(),
            factors: crystal.structure_factors(&h, constants),
            v0: crystal.mean_potential(constants),
        })
    }

    /// Interplanar spacing (A).
    pub fn d_spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.h_magnitude
    }

    /// Channel potentials for spin `s` at Schwinger magnitude `|K x H|/|H|^2`.
    pub fn channel(&self, spin: f64, schwinger_magnitude: f64) -> ChannelPotentials {
        ChannelPotentials {
            v0: C64::new(self.v0, 0.0),
            vh: self.factors.channel_potential(spin, schwinger_magnitude),
            vmh: self.factors.channel_potential_conjugate(spin, schwinger_magnitude),
        }
    }
}

/// Scalar potentials of one spin channel (meV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPotentials {
    pub v0: C64,
    /// Coupling of `u(H)` into the forward equation.
    pub vh: C64,
    /// Coupling of `u(0)` into the diffracted equation.
    pub vmh: C64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSolution {
    pub spin: f64,
    pub eps: [C64; 2],
    /// Amplitude ratios `X_j = u_j(H) / u_j(0)`.
    pub x: [C64; 2],
    /// Neutron energy `hbar^2 |k0|^2 / 2m` (meV).
    pub energy: f64,
    pub potentials: ChannelPotentials,
    /// `(hbar^2/2m)(|k0+H|^2 - |k0|^2)` (meV).
    pub deviation: f64,
    pub asymmetry: f64,
}

impl BranchSolution {
    /// Relative residual of the second secular equation for branch `j`.
    pub fn secular_residual(&self, j: usize) -> f64 {
        let p = &self.potentials;
        let two_e_eps = self.eps[j] * (2.0 * self.energy);
        let first = (two_e_eps + p.v0) + p.vh * self.x[j];
        let second = p.vmh + (two_e_eps / self.asymmetry + self.deviation + p.v0) * self.x[j];
        let scale = p.vh.norm().max(p.vmh.norm()) * (1.0 + self.x[j].norm());
        first.norm().max(second.norm()) / scale
    }
}

fn order_roots(a: C64, b: C64) -> [C64; 2] {
    let tol = 1e-12 * a.norm().max(b.norm());
    let swap = if (a.re - b.re).abs() <= tol {
        a.im > b.im
    } else {
        a.re > b.re
    };
    if swap {
        [b, a]
    } else {
        [a, b]
    }
}

fn solve_with_deviation(
    deviation: f64,
    asymmetry: f64,
    pots: ChannelPotentials,
    energy: f64,
    spin: f64,
) -> Result<BranchSolution> {
    if pots.vh.norm() == 0.0 || pots.vmh.norm() == 0.0 {
        return Err(Error::ForbiddenReflection);
    }
    let b = asymmetry;
    let v0 = pots.v0;
    // (x + v0)(b Delta + x + b v0) - b vH v-H = 0
    let bq = v0 + (v0 + deviation) * b;
    let cq = (v0 * (v0 + deviation) - pots.vh * pots.vmh) * b;
    let disc = (bq * bq - cq * 4.0).sqrt();
    let q = if (bq.conj() * disc).re >= 0.0 {
        (bq + disc) * -0.5
    } else {
        (bq - disc) * -0.5
    };
    let (x1, x2) = if q.norm() == 0.0 {
        (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    } else {
        (q, cq / q)
    };
    let scale = x1.norm().max(x2.norm()).max(pots.vh.norm());
    if (x1 - x2).norm() <= 1e-13 * scale {
        return Err(Error::DegenerateRoots(x1.re / (2.0 * energy)));
    }
    let x = order_roots(x1, x2);
    Ok(BranchSolution {
        spin,
        eps: [x[0] / (2.0 * energy), x[1] / (2.0 * energy)],
        x: [-(x[0] + v0) / pots.vh, -(x[1] + v0) / pots.vh],
        energy,
        potentials: pots,
        deviation,
        asymmetry,
    })
}

/// Solves the two-beam dispersion problem of one spin channel.
///
/// Roots are ordered by ascending real part of `eps`, ties by imaginary
/// part. A coincident root pair is reported as [`Error::DegenerateRoots`].
pub fn solve_branches(
    geom: &DiffractionGeometry,
    pots: ChannelPotentials,
    constants: &PhysicalConstants,
    spin: f64,
) -> Result<BranchSolution> {
    let c = constants.hbar2_over_2m();
    let energy = c * geom.k0.norm_squared();
    solve_with_deviation(c * geom.deviation, geom.asymmetry(), pots, energy, spin)
}

/// Amplitudes of one spin channel for unit incident amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelAmplitudes {
    /// `u_1(0), u_2(0)`.
    pub forward: [C64; 2],
    /// `u_1(H), u_2(H)`.
    pub diffracted: [C64; 2],
    /// Forward field at the exit face.
    pub transmitted: C64,
    /// Diffracted field at its exit face.
    pub reflected: C64,
    /// Per-branch contributions to `transmitted` (they sum to it).
    pub branch_transmitted: [C64; 2],
    /// Per-branch contributions to `reflected`.
    pub branch_reflected: [C64; 2],
    /// `|E_1/E_2| <= 1` ordering used to keep the rear-face sums bounded.
    phase_ratio: C64,
    first_smaller: bool,
}

impl ChannelAmplitudes {
    /// Residual of `u_1(0) + u_2(0) = 1`.
    pub fn entrance_residual(&self) -> f64 {
        (self.forward[0] + self.forward[1] - 1.0).norm()
    }

    /// Residual of the geometry-specific second condition: no diffracted
    /// field at the rear face (Bragg, scaled by the larger propagation
    /// factor) or at the entrance face (Laue).
    pub fn second_residual(&self, kind: GeometryKind) -> f64 {
        match kind {
            GeometryKind::Laue => (self.diffracted[0] + self.diffracted[1]).norm(),
            GeometryKind::Bragg => {
                let r = self.phase_ratio;
                if self.first_smaller {
                    (r * self.diffracted[0] + self.diffracted[1]).norm()
                } else {
                    (self.diffracted[0] + r * self.diffracted[1]).norm()
                }
            }
        }
    }
}

fn propagation_phases(branches: &BranchSolution, path: f64, k: f64) -> [C64; 2] {
    let i = C64::new(0.0, 1.0);
    [
        i * branches.eps[0] * (k * path),
        i * branches.eps[1] * (k * path),
    ]
}

/// Bragg boundary problem: `u1(0) + u2(0) = 1` at the entrance and no
/// diffracted field at the rear face `r.n = D`.
pub fn bragg_amplitudes(branches: &BranchSolution, path: f64, k: f64) -> Result<ChannelAmplitudes> {
    let [x1, x2] = branches.x;
    let [a1, a2] = propagation_phases(branches, path, k);
    // r = E1/E2 or its inverse, whichever is bounded by one
    let first_smaller = a1.re <= a2.re;
    let (forward, branch_transmitted, ratio) = if first_smaller {
        // |E1| <= |E2|
        let r = (a1 - a2).exp();
        let den = x1 * r - x2;
        if den.norm() <= 1e-300 || !den.norm().is_finite() {
            return Err(Error::SingularBoundary(format!("E1 X1 = E2 X2 (X = {x1}, {x2})")));
        }
        let u1 = -x2 / den;
        let u2 = x1 * r / den;
        let e1 = a1.exp();
        // u2 E2 = X1 E1 / den stays bounded when |E2| is large
        ([u1, u2], [-x2 * e1 / den, x1 * e1 / den], r)
    } else {
        let s = (a2 - a1).exp();
        let den = x1 - x2 * s;
        if den.norm() <= 1e-300 || !den.norm().is_finite() {
            return Err(Error::SingularBoundary(format!("E1 X1 = E2 X2 (X = {x1}, {x2})")));
        }
        let u1 = -x2 * s / den;
        let u2 = x1 / den;
        let e2 = a2.exp();
        ([u1, u2], [-x2 * e2 / den, x1 * e2 / den], s)
    };
    let diffracted = [x1 * forward[0], x2 * forward[1]];
    Ok(ChannelAmplitudes {
        forward,
        diffracted,
        transmitted: branch_transmitted[0] + branch_transmitted[1],
        reflected: diffracted[0] + diffracted[1],
        branch_transmitted,
        branch_reflected: diffracted,
        phase_ratio: ratio,
        first_smaller,
    })
}

/// Laue boundary problem: `u1(0) + u2(0) = 1` and no diffracted field at the
/// entrance, `X1 u1(0) + X2 u2(0) = 0`. Both beams are evaluated at the rear.
pub fn laue_amplitudes(branches: &BranchSolution, path: f64, k: f64) -> Result<ChannelAmplitudes> {
    let [x1, x2] = branches.x;
    let den = x2 - x1;
    if den.norm() <= 1e-300 * x1.norm().max(x2.norm()) || den.norm() == 0.0 {
        return Err(Error::SingularBoundary(format!("X1 = X2 = {x1}")));
    }
    let u1 = x2 / den;
    let u2 = -x1 / den;
    let [a1, a2] = propagation_phases(branches, path, k);
    let (e1, e2) = (a1.exp(), a2.exp());
    let diffracted = [x1 * u1, x2 * u2];
    let branch_transmitted = [e1 * u1, e2 * u2];
    let branch_reflected = [diffracted[0] * e1, diffracted[1] * e2];
    Ok(ChannelAmplitudes {
        forward: [u1, u2],
        diffracted,
        transmitted: branch_transmitted[0] + branch_transmitted[1],
        reflected: branch_reflected[0] + branch_reflected[1],
        branch_transmitted,
        branch_reflected,
        phase_ratio: C64::new(1.0, 0.0),
        first_smaller: true,
    })
}

/// Per-channel result retained in an [`ExitField`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelResult {
    pub spin: f64,
    /// `None` when the reflection is forbidden and only refraction remains.
    pub branches: Option<BranchSolution>,
    /// Branch values used for propagation (both equal to the refraction
    /// value when the reflection is forbidden).
    pub eps: [C64; 2],
    pub amplitudes: ChannelAmplitudes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitField {
    /// Forward beam at its exit face (lab spin basis).
    pub transmitted: Spinor,
    /// Diffracted beam at its exit face (lab spin basis).
    pub reflected: Spinor,
    pub reflectivity: f64,
    pub transmission: f64,
    /// Branch-resolved transmitted spinors. Each carries the propagation
    /// phase of its branch relative to the spin average of that branch, so
    /// the rapid Pendellosung phase common to both spin states is removed.
    /// Incoherent sums over branches give Pendellosung-averaged quantities.
    pub branch_transmitted: [Spinor; 2],
    pub branch_reflected: [Spinor; 2],
    /// Spin quantization axis of the channels.
    pub axis: Vec3,
    pub asymmetry: f64,
    pub physical: bool,
    pub channels: [ChannelResult; 2],
}

impl ExitField {
    /// Largest boundary-condition residual over both channels.
    pub fn max_boundary_residual(&self, kind: GeometryKind) -> f64 {
        self.channels
            .iter()
            .map(|c| c.amplitudes.entrance_residual().max(c.amplitudes.second_residual(kind)))
            .fold(0.0, f64::max)
    }
}

fn forward_only(eps: f64, path: f64, k: f64) -> ChannelAmplitudes {
    let t = C64::new(0.0, k * eps * path).exp();
    ChannelAmplitudes {
        forward: [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        diffracted: [C64::new(0.0, 0.0); 2],
        transmitted: t,
        reflected: C64::new(0.0, 0.0),
        branch_transmitted: [t, C64::new(0.0, 0.0)],
        branch_reflected: [C64::new(0.0, 0.0); 2],
        phase_ratio: C64::new(0.0, 0.0),
        first_smaller: true,
    }
}

fn solve_channel(
    geom: &DiffractionGeometry,
    pots: ChannelPotentials,
    constants: &PhysicalConstants,
    spin: f64,
) -> Result<ChannelResult> {
    let k = geom.wavenumber();
    let path = geom.path_length();
    let c = constants.hbar2_over_2m();
    let energy = c * k * k;
    let b = geom.asymmetry();
    let mut deviation = c * geom.deviation;
    let branches = loop {
        match solve_with_deviation(deviation, b, pots, energy, spin) {
            Ok(s) => break s,
            Err(Error::ForbiddenReflection) => {
                let eps = -pots.v0.re / (2.0 * energy);
                return Ok(ChannelResult {
                    spin,
                    branches: None,
                    eps: [C64::new(eps, 0.0); 2],
                    amplitudes: forward_only(eps, path, k),
                });
            }
            Err(Error::DegenerateRoots(_)) => {
                let nudge = 1e-12 * pots.vh.norm().max(deviation.abs());
                log::warn!("degenerate dispersion roots, nudging deviation by {nudge:e} meV");
                deviation += nudge;
            }
            Err(e) => return Err(e),
        }
    };
    let amplitudes = match geom.kind {
        GeometryKind::Bragg => bragg_amplitudes(&branches, path, k)?,
        GeometryKind::Laue => laue_amplitudes(&branches, path, k)?,
    };
    Ok(ChannelResult {
        spin,
        eps: branches.eps,
        branches: Some(branches),
        amplitudes,
    })
}

/// Exit spinors for incident spinor `u0`.
///
/// The potential is diagonalized along the Schwinger axis of `(k0, H)`,
/// each channel solved as a scalar problem, and the two channels
/// recombined in the lab spin basis. Plane-wave carriers `exp(i k0.r)` and
/// `exp(i (k0+H).r)` are common to both spin states and are not included.
pub fn exit_field(
    geom: &DiffractionGeometry,
    reflection: &Reflection,
    u0: &Spinor,
    constants: &PhysicalConstants,
) -> Result<ExitField> {
    let (axis, magnitude) = match schwinger_axis(&geom.k0, &geom.h) {
        Ok(a) => a,
        Err(Error::ParallelVectors) => (Vec3::z(), 0.0),
        Err(e) => return Err(e),
    };
    let plus = solve_channel(geom, reflection.channel(1.0, magnitude), constants, 1.0)?;
    let minus = solve_channel(geom, reflection.channel(-1.0, magnitude), constants, -1.0)?;
    let p_plus = SpinorMatrix::projector(&axis, 1.0);
    let p_minus = SpinorMatrix::projector(&axis, -1.0);
    let combine = |a: C64, b: C64| (p_plus.scale(a) + p_minus.scale(b)).apply(u0);
    let transmitted = combine(plus.amplitudes.transmitted, minus.amplitudes.transmitted);
    let reflected = combine(plus.amplitudes.reflected, minus.amplitudes.reflected);
    let path_phase = geom.wavenumber() * geom.path_length();
    let mut branch_transmitted = [Spinor::zero(); 2];
    let mut branch_reflected = [Spinor::zero(); 2];
    for j in 0..2 {
        let common = C64::from_polar(1.0, -0.5 * path_phase * (plus.eps[j].re + minus.eps[j].re));
        let refl_common = match geom.kind {
            GeometryKind::Laue => common,
            GeometryKind::Bragg => C64::new(1.0, 0.0),
        };
        branch_transmitted[j] = combine(
            plus.amplitudes.branch_transmitted[j] * common,
            minus.amplitudes.branch_transmitted[j] * common,
        );
        branch_reflected[j] = combine(
            plus.amplitudes.branch_reflected[j] * refl_common,
            minus.amplitudes.branch_reflected[j] * refl_common,
        );
    }
    let b = geom.asymmetry();
    let norm = u0.norm_sqr();
    let (reflectivity, transmission) = if norm > 0.0 {
        (
            reflected.norm_sqr() / b.abs() / norm,
            transmitted.norm_sqr() / norm,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(ExitField {
        transmitted,
        reflected,
        reflectivity,
        transmission,
        branch_transmitted,
        branch_reflected,
        axis,
        asymmetry: b,
        physical: geom.is_physical(),
        channels: [plus, minus],
    })
}

/// Angular width (rad) of the total-reflection plateau of a symmetric Bragg
/// reflection, `2 |vH| / (E sin 2 theta_B)`, for the spin-averaged coupling.
pub fn darwin_plateau_width(reflection: &Reflection, wavelength: f64, constants: &PhysicalConstants) -> f64 {
    let energy = constants.energy_from_wavelength(wavelength);
    let sin_b = reflection.h_magnitude * wavelength / (4.0 * std::f64::consts::PI);
    let theta_b = sin_b.min(1.0).asin();
    let linear = 2.0 * reflection.factors.nuclear_potential().norm() / (energy * (2.0 * theta_b).sin());
    linear.min(2.0 * backscatter_acceptance_radius(reflection, wavelength, constants))
}

/// Angular radius inside which the deviation stays within the reflection
/// range at exact backscattering, where the deviation grows quadratically
/// with the tilt: `Delta = (hbar^2/2m) k |H| r^2`.
pub fn backscatter_acceptance_radius(reflection: &Reflection, wavelength: f64, constants: &PhysicalConstants) -> f64 {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let vh = reflection.factors.nuclear_potential().norm();
    (2.0 * vh / (constants.hbar2_over_2m() * k * reflection.h_magnitude)).sqrt()
}

#[cfg(test)]
mod tests;
