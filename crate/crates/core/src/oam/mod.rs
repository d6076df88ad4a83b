//! Orbital angular momentum of sampled transverse fields.
//!
//! A field on the (theta, rho) momentum grid is resampled onto a polar grid
//! about a chosen axis and decomposed into azimuthal modes
//! `psi_l(r) = (1/2pi) int psi exp(-i l phi) dphi`. The azimuth is
//! right-handed about the reciprocal lattice vector, which points back
//! along -x at backscattering:
//!
//! ```text
//! theta = theta0 + r cos(phi),   rho = rho0 - r sin(phi)
//! ```
//!
//! so `exp(i l phi)` carries `l hbar` of OAM along H.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spinor::C64;
use crate::wavefield::{Beam, SpinComponent, WaveGrid};

/// Radial coordinate used for the polar grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarScale {
    /// Angles as sampled (rad).
    #[default]
    Angular,
    /// Each axis divided by its half range, so an anisotropic rectangle
    /// maps onto the unit square.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct PolarOptions {
    pub n_r: usize,
    pub n_phi: usize,
    /// Axis position `(theta0, rho0)` (rad).
    pub center: (f64, f64),
    pub scale: PolarScale,
}

impl Default for PolarOptions {
    fn default() -> Self {
        Self {
            n_r: 128,
            n_phi: 256,
            center: (0.0, 0.0),
            scale: PolarScale::Angular,
        }
    }
}

/// Field samples on a polar grid, `values[i_r * n_phi + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AzimuthalField {
    /// Radii from 0 to the largest circle inside the source grid.
    pub radii: Vec<f64>,
    pub n_phi: usize,
    pub values: Vec<C64>,
    pub center: (f64, f64),
    pub scale: PolarScale,
}

fn trapezoid_weights(radii: &[f64]) -> Vec<f64> {
    let n = radii.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = radii[i + 1] - radii[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

impl AzimuthalField {
    /// Samples `f(r, phi)` on `n_r` radii in `[0, r_max]` and `n_phi`
    /// uniform azimuths starting at 0.
    pub fn from_fn(r_max: f64, n_r: usize, n_phi: usize, f: impl Fn(f64, f64) -> C64) -> Result<Self> {
        check_polar(r_max, n_r, n_phi)?;
        let radii: Vec<f64> = (0..n_r).map(|i| r_max * i as f64 / (n_r - 1) as f64).collect();
        let mut values = Vec::with_capacity(n_r * n_phi);
        for &r in &radii {
            for j in 0..n_phi {
                values.push(f(r, 2.0 * PI * j as f64 / n_phi as f64));
            }
        }
        Ok(Self {
            radii,
            n_phi,
            values,
            center: (0.0, 0.0),
            scale: PolarScale::Angular,
        })
    }

    /// Bilinear resampling of row-major Cartesian samples
    /// `values[j * theta.len() + i]` on uniform axes.
    pub fn from_cartesian(theta: &[f64], rho: &[f64], values: &[C64], opts: &PolarOptions) -> Result<Self> {
        let (nt, nr) = (theta.len(), rho.len());
        if nt < 2 || nr < 2 || values.len() != nt * nr {
            return Err(Error::GridMismatch(format!(
                "{} samples on a {nt} x {nr} grid",
                values.len()
            )));
        }
        let (t0, t1, r0, r1) = (theta[0], theta[nt - 1], rho[0], rho[nr - 1]);
        let (sx, sy) = match opts.scale {
            PolarScale::Angular => (1.0, 1.0),
            PolarScale::Normalized => (0.5 * (t1 - t0), 0.5 * (r1 - r0)),
        };
        let (ct, cr) = opts.center;
        let r_max = ((ct - t0) / sx).min((t1 - ct) / sx).min((cr - r0) / sy).min((r1 - cr) / sy);
        if !(r_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "polar centre ({ct}, {cr}) is not inside the grid"
            )));
        }
        check_polar(r_max, opts.n_r, opts.n_phi)?;
        let (ht, hr) = ((t1 - t0) / (nt - 1) as f64, (r1 - r0) / (nr - 1) as f64);
        let sample = |t: f64, r: f64| -> C64 {
            let fx = ((t - t0) / ht).clamp(0.0, (nt - 1) as f64);
            let fy = ((r - r0) / hr).clamp(0.0, (nr - 1) as f64);
            let (i, j) = ((fx.floor() as usize).min(nt - 2), (fy.floor() as usize).min(nr - 2));
            let (ax, ay) = (fx - i as f64, fy - j as f64);
            let v = |i: usize, j: usize| values[j * nt + i];
            v(i, j) * ((1.0 - ax) * (1.0 - ay))
                + v(i + 1, j) * (ax * (1.0 - ay))
                + v(i, j + 1) * ((1.0 - ax) * ay)
                + v(i + 1, j + 1) * (ax * ay)
        };
        let mut f = Self::from_fn(r_max, opts.n_r, opts.n_phi, |r, phi| {
            sample(ct + sx * r * phi.cos(), cr - sy * r * phi.sin())
        })?;
        f.center = opts.center;
        f.scale = opts.scale;
        Ok(f)
    }

    /// Polar resampling of one spin component of a grid beam.
    pub fn from_grid(grid: &WaveGrid, beam: Beam, component: SpinComponent, opts: &PolarOptions) -> Result<Self> {
        let amps = grid.spin_amplitudes(beam, component);
        Self::from_cartesian(&grid.theta, &grid.rho, &amps, opts)
    }

    /// Polar resampling of one Bloch-wave branch of a grid.
    pub fn from_grid_branch(
        grid: &WaveGrid,
        beam: Beam,
        component: SpinComponent,
        branch: usize,
        opts: &PolarOptions,
    ) -> Result<Self> {
        if branch > 1 {
            return Err(Error::InvalidArgument(format!("branch index {branch} out of range")));
        }
        let amps = grid.branch_spin_amplitudes(beam, component, branch);
        Self::from_cartesian(&grid.theta, &grid.rho, &amps, opts)
    }

    fn check_same_sampling(&self, other: &AzimuthalField) -> Result<()> {
        if self.radii != other.radii || self.n_phi != other.n_phi || self.center != other.center {
            return Err(Error::GridMismatch("polar grids differ".into()));
        }
        Ok(())
    }

    fn add_assign(&mut self, other: &AzimuthalField) -> Result<()> {
        self.check_same_sampling(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn n_r(&self) -> usize {
        self.radii.len()
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_phi as f64
    }

    fn ring(&self, i: usize) -> &[C64] {
        &self.values[i * self.n_phi..(i + 1) * self.n_phi]
    }

    /// `int r |psi|^2 dr dphi` by the trapezoid rule in r and the uniform
    /// rule in phi.
    pub fn intensity(&self) -> f64 {
        let w = trapezoid_weights(&self.radii);
        let dphi = 2.0 * PI / self.n_phi as f64;
        (0..self.n_r())
            .map(|i| w[i] * self.radii[i] * self.ring(i).iter().map(|v| v.norm_sqr()).sum::<f64>() * dphi)
            .sum()
    }

    /// Pointwise product `conj(self) * other`.
    pub fn conj_product(&self, other: &AzimuthalField) -> Result<AzimuthalField> {
        self.check_same_sampling(other)?;
        Ok(AzimuthalField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).collect(),
            ..self.clone()
        })
    }
}

fn check_polar(r_max: f64, n_r: usize, n_phi: usize) -> Result<()> {
    if n_r < 2 || n_phi < 4 || !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "polar grid needs n_r >= 2, n_phi >= 4 and r_max > 0 (got {n_r}, {n_phi}, {r_max})"
        )));
    }
    Ok(())
}

fn nyquist(n_phi: usize) -> i64 {
    n_phi as i64 / 2 - 1
}

/// Azimuthal Fourier component `psi_l(r)` on every radius.
pub fn aft(field: &AzimuthalField, l: i64) -> Result<Vec<C64>> {
    let max = nyquist(field.n_phi);
    if l.abs() > max {
        return Err(Error::Nyquist {
            l,
            n_phi: field.n_phi,
            max,
        });
    }
    let n = field.n_phi;
    let twiddle: Vec<C64> = (0..n)
        .map(|j| C64::from_polar(1.0 / n as f64, -2.0 * PI * ((l * j as i64).rem_euclid(n as i64)) as f64 / n as f64))
        .collect();
    Ok((0..field.n_r())
        .map(|i| field.ring(i).iter().zip(&twiddle).map(|(v, t)| v * t).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OamDistribution {
    /// Mode numbers `-L..=L`.
    pub modes: Vec<i64>,
    pub p: Vec<f64>,
    /// `sum p[l]` over the retained modes.
    pub sum: f64,
    /// Probability outside `[-L, L]`.
    pub residual: f64,
    /// Mean mode number of the retained modes, `sum l p / sum p`.
    pub mean: f64,
    /// Total intensity the probabilities are normalized by.
    pub intensity: f64,
}

impl OamDistribution {
    pub fn truncation(&self) -> i64 {
        *self.modes.last().unwrap_or(&0)
    }

    pub fn get(&self, l: i64) -> f64 {
        let t = self.truncation();
        if l.abs() > t {
            0.0
        } else {
            self.p[(l + t) as usize]
        }
    }
}

/// Default number of modes kept on either side of zero.
pub const DEFAULT_TRUNCATION: i64 = 32;

/// `p[l] = 2 pi int r |psi_l|^2 dr`, normalized by the field intensity.
pub fn oam_distribution(field: &AzimuthalField, truncation: i64) -> Result<OamDistribution> {
    let max = nyquist(field.n_phi);
    if truncation < 0 || truncation > max {
        return Err(Error::Nyquist {
            l: truncation,
            n_phi: field.n_phi,
            max,
        });
    }
    let total = field.intensity();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroIntensity);
    }
    let w = trapezoid_weights(&field.radii);
    let modes: Vec<i64> = (-truncation..=truncation).collect();
    let mut p = Vec::with_capacity(modes.len());
    for &l in &modes {
        let psi = aft(field, l)?;
        let v: f64 = (0..psi.len()).map(|i| w[i] * field.radii[i] * psi[i].norm_sqr()).sum();
        p.push(2.0 * PI * v / total);
    }
    let sum: f64 = p.iter().sum();
    let first: f64 = modes.iter().zip(&p).map(|(l, p)| *l as f64 * p).sum();
    Ok(OamDistribution {
        modes,
        sum,
        residual: (1.0 - sum).max(0.0),
        mean: if sum > 0.0 { first / sum } else { 0.0 },
        p,
        intensity: total,
    })
}

/// `<L_k> = sum l p[l]` in units of hbar.
pub fn oam_expectation(dist: &OamDistribution) -> f64 {
    dist.modes.iter().zip(&dist.p).map(|(l, p)| *l as f64 * p).sum()
}

/// Distribution of `conj(psi_plus) * psi_minus`, in which phase factors
/// common to both spin components cancel.
pub fn interference_distribution(
    plus: &AzimuthalField,
    minus: &AzimuthalField,
    truncation: i64,
) -> Result<OamDistribution> {
    oam_distribution(&plus.conj_product(minus)?, truncation)
}

/// OAM spectrum of an incoherent mixture of fields sharing one sampling.
pub fn mixture_distribution(fields: &[AzimuthalField], truncation: i64) -> Result<OamDistribution> {
    let parts: Vec<OamDistribution> = fields
        .iter()
        .filter(|f| f.intensity() > 0.0)
        .map(|f| oam_distribution(f, truncation))
        .collect::<Result<_>>()?;
    let total: f64 = parts.iter().map(|d| d.intensity).sum();
    if parts.is_empty() || !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroIntensity);
    }
    let modes: Vec<i64> = (-truncation..=truncation).collect();
    let p: Vec<f64> = (0..modes.len())
        .map(|k| parts.iter().map(|d| d.p[k] * d.intensity).sum::<f64>() / total)
        .collect();
    let sum: f64 = p.iter().sum();
    let first: f64 = modes.iter().zip(&p).map(|(l, p)| *l as f64 * p).sum();
    Ok(OamDistribution {
        modes,
        sum,
        residual: (1.0 - sum).max(0.0),
        mean: if sum > 0.0 { first / sum } else { 0.0 },
        p,
        intensity: total,
    })
}

/// Interference spectrum averaged over the Pendellosung oscillation:
/// the spectrum of `sum_j conj(plus_j) minus_j`, with cross-branch terms
/// dropped.
pub fn branch_interference_distribution(
    plus: &[AzimuthalField],
    minus: &[AzimuthalField],
    truncation: i64,
) -> Result<OamDistribution> {
    if plus.is_empty() || plus.len() != minus.len() {
        return Err(Error::InvalidArgument("branch field lists must be non-empty and of equal length".into()));
    }
    let mut acc = plus[0].conj_product(&minus[0])?;
    for (p, m) in plus.iter().zip(minus).skip(1) {
        acc.add_assign(&p.conj_product(m)?)?;
    }
    oam_distribution(&acc, truncation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleLz {
    /// `<psi| -i d/dphi |psi> / <psi|psi>` (hbar).
    pub value: f64,
    /// Change of the estimate when the azimuthal step is doubled.
    pub refinement_delta: f64,
}

const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

fn lz_with_stride(field: &AzimuthalField, stride: usize) -> f64 {
    let n = field.n_phi;
    let h = 2.0 * PI * stride as f64 / n as f64;
    let w = trapezoid_weights(&field.radii);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..field.n_r() {
        let ring = field.ring(i);
        let (mut a, mut b) = (0.0, 0.0);
        for j in (0..n).step_by(stride) {
            let mut d = C64::new(0.0, 0.0);
            for (k, c) in FD8.iter().enumerate() {
                let s = (k + 1) * stride;
                d += (ring[(j + s) % n] - ring[(j + n * 4 - s) % n]) * *c;
            }
            // <psi| -i d/dphi |psi>
            a += (ring[j].conj() * d / h * C64::new(0.0, -1.0)).re;
            b += ring[j].norm_sqr();
        }
        num += w[i] * field.radii[i] * a;
        den += w[i] * field.radii[i] * b;
    }
    num / den
}

/// Finite-difference estimate of `<L_z>` straight from the polar samples,
/// using 8th-order central differences in phi.
pub fn oracle_lz(field: &AzimuthalField) -> Result<OracleLz> {
    if !(field.intensity() > 0.0) {
        return Err(Error::ZeroIntensity);
    }
    let value = lz_with_stride(field, 1);
    let refinement_delta = if field.n_phi % 2 == 0 && field.n_phi >= 18 {
        (lz_with_stride(field, 2) - value).abs()
    } else {
        0.0
    };
    if refinement_delta > 1e-3 * value.abs().max(1.0) {
        log::warn!("L_z oracle under-resolved: refinement delta {refinement_delta:e}");
    }
    Ok(OracleLz {
        value,
        refinement_delta,
    })
}
