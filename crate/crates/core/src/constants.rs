//! Physical constants and the internal unit system.
//!
//! Internal units are Angstrom, inverse Angstrom, meV and radians. Scattering
//! lengths are carried in fm and converted with [`FM_TO_ANGSTROM`] where they
//! enter a potential.
//!
//! Sign convention: the neutron magnetic moment is negative
//! (`magnetic_moment_nuclear_magnetons < 0`). The Schwinger length
//! `mu e / (hbar c)` inherits that sign, and every spin-rotation sense in the
//! crate traces back to it.

pub const FM_TO_ANGSTROM: f64 = 1.0e-5;
pub const ARCSEC: f64 = std::f64::consts::PI / (180.0 * 3600.0);
pub const DEGREE: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Neutron mass (kg).
    pub neutron_mass: f64,
    /// Proton mass (kg).
    pub proton_mass: f64,
    /// Electron mass (kg).
    pub electron_mass: f64,
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Elementary charge (C).
    pub elementary_charge: f64,
    /// Speed of light (m/s).
    pub speed_of_light: f64,
    /// Classical electron radius (fm).
    pub electron_radius_fm: f64,
    /// Neutron magnetic moment in nuclear magnetons (negative).
    pub magnetic_moment_nuclear_magnetons: f64,
    /// Neutron gyromagnetic ratio magnitude (rad s^-1 T^-1).
    pub gyromagnetic_ratio: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata()
    }
}

impl PhysicalConstants {
    pub const fn codata() -> Self {
        Self {
            neutron_mass: 1.674_927_498_04e-27,
            proton_mass: 1.672_621_923_69e-27,
            electron_mass: 9.109_383_701_5e-31,
            hbar: 1.054_571_817e-34,
            elementary_charge: 1.602_176_634e-19,
            speed_of_light: 299_792_458.0,
            electron_radius_fm: 2.817_940_326_2,
            magnetic_moment_nuclear_magnetons: -1.913_042_73,
            gyromagnetic_ratio: 1.832_471_71e8,
        }
    }

    /// Nuclear magneton (J/T).
    pub fn nuclear_magneton(&self) -> f64 {
        self.elementary_charge * self.hbar / (2.0 * self.proton_mass)
    }

    /// Neutron magnetic moment (J/T), negative.
    pub fn magnetic_moment(&self) -> f64 {
        self.magnetic_moment_nuclear_magnetons * self.nuclear_magneton()
    }

    /// hbar^2 / 2m in meV A^2.
    pub fn hbar2_over_2m(&self) -> f64 {
        let joule_m2 = self.hbar * self.hbar / (2.0 * self.neutron_mass);
        // J m^2 -> meV A^2
        joule_m2 / (self.elementary_charge * 1.0e-3) * 1.0e20
    }

    /// 2 pi hbar^2 / m in meV A^2, the prefactor of the Fermi pseudopotential.
    pub fn fermi_prefactor(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.hbar2_over_2m()
    }

    /// Schwinger length mu e / (hbar c) in fm (Gaussian form
    /// `mu_n[mu_N] * r_e * m_e / (2 m_p)`), carrying the sign of mu.
    pub fn schwinger_length_fm(&self) -> f64 {
        self.magnetic_moment_nuclear_magnetons * self.electron_radius_fm * self.electron_mass
            / (2.0 * self.proton_mass)
    }

    pub fn energy_from_wavelength(&self, lambda: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / lambda;
        self.hbar2_over_2m() * k * k
    }

    pub fn wavenumber_from_wavelength(lambda: f64) -> f64 {
        2.0 * std::f64::consts::PI / lambda
    }

    /// Neutron speed (m/s) for a wavelength in A.
    pub fn speed_from_wavelength(&self, lambda: f64) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar / (self.neutron_mass * lambda * 1.0e-10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_except_moment() {
        let c = PhysicalConstants::codata();
        for v in [
            c.neutron_mass,
            c.hbar,
            c.elementary_charge,
            c.speed_of_light,
            c.gyromagnetic_ratio,
            c.electron_radius_fm,
        ] {
            assert!(v > 0.0);
        }
        assert!(c.magnetic_moment() < 0.0);
        assert!(c.schwinger_length_fm() < 0.0);
    }

    #[test]
    fn kinetic_energy_wavelength_relation() {
        let c = PhysicalConstants::codata();
        // E[meV] * lambda^2 = 81.804 (commonly quoted as 81.81)
        let k = c.energy_from_wavelength(1.0);
        assert!((k - 81.804).abs() < 1e-3, "{k}");
        assert!((k - 81.81).abs() / 81.81 < 1e-4);
    }

    #[test]
    fn schwinger_length_magnitude() {
        let c = PhysicalConstants::codata();
        assert!((c.schwinger_length_fm() + 1.468e-3).abs() < 1e-6);
    }

    #[test]
    fn thermal_speed() {
        let c = PhysicalConstants::codata();
        let v = c.speed_from_wavelength(1.8);
        assert!((v - 2197.8).abs() < 1.0, "{v}");
    }
}
