//! Run configuration: a TOML file with a strict schema.
//!
//! ```toml
//! [crystal]
//! material = "builtin:quartz"      # or a material file on the data path
//!
//! [geometry]
//! kind = "bragg"                    # bragg | laue
//! hkl = [1, 1, 0]
//! thickness_um = 100.0
//! wavelength = 2.0                  # A, or bragg_angle_deg
//!
//! [scan]
//! theta = { half_width = 5.0, unit = "darwin", n = 401 }
//! rho = { half_width = 0.0, unit = "deg", n = 1 }
//!
//! [[analysis]]
//! mode = "polarization"
//! name = "fig2"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Unknown keys anywhere are rejected before any computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersion::{Centering, GeometryKind};
use crate::error::{Error, Result};
use crate::oam::{PolarScale, DEFAULT_TRUNCATION};
use crate::wavefield::{Beam, Coherence, ScanAxis, SpinComponent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub crystal: CrystalSection,
    pub geometry: Option<GeometrySection>,
    pub scan: Option<ScanSection>,
    pub analysis: Vec<Analysis>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    #[serde(default = "default_material")]
    pub material: String,
    pub form_factors: Option<PathBuf>,
    /// Switches the spin-orbit term off when false.
    #[serde(default = "yes")]
    pub schwinger: bool,
}

impl Default for CrystalSection {
    fn default() -> Self {
        Self {
            material: default_material(),
            form_factors: None,
            schwinger: true,
        }
    }
}

fn default_material() -> String {
    "builtin:quartz".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThicknessMode {
    /// Thickness along the surface normal.
    #[default]
    Normal,
    /// Fixed path length along the incident beam.
    Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub kind: GeometryKind,
    pub hkl: [i32; 3],
    pub thickness_um: f64,
    #[serde(default)]
    pub thickness_mode: ThicknessMode,
    pub wavelength: Option<f64>,
    pub bragg_angle_deg: Option<f64>,
    #[serde(default)]
    pub centering: Centering,
    /// Incident polarization direction in the lab frame.
    #[serde(default = "along_x")]
    pub incident_polarization: [f64; 3],
}

fn along_x() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

/// Unit of a scan range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeUnit {
    Rad,
    Deg,
    Arcsec,
    /// Multiples of the Darwin plateau width at the run wavelength.
    Darwin,
    /// Multiples of the backscattering acceptance radius.
    Acceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub half_width: Option<f64>,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub unit: RangeUnit,
    pub n: usize,
}

impl RangeSpec {
    pub fn symmetric(half_width: f64, unit: RangeUnit, n: usize) -> Self {
        Self {
            half_width: Some(half_width),
            start: None,
            end: None,
            unit,
            n,
        }
    }

    /// `(start, end)` in the range's own unit.
    pub fn bounds(&self, key: &str) -> Result<(f64, f64)> {
        let (a, b) = match (self.half_width, self.start, self.end) {
            (Some(h), None, None) => (-h, h),
            (None, Some(a), Some(b)) => (a, b),
            _ => return Err(Error::config(key, "give either `half_width` or both `start` and `end`")),
        };
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::config(key, "range bounds must be finite"));
        }
        if self.n == 0 {
            return Err(Error::config(format!("{key}.n"), "range must have at least one point"));
        }
        if self.n > 1 && !(b > a) {
            return Err(Error::config(key, format!("empty range [{a}, {b}]")));
        }
        Ok((a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub theta: RangeSpec,
    pub rho: RangeSpec,
    #[serde(default)]
    pub coherence: Coherence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarSection {
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_n_phi")]
    pub n_phi: usize,
    #[serde(default)]
    pub scale: PolarScale,
    /// Centre in the scan units of theta and rho.
    #[serde(default)]
    pub center: [f64; 2],
}

impl Default for PolarSection {
    fn default() -> Self {
        Self {
            n_r: default_n_r(),
            n_phi: default_n_phi(),
            scale: PolarScale::default(),
            center: [0.0, 0.0],
        }
    }
}

fn default_n_r() -> usize {
    128
}

fn default_n_phi() -> usize {
    256
}

fn default_truncation() -> i64 {
    DEFAULT_TRUNCATION
}

fn both_beams() -> Vec<Beam> {
    vec![Beam::Reflected, Beam::Transmitted]
}

fn both_components() -> Vec<SpinComponent> {
    vec![SpinComponent::NonFlipped, SpinComponent::Flipped]
}

fn theta_axis() -> ScanAxis {
    ScanAxis::Theta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarizationLayout {
    /// Flux-weighted marginal over the other axis.
    #[default]
    Curve,
    /// Every grid point.
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSection {
    pub sigma: f64,
    pub unit: RangeUnit,
    #[serde(default = "default_support")]
    pub support: f64,
}

fn default_support() -> f64 {
    crate::instrument::ResolutionKernel::DEFAULT_SUPPORT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    GaussianDerivative,
    Linear,
}

/// Divergence-dependent phase of a tilted flipper coil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSpec {
    pub tilt_deg: f64,
    pub alpha_deg: RangeSpec,
    #[serde(default)]
    pub guide_field_mt: Vec<f64>,
    pub wavelength: f64,
    #[serde(default = "default_coil_length")]
    pub path_length_m: f64,
    /// Noise of the synthetic P_z scan fitted with a line; 0 disables it.
    #[serde(default)]
    pub noise: f64,
}

/// Fit of a measured scan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub scan: PathBuf,
    pub model: FitModel,
}

fn default_coil_length() -> f64 {
    crate::instrument::CoilModel::DEFAULT_PATH_LENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Analysis {
    Polarization {
        name: String,
        #[serde(default = "both_beams")]
        beams: Vec<Beam>,
        #[serde(default = "theta_axis")]
        axis: ScanAxis,
        #[serde(default)]
        layout: PolarizationLayout,
        resolution: Option<ResolutionSection>,
    },
    Oam {
        name: String,
        #[serde(default = "both_beams")]
        beams: Vec<Beam>,
        #[serde(default = "both_components")]
        components: Vec<SpinComponent>,
        #[serde(default = "default_truncation")]
        truncation: i64,
        #[serde(default)]
        polar: PolarSection,
    },
    PhaseMap {
        name: String,
        #[serde(default = "both_beams")]
        beams: Vec<Beam>,
        #[serde(default = "both_components")]
        components: Vec<SpinComponent>,
        /// Half widths (grid cells) of the square loops centred on the grid.
        #[serde(default)]
        loops: Vec<usize>,
    },
    Interference {
        name: String,
        #[serde(default = "both_beams")]
        beams: Vec<Beam>,
        #[serde(default = "default_truncation")]
        truncation: i64,
        #[serde(default)]
        polar: PolarSection,
    },
    /// Exactly one of `coil` and `fit`.
    Instrument {
        name: String,
        coil: Option<CoilSpec>,
        fit: Option<FitSpec>,
    },
}

impl Analysis {
    pub fn name(&self) -> &str {
        match self {
            Analysis::Polarization { name, .. }
            | Analysis::Oam { name, .. }
            | Analysis::PhaseMap { name, .. }
            | Analysis::Interference { name, .. }
            | Analysis::Instrument { name, .. } => name,
        }
    }

    pub fn needs_grid(&self) -> bool {
        !matches!(self, Analysis::Instrument { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: TableFormat,
    /// Significant digits of emitted numbers.
    #[serde(default = "default_precision")]
    pub precision: usize,
    /// Also write the raw wave grid in binary form.
    #[serde(default)]
    pub grid: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            format: TableFormat::default(),
            precision: default_precision(),
            grid: false,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_precision() -> usize {
    9
}

impl RunConfig {
    /// Parses and validates a configuration; `origin` names it in errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| toml_error(text, origin, e, ""))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            toml_error(text, origin, e.into_inner(), &path)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.analysis.is_empty() {
            return Err(Error::config("analysis", "at least one [[analysis]] section is required"));
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, a) in self.analysis.iter().enumerate() {
            let key = format!("analysis[{i}]");
            let name = a.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::config(format!("{key}.name"), "names use [A-Za-z0-9_-] and are non-empty"));
            }
            if !names.insert(name) {
                return Err(Error::config(format!("{key}.name"), format!("duplicate analysis name `{name}`")));
            }
            self.validate_analysis(a, &key)?;
        }
        if self.analysis.iter().any(Analysis::needs_grid) {
            let g = self
                .geometry
                .as_ref()
                .ok_or_else(|| Error::config("geometry", "required by the grid analyses"))?;
            let s = self
                .scan
                .as_ref()
                .ok_or_else(|| Error::config("scan", "required by the grid analyses"))?;
            validate_geometry(g)?;
            s.theta.bounds("scan.theta")?;
            s.rho.bounds("scan.rho")?;
            if self.crystal.material != "builtin:quartz" && crate::data::resolve(Path::new(&self.crystal.material)).is_none() {
                return Err(Error::config("crystal.material", format!("file `{}` not found", self.crystal.material)));
            }
            if let Some(p) = &self.crystal.form_factors {
                if crate::data::resolve(p).is_none() {
                    return Err(Error::config("crystal.form_factors", format!("file `{}` not found", p.display())));
                }
            }
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(Error::config("output.precision", "must be between 1 and 17"));
        }
        Ok(())
    }

    fn validate_analysis(&self, a: &Analysis, key: &str) -> Result<()> {
        let polar = |p: &PolarSection, truncation: i64| -> Result<()> {
            if p.n_r < 2 || p.n_phi < 4 {
                return Err(Error::config(format!("{key}.polar"), "need n_r >= 2 and n_phi >= 4"));
            }
            let max = (p.n_phi / 2) as i64 - 1;
            if truncation < 0 || truncation > max {
                return Err(Error::config(
                    format!("{key}.truncation"),
                    format!("must lie in 0..={max} for n_phi = {}", p.n_phi),
                ));
            }
            Ok(())
        };
        let non_empty = |v: usize, field: &str| -> Result<()> {
            if v == 0 {
                return Err(Error::config(format!("{key}.{field}"), "must not be empty"));
            }
            Ok(())
        };
        match a {
            Analysis::Polarization { beams, resolution, .. } => {
                non_empty(beams.len(), "beams")?;
                if let Some(r) = resolution {
                    if !(r.sigma > 0.0) || !(r.support > 0.0) {
                        return Err(Error::config(format!("{key}.resolution"), "sigma and support must be positive"));
                    }
                }
            }
            Analysis::Oam {
                beams,
                components,
                truncation,
                polar: p,
                ..
            } => {
                non_empty(beams.len(), "beams")?;
                non_empty(components.len(), "components")?;
                polar(p, *truncation)?;
            }
            Analysis::PhaseMap { beams, components, .. } => {
                non_empty(beams.len(), "beams")?;
                non_empty(components.len(), "components")?;
            }
            Analysis::Interference {
                beams,
                truncation,
                polar: p,
                ..
            } => {
                non_empty(beams.len(), "beams")?;
                polar(p, *truncation)?;
            }
            Analysis::Instrument { coil, fit, .. } => match (coil, fit) {
                (Some(c), None) => {
                    c.alpha_deg.bounds(&format!("{key}.coil.alpha_deg"))?;
                    if c.alpha_deg.unit != RangeUnit::Deg {
                        return Err(Error::config(format!("{key}.coil.alpha_deg.unit"), "divergence is given in deg"));
                    }
                    if !(c.tilt_deg.abs() < 90.0) {
                        return Err(Error::config(format!("{key}.coil.tilt_deg"), "must lie in (-90, 90)"));
                    }
                    if !(c.wavelength > 0.0) || !(c.path_length_m > 0.0) || !(c.noise >= 0.0) {
                        return Err(Error::config(
                            format!("{key}.coil"),
                            "wavelength and path length must be positive, noise non-negative",
                        ));
                    }
                    if c.guide_field_mt.iter().any(|b| !(*b >= 0.0)) {
                        return Err(Error::config(format!("{key}.coil.guide_field_mt"), "fields must be non-negative"));
                    }
                }
                (None, Some(f)) => {
                    if crate::data::resolve(&f.scan).is_none() {
                        return Err(Error::config(format!("{key}.fit.scan"), format!("file `{}` not found", f.scan.display())));
                    }
                }
                _ => return Err(Error::config(key, "instrument analyses need exactly one of `coil` or `fit`")),
            },
        }
        Ok(())
    }
}

fn validate_geometry(g: &GeometrySection) -> Result<()> {
    if g.hkl == [0, 0, 0] {
        return Err(Error::config("geometry.hkl", "must not be 0 0 0"));
    }
    if !(g.thickness_um >= 0.0) || !g.thickness_um.is_finite() {
        return Err(Error::config("geometry.thickness_um", "must be finite and non-negative"));
    }
    match (g.wavelength, g.bragg_angle_deg) {
        (Some(l), None) if l > 0.0 && l.is_finite() => {}
        (None, Some(a)) if a > 0.0 && a <= 90.0 => {}
        (Some(_), Some(_)) => {
            return Err(Error::config("geometry.wavelength", "give either `wavelength` or `bragg_angle_deg`, not both"))
        }
        (None, None) => return Err(Error::config("geometry.wavelength", "`wavelength` or `bragg_angle_deg` is required")),
        _ => return Err(Error::config("geometry.wavelength", "out of range")),
    }
    let p = g.incident_polarization;
    if !p.iter().all(|v| v.is_finite()) || p.iter().map(|v| v * v).sum::<f64>() == 0.0 {
        return Err(Error::config("geometry.incident_polarization", "must be a finite non-zero vector"));
    }
    Ok(())
}

fn toml_error(text: &str, origin: &Path, e: toml::de::Error, path: &str) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    let key = if path.is_empty() || path == "." { "<root>".to_string() } else { path.to_string() };
    Error::config(key, format!("{}:{line}: {}", origin.display(), e.message().trim()))
}
