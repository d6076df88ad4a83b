//! Configuration-driven pipeline: builds the crystal and the scan grid,
//! runs every analysis section and writes its tables.
//!
//! Every table starts with a provenance header (code version, SHA-256 of
//! the configuration text, units). Files are written to a temporary name
//! and renamed into place. Output contains no timestamps, so the same
//! configuration and seed give byte-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{
    Analysis, CoilSpec, CrystalSection, FitModel, FitSpec, GeometrySection, PolarSection, PolarizationLayout,
    RangeSpec, RangeUnit, ResolutionSection, RunConfig, TableFormat, ThicknessMode,
};
use crate::constants::{ARCSEC, DEGREE};
use crate::crystal::CrystalModel;
use crate::dispersion::{
    backscatter_acceptance_radius, darwin_plateau_width, GeometryTemplate, Reflection, Thickness,
};
use crate::error::{Error, Result};
use crate::instrument::{
    coil_tilt_phase, convolve_resolution, fit_gaussian_derivative, gaussian_derivative, ingest_scan, linear_fit,
    synthetic_coil_scan, CoilModel, FitReport, ResolutionKernel,
};
use crate::oam::{
    branch_interference_distribution, interference_distribution, mixture_distribution, oam_distribution,
    AzimuthalField, OamDistribution, PolarOptions,
};
use crate::wavefield::{
    find_vortices, grid_scan, phase_map, polarization_curve, polarization_map, AxisSpec, Beam, Coherence,
    PolarizationCurve, ScanAxis, SpinComponent, SquareLoop, WaveGrid,
};
use crate::{PhysicalConstants, Spinor, Vec3};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces `output.dir`.
    pub out_dir: Option<PathBuf>,
    /// Seed of the Monte-Carlo sections.
    pub seed: u64,
}

/// Everything derived from the crystal and geometry sections.
#[derive(Debug, Clone)]
pub struct Setup {
    pub constants: PhysicalConstants,
    pub crystal: CrystalModel,
    pub reflection: Reflection,
    pub template: GeometryTemplate,
    pub incident: Spinor,
    pub wavelength: f64,
    /// Darwin plateau width (rad).
    pub darwin_width: f64,
    /// Backscattering acceptance radius (rad).
    pub acceptance: f64,
}

impl Setup {
    pub fn new(crystal: &CrystalSection, geometry: &GeometrySection) -> Result<Self> {
        let constants = PhysicalConstants::codata();
        let mut model = crate::data::load_crystal(&crystal.material, crystal.form_factors.as_deref())?;
        if !crystal.schwinger {
            model = model.without_schwinger();
        }
        let reflection = Reflection::new(&model, geometry.hkl, &constants)?;
        let wavelength = match (geometry.wavelength, geometry.bragg_angle_deg) {
            (Some(l), _) => l,
            (None, Some(a)) => 2.0 * reflection.d_spacing() * (a * DEGREE).sin(),
            (None, None) => return Err(Error::config("geometry.wavelength", "`wavelength` or `bragg_angle_deg` is required")),
        };
        let t = geometry.thickness_um * 1e4;
        let thickness = match geometry.thickness_mode {
            ThicknessMode::Normal => Thickness::Normal(t),
            ThicknessMode::Path => Thickness::Path(t),
        };
        let template =
            GeometryTemplate::new(geometry.kind, wavelength, &reflection, thickness, geometry.centering, &constants)?;
        let p = geometry.incident_polarization;
        Ok(Self {
            darwin_width: darwin_plateau_width(&reflection, wavelength, &constants),
            acceptance: backscatter_acceptance_radius(&reflection, wavelength, &constants),
            incident: Spinor::polarized(&Vec3::new(p[0], p[1], p[2])),
            constants,
            crystal: model,
            reflection,
            template,
            wavelength,
        })
    }

    /// Radians per unit of `unit`.
    pub fn unit_scale(&self, unit: RangeUnit) -> f64 {
        match unit {
            RangeUnit::Rad => 1.0,
            RangeUnit::Deg => DEGREE,
            RangeUnit::Arcsec => ARCSEC,
            RangeUnit::Darwin => self.darwin_width,
            RangeUnit::Acceptance => self.acceptance,
        }
    }

    pub fn axis(&self, range: &RangeSpec, key: &str) -> Result<AxisSpec> {
        let (a, b) = range.bounds(key)?;
        let s = self.unit_scale(range.unit);
        AxisSpec::new(a * s, b * s, range.n).map_err(|e| Error::config(key, e.to_string()))
    }

    pub fn grid(&self, cfg: &RunConfig) -> Result<WaveGrid> {
        let scan = cfg.scan.as_ref().ok_or_else(|| Error::config("scan", "required by the grid analyses"))?;
        let theta = self.axis(&scan.theta, "scan.theta")?;
        let rho = self.axis(&scan.rho, "scan.rho")?;
        grid_scan(&self.template, &self.reflection, &self.incident, theta, rho, &self.constants)
    }
}

/// Outcome of one analysis section.
#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    pub mode: &'static str,
    /// `(n_theta, n_rho)` of the grid the section used.
    pub grid: Option<(usize, usize)>,
    #[serde(skip)]
    pub elapsed: Duration,
    pub scalars: BTreeMap<String, f64>,
    /// File names inside the output directory.
    pub files: Vec<String>,
}

impl Section {
    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    /// One line: name, mode, grid size, wall time and the key scalars.
    pub fn summary_line(&self) -> String {
        let grid = match self.grid {
            Some((a, b)) => format!("{a}x{b}"),
            None => "-".into(),
        };
        let scalars: Vec<String> = self.scalars.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
        format!(
            "{} [{}] grid {} in {:.2} s: {}",
            self.name,
            self.mode,
            grid,
            self.elapsed.as_secs_f64(),
            scalars.join(" ")
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub config_sha256: String,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub sections: Vec<Section>,
}

impl RunReport {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Loads, validates and runs a configuration file.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = RunConfig::parse(&text, path)?;
    run(&cfg, &text, opts)
}

/// Runs a shipped preset.
pub fn run_preset(name: &str, opts: &RunOptions) -> Result<RunReport> {
    let cfg = crate::presets::preset(name)?;
    let text = crate::presets::preset_source(name).unwrap_or_default();
    run(&cfg, text, opts)
}

/// Runs a validated configuration; `source` is the text it was parsed
/// from and is hashed into the provenance headers.
pub fn run(cfg: &RunConfig, source: &str, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let hash = hex(&Sha256::digest(source.as_bytes()));
    let dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let coherence = cfg.scan.as_ref().map(|s| s.coherence).unwrap_or_default();
    let mut setup = None;
    let mut grid: Option<WaveGrid> = None;
    if cfg.analysis.iter().any(Analysis::needs_grid) {
        let g = cfg.geometry.as_ref().ok_or_else(|| Error::config("geometry", "required by the grid analyses"))?;
        let s = Setup::new(&cfg.crystal, g)?;
        // reject bad ranges before the first file is written
        if let Some(scan) = &cfg.scan {
            s.axis(&scan.theta, "scan.theta")?;
            s.axis(&scan.rho, "scan.rho")?;
        }
        setup = Some(s);
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut sections = Vec::new();
    for a in &cfg.analysis {
        let start = Instant::now();
        let mut out = Output {
            dir: &dir,
            format: cfg.output.format,
            precision: cfg.output.precision,
            hash: &hash,
            section: a.name(),
            mode: mode_name(a),
            files: Vec::new(),
            scalars: BTreeMap::new(),
        };
        let mut dims = None;
        if a.needs_grid() {
            let s = setup.as_ref().expect("setup exists for grid analyses");
            if grid.is_none() {
                let g = s.grid(cfg)?;
                log::info!(
                    "grid {}x{} built, spot-check residual {:.2e}",
                    g.n_theta(),
                    g.n_rho(),
                    g.spot_check_residual
                );
                if cfg.output.grid {
                    let mut buf = Vec::new();
                    crate::wavefield::write_binary(&g, &mut buf)?;
                    write_atomic(&dir.join("grid.bin"), &buf)?;
                }
                grid = Some(g);
            }
            let g = grid.as_ref().expect("grid was just built");
            dims = Some((g.n_theta(), g.n_rho()));
            let ctx = GridContext {
                setup: s,
                grid: g,
                coherence,
                cfg,
            };
            ctx.analyse(a, &mut out)?;
        } else if let Analysis::Instrument { coil, fit, .. } = a {
            if let Some(c) = coil {
                coil_section(c, opts.seed, &mut out)?;
            }
            if let Some(f) = fit {
                fit_section(f, &mut out)?;
            }
        }
        sections.push(Section {
            name: a.name().to_string(),
            mode: out.mode,
            grid: dims,
            elapsed: start.elapsed(),
            scalars: out.scalars,
            files: out.files,
        });
    }
    let report = RunReport {
        version: VERSION,
        config_sha256: hash,
        out_dir: dir.clone(),
        sections,
    };
    let mut summary = serde_json::to_vec_pretty(&report).map_err(|e| Error::io(&dir, e.into()))?;
    summary.push(b'\n');
    write_atomic(&dir.join("summary.json"), &summary)?;
    Ok(report)
}

fn mode_name(a: &Analysis) -> &'static str {
    match a {
        Analysis::Polarization { .. } => "polarization",
        Analysis::Oam { .. } => "oam",
        Analysis::PhaseMap { .. } => "phase-map",
        Analysis::Interference { .. } => "interference",
        Analysis::Instrument { .. } => "instrument",
    }
}

pub fn beam_name(b: Beam) -> &'static str {
    match b {
        Beam::Reflected => "reflected",
        Beam::Transmitted => "transmitted",
    }
}

pub fn component_name(c: SpinComponent) -> &'static str {
    match c {
        SpinComponent::NonFlipped => "non-flipped",
        SpinComponent::Flipped => "flipped",
    }
}

struct GridContext<'a> {
    setup: &'a Setup,
    grid: &'a WaveGrid,
    coherence: Coherence,
    cfg: &'a RunConfig,
}

impl GridContext<'_> {
    fn analyse(&self, a: &Analysis, out: &mut Output) -> Result<()> {
        match a {
            Analysis::Polarization {
                beams,
                axis,
                layout,
                resolution,
                ..
            } => match layout {
                PolarizationLayout::Curve => {
                    for &b in beams {
                        self.curve(b, *axis, resolution.as_ref(), out)?;
                    }
                    Ok(())
                }
                PolarizationLayout::Map => {
                    for &b in beams {
                        self.map(b, out)?;
                    }
                    Ok(())
                }
            },
            Analysis::Oam {
                beams,
                components,
                truncation,
                polar,
                ..
            } => {
                let opts = self.polar_options(polar);
                for &b in beams {
                    let mut flipped = None;
                    let mut non_flipped = None;
                    for &c in components {
                        let d = self.component_distribution(b, c, &opts, *truncation)?;
                        let key = format!("{}.{}", beam_name(b), component_name(c));
                        out.scalars.insert(format!("{key}.mean"), d.mean);
                        out.scalars.insert(format!("{key}.sum"), d.sum);
                        match c {
                            SpinComponent::Flipped => flipped = Some(d.mean),
                            SpinComponent::NonFlipped => non_flipped = Some(d.mean),
                        }
                        out.table(distribution_table(&format!("{}-{}", beam_name(b), component_name(c)), &d))?;
                    }
                    if let (Some(f), Some(n)) = (flipped, non_flipped) {
                        out.scalars.insert(format!("{}.shift", beam_name(b)), f - n);
                    }
                }
                Ok(())
            }
            Analysis::Interference {
                beams,
                truncation,
                polar,
                ..
            } => {
                let opts = self.polar_options(polar);
                for &b in beams {
                    let d = self.interference(b, &opts, *truncation)?;
                    out.scalars.insert(format!("{}.mean", beam_name(b)), d.mean);
                    out.scalars.insert(format!("{}.p_minus_1", beam_name(b)), d.get(-1));
                    out.table(distribution_table(beam_name(b), &d))?;
                }
                Ok(())
            }
            Analysis::PhaseMap {
                beams,
                components,
                loops,
                ..
            } => {
                for &b in beams {
                    for &c in components {
                        self.phase(b, c, loops, out)?;
                    }
                }
                Ok(())
            }
            Analysis::Instrument { .. } => unreachable!("instrument sections need no grid"),
        }
    }

    fn curve(&self, beam: Beam, axis: ScanAxis, resolution: Option<&ResolutionSection>, out: &mut Output) -> Result<()> {
        let (abscissa, scale) = match axis {
            ScanAxis::Theta => ("theta", ARCSEC),
            ScanAxis::Rho => ("rho", DEGREE),
        };
        let unit = if axis == ScanAxis::Theta { "arcsec" } else { "deg" };
        let curve = polarization_curve(self.grid, beam, axis, self.coherence);
        let name = beam_name(beam);
        let (nf, fl) = self.grid.integrated_spin_flux(beam, self.coherence);
        out.scalars.insert(format!("{name}.flip_ratio"), fl / nf);
        let py_max = curve
            .py
            .iter()
            .zip(&curve.valid)
            .filter(|(_, v)| **v)
            .fold(0.0f64, |m, (p, _)| m.max(p.abs()));
        out.scalars.insert(format!("{name}.py_max"), py_max);
        if py_max > 0.0 {
            out.scalars.insert(format!("{name}.py_odd_residual"), odd_residual(&curve.py, &curve.valid) / py_max);
        }
        if let Some(w) = fwhm(&curve.abscissa, &curve.weights) {
            out.scalars.insert(format!("{name}.fwhm_{unit}"), w / scale);
        }
        out.table(curve_table(name, abscissa, unit, scale, &curve))?;
        if let Some(r) = resolution {
            let kernel = ResolutionKernel::with_support(r.sigma * self.setup.unit_scale(r.unit), r.support)?;
            let smeared = convolve_resolution(&curve, &kernel)?;
            if let Some(w) = fwhm(&smeared.abscissa, &smeared.weights) {
                out.scalars.insert(format!("{name}.smeared_fwhm_{unit}"), w / scale);
            }
            out.table(curve_table(&format!("{name}-smeared"), abscissa, unit, scale, &smeared))?;
        }
        Ok(())
    }

    fn map(&self, beam: Beam, out: &mut Output) -> Result<()> {
        let m = polarization_map(self.grid, beam, self.coherence);
        let name = beam_name(beam);
        let (nf, fl) = self.grid.integrated_spin_flux(beam, self.coherence);
        out.scalars.insert(format!("{name}.flip_fraction"), fl / (nf + fl));
        let nt = m.n_theta;
        let rows = (0..m.px.len())
            .map(|k| {
                vec![
                    self.grid.theta[k % nt] / ARCSEC,
                    self.grid.rho[k / nt] / DEGREE,
                    m.px[k],
                    m.py[k],
                    m.pz[k],
                ]
            })
            .collect();
        out.table(Table {
            stem: name.to_string(),
            columns: vec![("theta", "arcsec"), ("rho", "deg"), ("px", "1"), ("py", "1"), ("pz", "1")],
            rows,
            notes: vec!["polarization per grid point; nan where the beam carries no flux".into()],
        })
    }

    fn polar_options(&self, p: &PolarSection) -> PolarOptions {
        let scan = self.cfg.scan.as_ref().expect("grid analyses have a scan");
        PolarOptions {
            n_r: p.n_r,
            n_phi: p.n_phi,
            center: (
                p.center[0] * self.setup.unit_scale(scan.theta.unit),
                p.center[1] * self.setup.unit_scale(scan.rho.unit),
            ),
            scale: p.scale,
        }
    }

    fn branch_fields(&self, beam: Beam, c: SpinComponent, opts: &PolarOptions) -> Result<Vec<AzimuthalField>> {
        (0..2)
            .map(|j| AzimuthalField::from_grid_branch(self.grid, beam, c, j, opts))
            .collect()
    }

    fn component_distribution(
        &self,
        beam: Beam,
        c: SpinComponent,
        opts: &PolarOptions,
        truncation: i64,
    ) -> Result<OamDistribution> {
        match self.coherence {
            Coherence::Coherent => oam_distribution(&AzimuthalField::from_grid(self.grid, beam, c, opts)?, truncation),
            Coherence::PendellosungAveraged => mixture_distribution(&self.branch_fields(beam, c, opts)?, truncation),
        }
    }

    fn interference(&self, beam: Beam, opts: &PolarOptions, truncation: i64) -> Result<OamDistribution> {
        match self.coherence {
            Coherence::Coherent => interference_distribution(
                &AzimuthalField::from_grid(self.grid, beam, SpinComponent::NonFlipped, opts)?,
                &AzimuthalField::from_grid(self.grid, beam, SpinComponent::Flipped, opts)?,
                truncation,
            ),
            Coherence::PendellosungAveraged => branch_interference_distribution(
                &self.branch_fields(beam, SpinComponent::NonFlipped, opts)?,
                &self.branch_fields(beam, SpinComponent::Flipped, opts)?,
                truncation,
            ),
        }
    }

    fn phase(&self, beam: Beam, c: SpinComponent, loops: &[usize], out: &mut Output) -> Result<()> {
        let map = phase_map(self.grid, c, beam);
        let key = format!("{}.{}", beam_name(beam), component_name(c));
        for &h in loops {
            let path = SquareLoop::centered(&map, h);
            let w = match crate::wavefield::winding_number(&map, &path) {
                Ok(w) => w as f64,
                Err(Error::MaskedLoop(i, j)) => {
                    log::warn!("{key}: loop {h} crosses the masked point ({i}, {j})");
                    f64::NAN
                }
                Err(e) => return Err(Error::config("analysis.loops", e.to_string())),
            };
            out.scalars.insert(format!("{key}.winding_{h}"), w);
        }
        out.scalars.insert(format!("{key}.vortices"), find_vortices(&map).len() as f64);
        let nt = map.n_theta;
        let theta = &self.grid.theta;
        let rows = (0..map.phase.len())
            .map(|k| {
                let i = k % nt;
                let t = if map.mirrored { -theta[nt - 1 - i] } else { theta[i] };
                vec![t / ARCSEC, self.grid.rho[k / nt] / DEGREE, map.phase[k], map.amplitude[k]]
            })
            .collect();
        let mut notes = vec!["phase in (-pi, pi], nan where the amplitude vanishes".into()];
        if map.mirrored {
            notes.push("theta is mirrored into the frame of the reflected beam".into());
        }
        out.table(Table {
            stem: format!("{}-{}", beam_name(beam), component_name(c)),
            columns: vec![("theta", "arcsec"), ("rho", "deg"), ("phase", "rad"), ("amplitude", "1")],
            rows,
            notes,
        })
    }
}

fn coil_section(c: &CoilSpec, seed: u64, out: &mut Output) -> Result<()> {
    let (a, b) = c.alpha_deg.bounds("coil.alpha_deg")?;
    let alphas: Vec<f64> = AxisSpec::new(a * DEGREE, b * DEGREE, c.alpha_deg.n)?.values();
    let constants = PhysicalConstants::codata();
    let fields: Vec<f64> = if c.guide_field_mt.is_empty() { vec![0.0] } else { c.guide_field_mt.clone() };
    let mut columns = vec![("alpha".to_string(), "deg")];
    let mut series = Vec::new();
    for (k, &b_mt) in fields.iter().enumerate() {
        let model = CoilModel::new(c.tilt_deg * DEGREE, b_mt * 1e-3, c.wavelength, c.path_length_m, &constants)?;
        let phases = alphas
            .iter()
            .map(|&al| coil_tilt_phase(&model, al))
            .collect::<Result<Vec<_>>>()?;
        let tag = format!("guide_{b_mt}mT");
        out.scalars
            .insert(format!("{tag}.max_abs_phase"), phases.iter().fold(0.0f64, |m, p| m.max(p.abs())));
        columns.push((format!("phase_{b_mt}mT"), "rad"));
        series.push(phases);
        if c.noise > 0.0 {
            let scan = synthetic_coil_scan(&model, &alphas, c.noise, seed.wrapping_add(k as u64))?;
            let fit = linear_fit(&scan)?;
            out.scalars.insert(format!("{tag}.fit_slope"), fit.value("slope").unwrap_or(f64::NAN));
            out.scalars.insert(format!("{tag}.fit_slope_sigma"), fit.sigma("slope").unwrap_or(f64::NAN));
            out.json(&format!("fit-{b_mt}mT"), &fit)?;
        }
    }
    let rows = alphas
        .iter()
        .enumerate()
        .map(|(i, al)| std::iter::once(al / DEGREE).chain(series.iter().map(|s| s[i])).collect())
        .collect();
    out.table(Table {
        stem: "phase".into(),
        columns: columns.iter().map(|(n, u)| (n.as_str(), *u)).collect(),
        rows,
        notes: vec![format!(
            "coil tilt {} deg, wavelength {} A, coil length {} m",
            c.tilt_deg, c.wavelength, c.path_length_m
        )],
    })
}

fn fit_section(f: &FitSpec, out: &mut Output) -> Result<()> {
    let path = crate::data::resolve(&f.scan).unwrap_or_else(|| f.scan.clone());
    let scan = ingest_scan(&path)?;
    let report: FitReport = match f.model {
        FitModel::GaussianDerivative => fit_gaussian_derivative(&scan)?,
        FitModel::Linear => linear_fit(&scan)?,
    };
    for (n, v) in report.names.iter().zip(&report.values) {
        out.scalars.insert(n.clone(), *v);
        out.scalars.insert(format!("{n}_sigma"), report.sigma(n).unwrap_or(f64::NAN));
    }
    out.scalars.insert("chi2".into(), report.chi2);
    let model = |x: f64| match f.model {
        FitModel::GaussianDerivative => {
            let p = &report.values;
            gaussian_derivative(x, p[0], p[1], p[2], p[3])
        }
        FitModel::Linear => report.values[0] * x + report.values[1],
    };
    let rows = scan
        .x
        .iter()
        .zip(&scan.value)
        .map(|(&x, &y)| vec![x, y, model(x)])
        .collect();
    out.json("fit", &report)?;
    out.table(Table {
        stem: "residuals".into(),
        columns: vec![("x", "rad"), ("value", "1"), ("model", "1")],
        rows,
        notes: vec![format!("fit of {}", f.scan.display())],
    })
}

fn curve_table(stem: &str, abscissa: &'static str, unit: &'static str, scale: f64, c: &PolarizationCurve) -> Table<'static> {
    let rows = (0..c.abscissa.len())
        .map(|i| vec![c.abscissa[i] / scale, c.px[i], c.py[i], c.pz[i], c.weights[i]])
        .collect();
    Table {
        stem: stem.to_string(),
        columns: vec![(abscissa, unit), ("px", "1"), ("py", "1"), ("pz", "1"), ("intensity", "1")],
        rows,
        notes: vec!["intensity is the flux summed over the other scan axis".into()],
    }
}

fn distribution_table(stem: &str, d: &OamDistribution) -> Table<'static> {
    Table {
        stem: stem.to_string(),
        columns: vec![("l", "hbar"), ("p", "1")],
        rows: d.modes.iter().zip(&d.p).map(|(l, p)| vec![*l as f64, *p]).collect(),
        notes: vec![format!("sum {:e}, mean {:e}", d.sum, d.mean)],
    }
}

/// `max |f(i) + f(n-1-i)|` over valid pairs.
fn odd_residual(f: &[f64], valid: &[bool]) -> f64 {
    let n = f.len();
    (0..n)
        .filter(|&i| valid[i] && valid[n - 1 - i])
        .map(|i| (f[i] + f[n - 1 - i]).abs())
        .fold(0.0, f64::max)
}

/// Full width at half maximum of a single-peaked sampled curve, with
/// linear interpolation at the crossings.
pub fn fwhm(x: &[f64], y: &[f64]) -> Option<f64> {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(ymax > 0.0) {
        return None;
    }
    let half = ymax / 2.0;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=imax).rev().find(|&i| y[i - 1] < half).map(|i| cross(i - 1, i))?;
    let right = (imax..y.len() - 1).find(|&i| y[i + 1] < half).map(|i| cross(i, i + 1))?;
    Some(right - left)
}

struct Table<'a> {
    stem: String,
    columns: Vec<(&'a str, &'a str)>,
    rows: Vec<Vec<f64>>,
    notes: Vec<String>,
}

struct Output<'a> {
    dir: &'a Path,
    format: TableFormat,
    precision: usize,
    hash: &'a str,
    section: &'a str,
    mode: &'static str,
    files: Vec<String>,
    scalars: BTreeMap<String, f64>,
}

impl Output<'_> {
    fn header(&self) -> Vec<String> {
        vec![
            format!("spinorbit {VERSION}"),
            format!("config-sha256 {}", self.hash),
            format!("section {} ({})", self.section, self.mode),
        ]
    }

    fn table(&mut self, t: Table) -> Result<()> {
        let p = self.precision;
        let units: Vec<String> = t.columns.iter().map(|(c, u)| format!("{c}={u}")).collect();
        let (ext, bytes) = match self.format {
            TableFormat::Csv => {
                let mut s = String::new();
                for line in self.header() {
                    s.push_str(&format!("# {line}\n"));
                }
                s.push_str(&format!("# units {}\n", units.join(", ")));
                for n in &t.notes {
                    s.push_str(&format!("# {n}\n"));
                }
                let names: Vec<&str> = t.columns.iter().map(|(c, _)| *c).collect();
                s.push_str(&names.join(","));
                s.push('\n');
                for r in &t.rows {
                    let cells: Vec<String> = r.iter().map(|v| format_sig(*v, p)).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                ("csv", s.into_bytes())
            }
            TableFormat::Json => {
                let rows: Vec<Vec<serde_json::Value>> = t
                    .rows
                    .iter()
                    .map(|r| r.iter().map(|v| json_number(*v, p)).collect())
                    .collect();
                let doc = serde_json::json!({
                    "provenance": {
                        "version": VERSION,
                        "config_sha256": self.hash,
                        "section": self.section,
                        "mode": self.mode,
                        "units": t.columns.iter().map(|(c, u)| (c.to_string(), u.to_string())).collect::<BTreeMap<_, _>>(),
                        "notes": t.notes,
                    },
                    "columns": t.columns.iter().map(|(c, _)| *c).collect::<Vec<_>>(),
                    "rows": rows,
                });
                let mut b = serde_json::to_vec(&doc).map_err(|e| Error::io(self.dir, e.into()))?;
                b.push(b'\n');
                ("json", b)
            }
        };
        self.write(&format!("{}-{}.{ext}", self.section, t.stem), &bytes)
    }

    fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<()> {
        let doc = serde_json::json!({
            "provenance": {
                "version": VERSION,
                "config_sha256": self.hash,
                "section": self.section,
                "mode": self.mode,
            },
            "result": value,
        });
        let mut b = serde_json::to_vec_pretty(&doc).map_err(|e| Error::io(self.dir, e.into()))?;
        b.push(b'\n');
        self.write(&format!("{}-{stem}.json", self.section), &b)
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(file), bytes)?;
        self.files.push(file.to_string());
        Ok(())
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// `v` rounded to `digits` significant digits, in the shortest form that
/// reads back to the rounded value.
pub fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r: f64 = format!("{:.*e}", digits.saturating_sub(1), v).parse().expect("formatted float parses");
    let a = r.abs();
    if r == 0.0 {
        "0".into()
    } else if (1e-4..1e7).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn json_number(v: f64, digits: usize) -> serde_json::Value {
    if v.is_finite() {
        serde_json::Value::from(format_sig(v, digits).parse::<f64>().expect("round trip"))
    } else {
        serde_json::Value::Null
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
