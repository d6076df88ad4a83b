//! Instrument-side models: resolution smearing, scan fits, the tilted
//! spin-flipper coil and measured-scan files.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned, Vector4, U4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{ARCSEC, DEGREE};
use crate::error::{Error, Result};
use crate::wavefield::PolarizationCurve;
use crate::PhysicalConstants;

/// Gaussian angular resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionKernel {
    /// Standard deviation (rad).
    pub sigma: f64,
    /// Support half width in units of sigma.
    pub support: f64,
}

impl ResolutionKernel {
    pub const DEFAULT_SUPPORT: f64 = 5.0;

    pub fn new(sigma: f64) -> Result<Self> {
        Self::with_support(sigma, Self::DEFAULT_SUPPORT)
    }

    pub fn with_support(sigma: f64, support: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel sigma must be positive, got {sigma}")));
        }
        if !(support > 0.0) || !support.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel support must be positive, got {support}")));
        }
        Ok(Self { sigma, support })
    }

    /// Discrete taps for sample spacing `step`, offsets `-m..=m`,
    /// normalized to unit sum.
    pub fn taps(&self, step: f64) -> Result<Vec<f64>> {
        if self.sigma < step * (1.0 - 1e-9) {
            return Err(Error::KernelUnderResolved { sigma: self.sigma, step });
        }
        let m = (self.support * self.sigma / step).floor() as i64;
        let mut w: Vec<f64> = (-m..=m)
            .map(|i| {
                let x = i as f64 * step / self.sigma;
                (-0.5 * x * x).exp()
            })
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Ok(w)
    }
}

fn uniform_step(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument("curve needs at least two samples".into()));
    }
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("abscissa must be increasing".into()));
    }
    for (i, pair) in x.windows(2).enumerate() {
        if ((pair[1] - pair[0]) - step).abs() > 1e-6 * step {
            return Err(Error::InvalidArgument(format!("abscissa not uniform at index {i}")));
        }
    }
    Ok(step)
}

/// Half-sample symmetric reflection of an index into `0..n`.
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn convolve(values: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = values.len() as i64;
    let m = (taps.len() / 2) as i64;
    (0..n)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(k, w)| w * values[reflect(i + k as i64 - m, n)])
                .sum()
        })
        .collect()
}

/// Intensity-weighted smearing of a polarization curve.
///
/// `P*I` and `I` are convolved separately and divided. Beyond the ends of
/// the scan the curve is mirrored (half-sample symmetric), which keeps the
/// summed intensity unchanged.
pub fn convolve_resolution(curve: &PolarizationCurve, kernel: &ResolutionKernel) -> Result<PolarizationCurve> {
    let step = uniform_step(&curve.abscissa)?;
    let taps = kernel.taps(step)?;
    let w: Vec<f64> = curve
        .weights
        .iter()
        .zip(&curve.valid)
        .map(|(w, ok)| if *ok && w.is_finite() { *w } else { 0.0 })
        .collect();
    let weighted = |p: &[f64]| -> Vec<f64> {
        let pw: Vec<f64> = p
            .iter()
            .zip(&w)
            .map(|(p, w)| if *w > 0.0 { p * w } else { 0.0 })
            .collect();
        convolve(&pw, &taps)
    };
    let iw = convolve(&w, &taps);
    let divide = |num: Vec<f64>| -> Vec<f64> {
        num.iter()
            .zip(&iw)
            .map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN })
            .collect()
    };
    Ok(PolarizationCurve {
        axis: curve.axis,
        abscissa: curve.abscissa.clone(),
        unit: curve.unit,
        px: divide(weighted(&curve.px)),
        py: divide(weighted(&curve.py)),
        pz: divide(weighted(&curve.pz)),
        valid: iw.iter().map(|v| *v > 0.0).collect(),
        weights: iw,
    })
}

/// Angle unit of a scan abscissa on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Rad,
    Deg,
    Arcsec,
}

impl AngleUnit {
    pub fn to_rad(self) -> f64 {
        match self {
            AngleUnit::Rad => 1.0,
            AngleUnit::Deg => DEGREE,
            AngleUnit::Arcsec => ARCSEC,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rad" => Some(AngleUnit::Rad),
            "deg" | "degree" | "degrees" => Some(AngleUnit::Deg),
            "arcsec" | "asec" => Some(AngleUnit::Arcsec),
            _ => None,
        }
    }
}

/// A measured (or synthetic) one-dimensional scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredScan {
    /// Abscissa in rad.
    pub x: Vec<f64>,
    /// Unit the abscissa was given in.
    pub unit: AngleUnit,
    pub value: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    /// Free-form `# key: value` comments from the file header.
    pub metadata: BTreeMap<String, String>,
}

impl MeasuredScan {
    pub fn new(x: Vec<f64>, value: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        let scan = Self {
            x,
            unit: AngleUnit::Rad,
            value,
            sigma,
            metadata: BTreeMap::new(),
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.value.len() {
            return Err(Error::InvalidArgument("x and value lengths differ".into()));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return Err(Error::InvalidArgument("sigma length differs from x".into()));
            }
            if let Some(i) = s.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("sigma[{i}] must be positive and finite")));
            }
        }
        if let Some(i) = self.x.iter().chain(&self.value).position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at flat index {i}")));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        match &self.sigma {
            Some(s) => s.iter().map(|s| 1.0 / s).collect(),
            None => vec![1.0; self.len()],
        }
    }
}

/// Reads a scan from CSV.
///
/// ```text
/// # wavelength: 1.8
/// abscissa_unit,arcsec
/// x,value,sigma
/// -2.0,0.01,0.002
/// ```
///
/// Lines starting with `#` are comments; `# key: value` comments become
/// metadata. The `sigma` column is optional.
pub fn ingest_scan(path: &Path) -> Result<MeasuredScan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scan(&text, path)
}

/// As [`ingest_scan`] on in-memory text; `origin` is used in messages.
pub fn parse_scan(text: &str, origin: &Path) -> Result<MeasuredScan> {
    let mut metadata = BTreeMap::new();
    for line in text.lines() {
        if let Some(c) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = c.split_once(':') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let mut next = |what: &str| -> Result<(usize, csv::StringRecord)> {
        match records.next() {
            Some(Ok(r)) => Ok((r.position().map_or(0, |p| p.line() as usize), r)),
            Some(Err(e)) => Err(Error::parse(origin, e.position().map_or(0, |p| p.line() as usize), e.to_string())),
            None => Err(Error::parse(origin, 0, format!("empty file: missing {what}"))),
        }
    };
    let (line, unit_row) = next("`abscissa_unit,<unit>` line")?;
    if unit_row.get(0) != Some("abscissa_unit") || unit_row.len() < 2 {
        return Err(Error::parse(origin, line, "expected `abscissa_unit,<unit>`"));
    }
    let unit_name = unit_row.get(1).unwrap_or("");
    let unit = AngleUnit::parse(unit_name)
        .ok_or_else(|| Error::parse(origin, line, format!("unknown angle unit `{unit_name}`")))?;
    let (line, header) = next("column header")?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ix, iv) = match (col("x"), col("value")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::parse(origin, line, "header must contain columns `x` and `value`")),
    };
    let is = col("sigma");
    let (mut x, mut value, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
    for rec in records {
        let rec = rec.map_err(|e| Error::parse(origin, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize, name: &str| -> Result<f64> {
            let s = rec
                .get(i)
                .ok_or_else(|| Error::parse(origin, line, format!("missing column `{name}`")))?;
            let v: f64 = s
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("column `{name}`: `{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, line, format!("column `{name}` is not finite")));
            }
            Ok(v)
        };
        x.push(cell(ix, "x")? * unit.to_rad());
        value.push(cell(iv, "value")?);
        if let Some(i) = is {
            let s = cell(i, "sigma")?;
            if s <= 0.0 {
                return Err(Error::parse(origin, line, "column `sigma` must be positive"));
            }
            sigma.push(s);
        }
    }
    if x.is_empty() {
        return Err(Error::parse(origin, 0, "no data rows"));
    }
    let scan = MeasuredScan {
        x,
        unit,
        value,
        sigma: is.map(|_| sigma),
        metadata,
    };
    scan.validate()?;
    Ok(scan)
}

/// Least-squares fit summary, serialized as the JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Row-major parameter covariance.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub chi2: f64,
    pub dof: usize,
    pub evaluations: usize,
}

impl FitReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// One-sigma uncertainty of a parameter.
    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.covariance[i][i].sqrt())
    }
}

/// Covariance `(J^T J)^-1` for a weighted Jacobian. Without measured
/// uncertainties it is scaled by the reduced chi-square.
fn covariance(jac: &DMatrix<f64>, chi2: f64, dof: usize, absolute: bool) -> Vec<Vec<f64>> {
    let jtj = jac.transpose() * jac;
    let np = jtj.nrows();
    let inv = jtj
        .clone()
        .try_inverse()
        .unwrap_or_else(|| jtj.pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::from_element(np, np, f64::NAN)));
    let scale = if absolute || dof == 0 { 1.0 } else { chi2 / dof as f64 };
    (0..inv.nrows())
        .map(|i| (0..inv.ncols()).map(|j| inv[(i, j)] * scale).collect())
        .collect()
}

/// `A (x - x0) exp(-(x - x0)^2 / 2 w^2) + c`.
pub fn gaussian_derivative(x: f64, amplitude: f64, center: f64, width: f64, baseline: f64) -> f64 {
    let u = x - center;
    amplitude * u * (-0.5 * u * u / (width * width)).exp() + baseline
}

struct GaussDerivProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    p: Vector4<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for GaussDerivProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &Vector4<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector4<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let [a, x0, w, c] = [self.p[0], self.p[1], self.p[2], self.p[3]];
        Some(DVector::from_iterator(
            self.x.len(),
            (0..self.x.len()).map(|i| self.w[i] * (gaussian_derivative(self.x[i], a, x0, w, c) - self.y[i])),
        ))
    }

    fn jacobian(&self) -> Option<nalgebra::OMatrix<f64, Dyn, U4>> {
        let [a, x0, w, _] = [self.p[0], self.p[1], self.p[2], self.p[3]];
        let mut j = nalgebra::OMatrix::<f64, Dyn, U4>::zeros(self.x.len());
        for i in 0..self.x.len() {
            let u = self.x[i] - x0;
            let g = (-0.5 * u * u / (w * w)).exp();
            j[(i, 0)] = self.w[i] * u * g;
            j[(i, 1)] = self.w[i] * a * g * (u * u / (w * w) - 1.0);
            j[(i, 2)] = self.w[i] * a * u * g * u * u / (w * w * w);
            j[(i, 3)] = self.w[i];
        }
        Some(j)
    }
}

fn initial_guess(scan: &MeasuredScan) -> Vector4<f64> {
    let (x, y) = (&scan.x, &scan.value);
    let n = x.len();
    let c = y.iter().sum::<f64>() / n as f64;
    let (mut imax, mut imin) = (0, 0);
    for i in 0..n {
        if y[i] > y[imax] {
            imax = i;
        }
        if y[i] < y[imin] {
            imin = i;
        }
    }
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w = 0.5 * (x[imax] - x[imin]).abs();
    if !(w > span / (4.0 * n as f64)) {
        w = span / 6.0;
    }
    let x0 = 0.5 * (x[imax] + x[imin]);
    let sign = if x[imax] > x[imin] { 1.0 } else { -1.0 };
    let a = sign * 0.5 * (y[imax] - y[imin]) / (w * (-0.5f64).exp());
    Vector4::new(a, x0, w, c)
}

/// Fits the first derivative of a Gaussian plus a constant. Parameters are
/// `amplitude`, `center`, `width`, `baseline`.
pub fn fit_gaussian_derivative(scan: &MeasuredScan) -> Result<FitReport> {
    scan.validate()?;
    let n = scan.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 points, got {n}")));
    }
    let problem = GaussDerivProblem {
        x: &scan.x,
        y: &scan.value,
        w: scan.weights(),
        p: initial_guess(scan),
    };
    let (mut problem, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    let chi2 = 2.0 * report.objective_function;
    if !report.termination.was_successful() || !problem.p.iter().all(|v| v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: report.number_of_evaluations,
            residual: chi2.sqrt(),
        });
    }
    problem.p[2] = problem.p[2].abs();
    let jac = problem.jacobian().expect("jacobian is always available");
    let jac = DMatrix::from_iterator(n, 4, jac.iter().cloned());
    let dof = n.saturating_sub(4);
    Ok(FitReport {
        model: "gaussian-derivative".into(),
        names: ["amplitude", "center", "width", "baseline"].map(String::from).to_vec(),
        values: problem.p.iter().cloned().collect(),
        covariance: covariance(&jac, chi2, dof, scan.sigma.is_some()),
        converged: true,
        chi2,
        dof,
        evaluations: report.number_of_evaluations,
    })
}

/// Weighted straight-line fit `slope * x + intercept`.
pub fn linear_fit(scan: &MeasuredScan) -> Result<FitReport> {
    scan.validate()?;
    let n = scan.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 points, got {n}")));
    }
    let w = scan.weights();
    let mean = scan.x.iter().sum::<f64>() / n as f64;
    if scan.x.iter().all(|v| (v - mean).abs() <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidArgument("linear fit needs at least two distinct abscissae".into()));
    }
    let jac = DMatrix::from_fn(n, 2, |i, j| if j == 0 { w[i] * scan.x[i] } else { w[i] });
    let rhs = DVector::from_iterator(n, (0..n).map(|i| w[i] * scan.value[i]));
    let svd = jac.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("linear fit failed: {e}")))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("degenerate abscissa for linear fit".into()));
    }
    let chi2 = (&jac * &sol - &rhs).norm_squared();
    let dof = n.saturating_sub(2);
    Ok(FitReport {
        model: "linear".into(),
        names: vec!["slope".into(), "intercept".into()],
        values: vec![sol[0], sol[1]],
        covariance: covariance(&jac, chi2, dof, scan.sigma.is_some()),
        converged: true,
        chi2,
        dof,
        evaluations: 1,
    })
}

/// A spin-flipper coil tilted against the beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilModel {
    /// Coil tilt against the beam normal (rad).
    pub tilt: f64,
    /// Flip angle at zero divergence (rad).
    pub nominal_flip: f64,
    /// Guide field (T).
    pub guide_field: f64,
    /// Coil field giving the nominal flip on its own at normal incidence (T).
    pub coil_field: f64,
    /// Neutron speed (m/s).
    pub speed: f64,
    /// Coil thickness along its normal (m).
    pub path_length: f64,
    /// Gyromagnetic ratio (rad s^-1 T^-1).
    pub gamma: f64,
}

impl CoilModel {
    /// Coil thickness used when none is given (m).
    pub const DEFAULT_PATH_LENGTH: f64 = 0.1;

    /// Builds a pi/2 flipper for neutrons of `wavelength` (A).
    pub fn new(tilt: f64, guide_field: f64, wavelength: f64, path_length: f64, constants: &PhysicalConstants) -> Result<Self> {
        if !(wavelength > 0.0) || !(path_length > 0.0) {
            return Err(Error::InvalidArgument("wavelength and path length must be positive".into()));
        }
        if !guide_field.is_finite() || guide_field < 0.0 {
            return Err(Error::InvalidArgument(format!("guide field must be non-negative, got {guide_field}")));
        }
        if !(tilt.abs() < FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!("tilt {tilt} outside (-pi/2, pi/2)")));
        }
        let speed = constants.speed_from_wavelength(wavelength);
        let gamma = constants.gyromagnetic_ratio;
        Ok(Self {
            tilt,
            nominal_flip: FRAC_PI_2,
            guide_field,
            coil_field: FRAC_PI_2 * speed / (gamma * path_length),
            speed,
            path_length,
            gamma,
        })
    }

    /// Ratio of the coil amplitude needed against the guide field to the
    /// bare amplitude.
    pub fn amplitude_ratio(&self) -> f64 {
        1.0 + self.guide_field / self.coil_field
    }

    /// Precession accumulated by a neutron crossing at divergence `alpha`,
    /// with the coil amplitude calibrated so that `alpha = 0` gives the
    /// nominal flip.
    pub fn precession(&self, alpha: f64) -> Result<f64> {
        self.check(alpha)?;
        Ok(self.nominal_flip * self.tilt.cos() / (self.tilt - alpha).cos())
    }

    fn check(&self, alpha: f64) -> Result<()> {
        if !((self.tilt - alpha).abs() < FRAC_PI_2) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "|tilt - alpha| = {} must be below pi/2",
                (self.tilt - alpha).abs()
            )));
        }
        Ok(())
    }
}

/// Divergence-dependent spin phase of a tilted coil,
/// `g (pi/2) [1/cos(tilt) - 1/cos(tilt - alpha)]`, where `g` is the
/// amplitude ratio (1 without guide field).
pub fn coil_tilt_phase(model: &CoilModel, alpha: f64) -> Result<f64> {
    model.check(alpha)?;
    let t = model.tilt;
    Ok(model.amplitude_ratio() * model.nominal_flip * (1.0 / t.cos() - 1.0 / (t - alpha).cos()))
}

/// Synthetic `P_z(alpha) = sin(dphi(alpha))` scan with Gaussian noise of
/// standard deviation `noise`, reproducible from `seed`.
pub fn synthetic_coil_scan(model: &CoilModel, alphas: &[f64], noise: f64, seed: u64) -> Result<MeasuredScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut value = Vec::with_capacity(alphas.len());
    for &a in alphas {
        value.push(coil_tilt_phase(model, a)?.sin() + if noise > 0.0 { dist.sample(&mut rng) } else { 0.0 });
    }
    let sigma = (noise > 0.0).then(|| vec![noise; alphas.len()]);
    let mut scan = MeasuredScan::new(alphas.to_vec(), value, sigma)?;
    scan.unit = AngleUnit::Deg;
    Ok(scan)
}

#[cfg(test)]
mod tests;
