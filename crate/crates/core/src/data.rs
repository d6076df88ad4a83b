//! Bundled material data and the data-file search path.
//!
//! Relative data paths are resolved against, in order: the directories in
//! `SPINORBIT_DATA_PATH` (colon separated), the current directory, and the
//! crate's own `data/` directory. The reference quartz files are also
//! compiled in, so `builtin:quartz` works without any files on disk.

use std::path::{Path, PathBuf};

use crate::crystal::{parse_form_factors, parse_material, CrystalModel, FormFactorTable};
use crate::error::{Error, Result};

pub const DATA_PATH_ENV: &str = "SPINORBIT_DATA_PATH";

const QUARTZ_MAT: &str = include_str!("../data/quartz.mat");
const FORM_FACTORS: &str = include_str!("../data/formfactors.dat");

pub fn builtin_form_factors() -> FormFactorTable {
    parse_form_factors(FORM_FACTORS, Path::new("builtin:formfactors.dat"))
        .expect("bundled form factor table parses")
}

/// Reference alpha-quartz model anchored to 2 d(110) = 5.0279 A.
pub fn reference_quartz() -> CrystalModel {
    parse_material(QUARTZ_MAT, Path::new("builtin:quartz"), &builtin_form_factors())
        .expect("bundled quartz model parses")
}

pub fn resolve(path: &Path) -> Option<PathBuf> {
    if path.is_absolute() {
        return path.exists().then(|| path.to_path_buf());
    }
    let mut dirs: Vec<PathBuf> = std::env::var(DATA_PATH_ENV)
        .map(|v| std::env::split_paths(&v).collect())
        .unwrap_or_default();
    dirs.push(PathBuf::from("."));
    dirs.push(Path::new(env!("CARGO_MANIFEST_DIR")).join("data"));
    dirs.into_iter().map(|d| d.join(path)).find(|p| p.exists())
}

/// Loads a crystal from a material file, `builtin:quartz`, and an optional
/// form-factor table (bundled table when `None`).
pub fn load_crystal(material: &str, form_factors: Option<&Path>) -> Result<CrystalModel> {
    let table = match form_factors {
        Some(p) => {
            let full = resolve(p).ok_or_else(|| {
                Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "not found"))
            })?;
            crate::crystal::load_form_factors(&full)?
        }
        None => builtin_form_factors(),
    };
    if material == "builtin:quartz" {
        return parse_material(QUARTZ_MAT, Path::new(material), &table);
    }
    let p = Path::new(material);
    let full = resolve(p).ok_or_else(|| {
        Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "not found"))
    })?;
    let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
    parse_material(&text, &full, &table)
}
