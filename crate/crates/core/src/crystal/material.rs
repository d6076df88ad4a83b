//! Line-oriented material and form-factor file formats.
//!
//! Material file (`*.mat`):
//!
//! ```text
//! # comment
//! material alpha-quartz
//! cell hexagonal <a> <c>        # or: cell cubic <a>
//! vector <x> <y> <z>            # alternative to `cell`: exactly three lines
//! site <label> <x> <y> <z> <b_fm> <Z>
//! ```
//!
//! Site coordinates are fractional. `b` is the coherent scattering length in
//! fm and `Z` the atomic number. Each site label must have an entry in the
//! form-factor table.
//!
//! Form-factor table: one line per element,
//! `<label> a1 b1 a2 b2 ... c`, with `s = sin(theta)/lambda` in 1/A and
//! `f(s) = sum a_i exp(-b_i s^2) + c` normalized to `f(0) = 1` on load.

use std::collections::BTreeMap;
use std::path::Path;

use super::{AtomSite, CrystalModel, FormFactor};
use crate::error::{Error, Result};
use crate::spinor::Vec3;

pub type FormFactorTable = BTreeMap<String, FormFactor>;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then(|| (i + 1, body.split_whitespace().collect()))
    })
}

fn number(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("expected a number, found `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

pub fn parse_form_factors(text: &str, path: &Path) -> Result<FormFactorTable> {
    let mut table = FormFactorTable::new();
    for (line, toks) in content_lines(text) {
        let (label, coeffs) = toks.split_first().expect("non-empty line");
        if coeffs.len() < 3 || coeffs.len() % 2 == 0 {
            return Err(Error::parse(
                path,
                line,
                "expected `<label> a1 b1 [a2 b2 ...] c`",
            ));
        }
        let vals = coeffs
            .iter()
            .map(|t| number(path, line, t))
            .collect::<Result<Vec<_>>>()?;
        let (pairs, c) = vals.split_at(vals.len() - 1);
        let a = pairs.iter().step_by(2).copied().collect();
        let b = pairs.iter().skip(1).step_by(2).copied().collect();
        let ff = FormFactor::gaussians(a, b, c[0])
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        if table.insert(label.to_string(), ff).is_some() {
            return Err(Error::parse(path, line, format!("duplicate element `{label}`")));
        }
    }
    Ok(table)
}

pub fn load_form_factors(path: &Path) -> Result<FormFactorTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_form_factors(&text, path)
}

pub fn parse_material(text: &str, path: &Path, form_factors: &FormFactorTable) -> Result<CrystalModel> {
    let mut id = None;
    let mut cell: Option<[Vec3; 3]> = None;
    let mut vectors = Vec::new();
    let mut sites = Vec::new();

    for (line, toks) in content_lines(text) {
        match toks[0] {
            "material" => {
                if toks.len() < 2 {
                    return Err(Error::parse(path, line, "missing material id"));
                }
                id = Some(toks[1..].join(" "));
            }
            "cell" => {
                let lattice = match (toks.get(1).copied(), toks.len()) {
                    (Some("hexagonal"), 4) => CrystalModel::hexagonal_lattice(
                        number(path, line, toks[2])?,
                        number(path, line, toks[3])?,
                    ),
                    (Some("cubic"), 3) => {
                        let a = number(path, line, toks[2])?;
                        [Vec3::x() * a, Vec3::y() * a, Vec3::z() * a]
                    }
                    _ => {
                        return Err(Error::parse(
                            path,
                            line,
                            "expected `cell hexagonal <a> <c>` or `cell cubic <a>`",
                        ))
                    }
                };
                cell = Some(lattice);
            }
            "vector" => {
                if toks.len() != 4 {
                    return Err(Error::parse(path, line, "expected `vector <x> <y> <z>`"));
                }
                vectors.push(Vec3::new(
                    number(path, line, toks[1])?,
                    number(path, line, toks[2])?,
                    number(path, line, toks[3])?,
                ));
            }
            "site" => {
                if toks.len() != 7 {
                    return Err(Error::parse(
                        path,
                        line,
                        "expected `site <label> <x> <y> <z> <b_fm> <Z>`",
                    ));
                }
                let label = toks[1].to_string();
                let form_factor = form_factors.get(&label).cloned().ok_or_else(|| {
                    Error::parse(path, line, format!("no form factor for element `{label}`"))
                })?;
                let z: u32 = toks[6].parse().map_err(|_| {
                    Error::parse(path, line, format!("atomic number `{}` is not an integer", toks[6]))
                })?;
                let position = Vec3::new(
                    number(path, line, toks[2])?,
                    number(path, line, toks[3])?,
                    number(path, line, toks[4])?,
                )
                .map(|v| v.rem_euclid(1.0));
                sites.push(AtomSite {
                    label,
                    position,
                    scattering_length: number(path, line, toks[5])?,
                    atomic_number: z,
                    form_factor,
                });
            }
            other => {
                return Err(Error::parse(path, line, format!("unknown keyword `{other}`")));
            }
        }
    }

    let lattice = match (cell, vectors.len()) {
        (Some(c), 0) => c,
        (None, 3) => [vectors[0], vectors[1], vectors[2]],
        (Some(_), _) => return Err(Error::parse(path, 0, "both `cell` and `vector` given")),
        (None, n) => {
            return Err(Error::parse(
                path,
                0,
                format!("lattice needs `cell` or three `vector` lines (found {n})"),
            ))
        }
    };
    if sites.is_empty() {
        return Err(Error::parse(path, 0, "no sites"));
    }
    CrystalModel::new(id.unwrap_or_else(|| "unnamed".into()), lattice, sites)
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}
