//! Grid export.
//!
//! Binary layout (little endian). The 64-byte header is
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `SOGRID01`                        |
//! | 8      | 4    | dtype, 1 = complex f64 (re, im)         |
//! | 12     | 4    | f64 values per point (8)                |
//! | 16     | 4    | n_theta                                 |
//! | 20     | 4    | n_rho                                   |
//! | 24     | 8    | theta start (rad)                       |
//! | 32     | 8    | theta end (rad)                         |
//! | 40     | 8    | rho start (rad)                         |
//! | 48     | 8    | rho end (rad)                           |
//! | 56     | 8    | reserved, zero                          |
//!
//! followed by `n_theta * n_rho` records in grid order, each holding
//! `T_up, T_down, R_up, R_down` as complex f64.

use std::io::{Read, Write};

use super::WaveGrid;
use crate::error::{Error, Result};
use crate::spinor::{Spinor, C64};

pub const BINARY_MAGIC: &[u8; 8] = b"SOGRID01";
pub const BINARY_HEADER_LEN: usize = 64;
const DTYPE_C64: u32 = 1;
const COMPONENTS: u32 = 8;

fn axis_bounds(axis: &[f64]) -> (f64, f64) {
    (axis[0], axis[axis.len() - 1])
}

/// Long-form CSV: one row per grid point with real and imaginary parts of
/// both spinor components of both beams.
pub fn write_csv<W: Write>(grid: &WaveGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidArgument(format!("csv write: {e}"));
    w.write_record([
        "theta_rad", "rho_rad", "t_up_re", "t_up_im", "t_down_re", "t_down_im", "r_up_re", "r_up_im",
        "r_down_re", "r_down_im",
    ])
    .map_err(err)?;
    for (j, rho) in grid.rho.iter().enumerate() {
        for (i, theta) in grid.theta.iter().enumerate() {
            let k = grid.index(i, j);
            let (t, r) = (grid.transmitted[k].0, grid.reflected[k].0);
            let row = [
                *theta, *rho, t[0].re, t[0].im, t[1].re, t[1].im, r[0].re, r[0].im, r[1].re, r[1].im,
            ];
            w.write_record(row.iter().map(|v| format!("{v:.9e}"))).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv write: {e}")))?;
    Ok(())
}

pub fn write_binary<W: Write>(grid: &WaveGrid, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("binary grid write: {e}"));
    let mut header = Vec::with_capacity(BINARY_HEADER_LEN);
    header.extend_from_slice(BINARY_MAGIC);
    header.extend_from_slice(&DTYPE_C64.to_le_bytes());
    header.extend_from_slice(&COMPONENTS.to_le_bytes());
    header.extend_from_slice(&(grid.n_theta() as u32).to_le_bytes());
    header.extend_from_slice(&(grid.n_rho() as u32).to_le_bytes());
    let (t0, t1) = axis_bounds(&grid.theta);
    let (r0, r1) = axis_bounds(&grid.rho);
    for v in [t0, t1, r0, r1, 0.0] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(header.len(), BINARY_HEADER_LEN);
    out.write_all(&header).map_err(io)?;
    let mut buf = Vec::with_capacity(grid.transmitted.len() * 64);
    for (t, r) in grid.transmitted.iter().zip(&grid.reflected) {
        for c in t.0.iter().chain(r.0.iter()) {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io)
}

fn u32_at(b: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], o: usize) -> f64 {
    f64::from_le_bytes(b[o..o + 8].try_into().unwrap())
}

/// Reads a binary grid back; metadata other than the axes is not stored.
pub fn read_binary<R: Read>(mut input: R) -> Result<WaveGrid> {
    let bad = |m: &str| Error::InvalidArgument(format!("binary grid: {m}"));
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| bad(&e.to_string()))?;
    if bytes.len() < BINARY_HEADER_LEN || &bytes[..8] != BINARY_MAGIC {
        return Err(bad("missing magic"));
    }
    if u32_at(&bytes, 8) != DTYPE_C64 || u32_at(&bytes, 12) != COMPONENTS {
        return Err(bad("unsupported dtype"));
    }
    let (nt, nr) = (u32_at(&bytes, 16) as usize, u32_at(&bytes, 20) as usize);
    let n = nt * nr;
    if nt == 0 || nr == 0 || bytes.len() != BINARY_HEADER_LEN + n * 64 {
        return Err(bad("size does not match header"));
    }
    let axis = |a: f64, b: f64, n: usize| {
        super::AxisSpec { start: a, end: b, n }.values()
    };
    let theta = axis(f64_at(&bytes, 24), f64_at(&bytes, 32), nt);
    let rho = axis(f64_at(&bytes, 40), f64_at(&bytes, 48), nr);
    let c = |k: usize| {
        let o = BINARY_HEADER_LEN + 16 * k;
        C64::new(f64_at(&bytes, o), f64_at(&bytes, o + 8))
    };
    let mut t = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for p in 0..n {
        t.push(Spinor::new(c(4 * p), c(4 * p + 1)));
        r.push(Spinor::new(c(4 * p + 2), c(4 * p + 3)));
    }
    WaveGrid::from_fields(theta, rho, Spinor::zero(), t, r)
}
