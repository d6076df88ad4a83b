//! Two-component spinors and 2x2 complex matrices in the sigma_z basis.

use std::ops::{Add, Mul, Sub};

use nalgebra::Vector3;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Vec3 = Vector3<f64>;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spinor(pub [C64; 2]);

impl Spinor {
    pub const fn new(up: C64, down: C64) -> Self {
        Spinor([up, down])
    }

    pub const fn zero() -> Self {
        Spinor([ZERO, ZERO])
    }

    pub fn up(&self) -> C64 {
        self.0[0]
    }

    pub fn down(&self) -> C64 {
        self.0[1]
    }

    /// Pure spin state polarized along the unit vector `dir`.
    pub fn polarized(dir: &Vec3) -> Self {
        let d = dir.normalize();
        let theta = d.z.clamp(-1.0, 1.0).acos();
        let phi = d.y.atan2(d.x);
        Spinor([
            C64::new((theta / 2.0).cos(), 0.0),
            C64::from_polar((theta / 2.0).sin(), phi),
        ])
    }

    pub fn dot(&self, other: &Spinor) -> C64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    /// <psi|sigma|psi>, not normalized.
    pub fn sigma_expectation(&self) -> Vec3 {
        let (a, b) = (self.0[0], self.0[1]);
        let ab = a.conj() * b;
        Vec3::new(2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr())
    }

    /// Normalized polarization vector, `None` for a null spinor.
    pub fn polarization(&self) -> Option<Vec3> {
        let n = self.norm_sqr();
        (n > 0.0).then(|| self.sigma_expectation() / n)
    }

    pub fn scale(&self, s: C64) -> Spinor {
        Spinor([self.0[0] * s, self.0[1] * s])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(self, o: Spinor) -> Spinor {
        Spinor([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(self, o: Spinor) -> Spinor {
        Spinor([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

/// 2x2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinorMatrix(pub [[C64; 2]; 2]);

impl SpinorMatrix {
    pub const fn identity() -> Self {
        SpinorMatrix([[ONE, ZERO], [ZERO, ONE]])
    }

    pub const fn zero() -> Self {
        SpinorMatrix([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub fn scalar(s: C64) -> Self {
        SpinorMatrix([[s, ZERO], [ZERO, s]])
    }

    /// sigma . v
    pub fn sigma_dot(v: &Vec3) -> Self {
        SpinorMatrix([
            [C64::new(v.z, 0.0), C64::new(v.x, -v.y)],
            [C64::new(v.x, v.y), C64::new(-v.z, 0.0)],
        ])
    }

    /// Projector (1 + s sigma.u)/2 onto the spin channel s = +-1 along `u`.
    pub fn projector(u: &Vec3, s: f64) -> Self {
        let half = SpinorMatrix::identity().scale(C64::new(0.5, 0.0));
        half + SpinorMatrix::sigma_dot(u).scale(C64::new(0.5 * s, 0.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        SpinorMatrix([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        SpinorMatrix([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn apply(&self, v: &Spinor) -> Spinor {
        let m = &self.0;
        Spinor([
            m[0][0] * v.0[0] + m[0][1] * v.0[1],
            m[1][0] * v.0[0] + m[1][1] * v.0[1],
        ])
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest off-diagonal magnitude.
    pub fn off_diagonal(&self) -> f64 {
        self.0[0][1].norm().max(self.0[1][0].norm())
    }

    /// Decomposes `a 1 + b . sigma` into `(a, [bx, by, bz])`.
    pub fn pauli_components(&self) -> (C64, [C64; 3]) {
        let m = &self.0;
        let a = (m[0][0] + m[1][1]) * 0.5;
        let bz = (m[0][0] - m[1][1]) * 0.5;
        let bx = (m[0][1] + m[1][0]) * 0.5;
        let by = (m[1][0] - m[0][1]) * (-I * 0.5);
        (a, [bx, by, bz])
    }
}

impl Add for SpinorMatrix {
    type Output = SpinorMatrix;
    fn add(self, o: SpinorMatrix) -> SpinorMatrix {
        let (a, b) = (&self.0, &o.0);
        SpinorMatrix([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for SpinorMatrix {
    type Output = SpinorMatrix;
    fn sub(self, o: SpinorMatrix) -> SpinorMatrix {
        self + o.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for SpinorMatrix {
    type Output = SpinorMatrix;
    fn mul(self, o: SpinorMatrix) -> SpinorMatrix {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        SpinorMatrix(out)
    }
}
