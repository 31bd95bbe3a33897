//! Edge-enhancing diffusion tensors.
//!
//! For a smoothed gradient `v` the tensor has eigenvector `v⊥` with
//! eigenvalue 1 (diffusion along the edge) and eigenvector `v` with the
//! Charbonnier eigenvalue `(1 + |v|^2 / lambda^2)^(-1/2)` (attenuated
//! diffusion across the edge).

use crate::error::{EedError, Result};
use crate::grid::VectorField;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EedParams {
    pub lambda: f64,
    pub sigma: f64,
}

impl Default for EedParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sigma: 0.8,
        }
    }
}

impl EedParams {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self> {
        let p = Self { lambda, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("sigma", self.sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EedError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Symmetric 2x2 tensor `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Tensor2 {
    pub const IDENTITY: Tensor2 = Tensor2 {
        a: 1.0,
        b: 0.0,
        c: 1.0,
    };

    /// `D q · q`.
    #[inline]
    pub fn quad(&self, q: (f64, f64)) -> f64 {
        self.a * q.0 * q.0 + 2.0 * self.b * q.0 * q.1 + self.c * q.1 * q.1
    }

    #[inline]
    pub fn apply(&self, q: (f64, f64)) -> (f64, f64) {
        (self.a * q.0 + self.b * q.1, self.b * q.0 + self.c * q.1)
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }
}

/// `(1 + |p|^2 / lambda^2)^(-1/2)`.
pub fn charbonnier_eigenvalue(p: (f64, f64), lambda: f64) -> f64 {
    let s = (p.0 * p.0 + p.1 * p.1) / (lambda * lambda);
    1.0 / (1.0 + s).sqrt()
}

/// EED tensor for a single smoothed gradient `v`; identity when `v = 0`.
pub fn eed_tensor(v: (f64, f64), lambda: f64) -> Tensor2 {
    let n2 = v.0 * v.0 + v.1 * v.1;
    if n2 == 0.0 {
        return Tensor2::IDENTITY;
    }
    let g = charbonnier_eigenvalue(v, lambda);
    let (x2, y2, xy) = (v.0 * v.0 / n2, v.1 * v.1 / n2, v.0 * v.1 / n2);
    Tensor2 {
        a: y2 + g * x2,
        b: (g - 1.0) * xy,
        c: x2 + g * y2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    width: usize,
    height: usize,
    tensors: Vec<Tensor2>,
}

impl TensorField {
    pub fn uniform(width: usize, height: usize, t: Tensor2) -> Self {
        Self {
            width,
            height,
            tensors: vec![t; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn at(&self, k: usize) -> Tensor2 {
        self.tensors[k]
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.tensors
    }
}

pub fn assemble_tensor(grad: &VectorField, params: &EedParams) -> TensorField {
    let (width, height) = grad.dims();
    TensorField {
        width,
        height,
        tensors: (0..width * height)
            .map(|k| eed_tensor(grad.at(k), params.lambda))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub checked: usize,
    /// `min (D q·q - floor)/|q|^2`; negative means the floor is violated.
    pub worst_lower_slack: f64,
    /// `min (|q|^2 - D q·q)/|q|^2`; negative means the ceiling is violated.
    pub worst_upper_slack: f64,
    pub violations: usize,
    pub pass: bool,
}

const ELLIPTICITY_TOL: f64 = 1e-12;

/// Checks `(1 + |p|^2/lambda^2)^(-1/2) |q|^2 <= D q·q <= |q|^2` at every
/// pixel for a fixed battery of directions plus `p` and `p⊥`.
pub fn check_ellipticity(field: &TensorField, grad: &VectorField, lambda: f64) -> EllipticityReport {
    let mut acc = EllipticityAcc::default();
    for k in 0..field.tensors.len() {
        let p = grad.at(k);
        let t = field.at(k);
        for i in 0..8 {
            let th = i as f64 * std::f64::consts::PI / 8.0;
            acc.push(&t, p, (th.cos(), th.sin()), lambda);
        }
        acc.push(&t, p, p, lambda);
        acc.push(&t, p, (-p.1, p.0), lambda);
    }
    acc.finish()
}

/// A gradient `p` and a test direction `q`.
pub type Probe = ((f64, f64), (f64, f64));

/// Checks the envelope for explicit `(p, q)` pairs.
pub fn check_ellipticity_pairs(pairs: &[Probe], lambda: f64) -> EllipticityReport {
    let mut acc = EllipticityAcc::default();
    for &(p, q) in pairs {
        acc.push(&eed_tensor(p, lambda), p, q, lambda);
    }
    acc.finish()
}

struct EllipticityAcc {
    checked: usize,
    lower: f64,
    upper: f64,
    violations: usize,
}

impl Default for EllipticityAcc {
    fn default() -> Self {
        Self {
            checked: 0,
            lower: f64::INFINITY,
            upper: f64::INFINITY,
            violations: 0,
        }
    }
}

impl EllipticityAcc {
    fn push(&mut self, t: &Tensor2, p: (f64, f64), q: (f64, f64), lambda: f64) {
        let q2 = q.0 * q.0 + q.1 * q.1;
        if q2 == 0.0 {
            return;
        }
        let dq = t.quad(q) / q2;
        let floor = charbonnier_eigenvalue(p, lambda);
        let lo = dq - floor;
        let hi = 1.0 - dq;
        self.lower = self.lower.min(lo);
        self.upper = self.upper.min(hi);
        if lo < -ELLIPTICITY_TOL || hi < -ELLIPTICITY_TOL {
            self.violations += 1;
        }
        self.checked += 1;
    }

    fn finish(self) -> EllipticityReport {
        EllipticityReport {
            checked: self.checked,
            worst_lower_slack: self.lower,
            worst_upper_slack: self.upper,
            violations: self.violations,
            pass: self.violations == 0,
        }
    }
}
