//! The linear step of the iteration: minimise
//!
//! ```text
//! J_w(v) = sum over gradient cells of D(grad w_s) grad v · grad v
//! ```
//!
//! over images `v` that equal `f` on the known set. Known pixels are
//! eliminated, leaving an SPD system in the unknowns that is solved with
//! Jacobi-preconditioned conjugate gradients. The operator is applied
//! matrix-free as `-div(D grad ·)`, which is half the Hessian of `J_w`.

use crate::error::{EedError, Result};
use crate::grid::{check_same, gradient, Image, Mask, VectorField};
use crate::smoothing::{smoothed_gradient, GaussianKernel};
use crate::tensor::{assemble_tensor, EedParams, Tensor2, TensorField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cg_tol: f64,
    /// `None` means ten times the number of unknowns.
    pub cg_max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cg_tol: 1e-10,
            cg_max_iter: None,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(EedError::InvalidParameter {
                name: "cg_tol",
                reason: format!("must lie in (0, 1), got {}", self.cg_tol),
            });
        }
        if self.cg_max_iter == Some(0) {
            return Err(EedError::InvalidParameter {
                name: "cg_max_iter",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn max_iter(&self, n: usize) -> usize {
        self.cg_max_iter.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub residual_history: Vec<f64>,
}

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

/// Discrete energy of `v` under a tensor field, summed over the gradient
/// cells of the mask. `v` need not match any data on the known set.
pub fn discrete_energy(v: &Image, field: &TensorField, mask: &Mask) -> Result<f64> {
    check_same(v.dims(), field.dims())?;
    check_same(v.dims(), mask.dims())?;
    let g = gradient(v);
    Ok(mask
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(k, _)| field.at(k).quad(g.at(k)))
        .sum())
}

/// Dirichlet-reduced system for the unknown pixels.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    width: usize,
    height: usize,
    unknowns: Vec<usize>,
    tensors: Vec<Tensor2>,
    cells: Vec<bool>,
    rhs: Vec<f64>,
    diag: Vec<f64>,
}

pub fn assemble(field: &TensorField, mask: &Mask, f: &Image) -> Result<LinearSystem> {
    check_same(f.dims(), mask.dims())?;
    check_same(field.dims(), mask.dims())?;
    mask.validate()?;
    let (width, height) = mask.dims();
    let unknowns: Vec<usize> = (0..mask.len()).filter(|&k| mask.is_unknown(k)).collect();
    let mut sys = LinearSystem {
        width,
        height,
        unknowns,
        tensors: field.tensors().to_vec(),
        cells: mask.cells().to_vec(),
        rhs: Vec::new(),
        diag: Vec::new(),
    };
    // b = div(D grad f_K) on G, with f_K = f on K and 0 on G
    let f_known: Vec<f64> = f
        .data()
        .iter()
        .zip(mask.known())
        .map(|(&v, &k)| if k { v } else { 0.0 })
        .collect();
    let neg = sys.neg_div_flux(&f_known);
    sys.rhs = sys.unknowns.iter().map(|&p| -neg[p]).collect();
    sys.diag = sys.unknowns.iter().map(|&p| sys.diagonal_at(p)).collect();
    Ok(sys)
}

impl LinearSystem {
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    /// `A x - b`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        ax.iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }

    /// Gathers the unknown values of a full image.
    pub fn gather(&self, img: &Image) -> Vec<f64> {
        self.unknowns.iter().map(|&p| img.data()[p]).collect()
    }

    /// Writes `x` into the unknown pixels of `base`.
    pub fn scatter(&self, x: &[f64], base: &Image) -> Image {
        let mut out = base.clone();
        for (&p, &v) in self.unknowns.iter().zip(x) {
            out.data_mut()[p] = v;
        }
        out
    }

    pub fn solve(&self, x0: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
        cg(self, &self.rhs, x0, cfg)
    }

    /// `-div(chi_cells D grad v)` on the full grid.
    fn neg_div_flux(&self, v: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let n = w * h;
        let mut fx = vec![0.0; n];
        let mut fy = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let k = y * w + x;
                if !self.cells[k] {
                    continue;
                }
                let gx = if x + 1 < w { v[k + 1] - v[k] } else { 0.0 };
                let gy = if y + 1 < h { v[k + w] - v[k] } else { 0.0 };
                let (a, b) = self.tensors[k].apply((gx, gy));
                fx[k] = a;
                fy[k] = b;
            }
        }
        let mut out = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let k = y * w + x;
                let mut d = 0.0;
                if x + 1 < w {
                    d -= fx[k];
                }
                if x > 0 {
                    d += fx[k - 1];
                }
                if y + 1 < h {
                    d -= fy[k];
                }
                if y > 0 {
                    d += fy[k - w];
                }
                out[k] = d;
            }
        }
        out
    }

    fn diagonal_at(&self, p: usize) -> f64 {
        let (w, h) = (self.width, self.height);
        let (x, y) = (p % w, p / w);
        let own = (
            if x + 1 < w { -1.0 } else { 0.0 },
            if y + 1 < h { -1.0 } else { 0.0 },
        );
        let mut d = self.tensors[p].quad(own);
        if x > 0 && self.cells[p - 1] {
            d += self.tensors[p - 1].a;
        }
        if y > 0 && self.cells[p - w] {
            d += self.tensors[p - w].c;
        }
        d
    }
}

impl LinearOperator for LinearSystem {
    fn dim(&self) -> usize {
        self.unknowns.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut v = vec![0.0; self.width * self.height];
        for (&p, &xi) in self.unknowns.iter().zip(x) {
            v[p] = xi;
        }
        let full = self.neg_div_flux(&v);
        for (o, &p) in out.iter_mut().zip(&self.unknowns) {
            *o = full[p];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients on `A x = b`, stopping on the true
/// relative residual `|b - A x| / |b| <= cg_tol`.
pub fn cg<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    cfg.validate()?;
    let n = op.dim();
    assert_eq!(b.len(), n, "rhs length");
    assert_eq!(x0.len(), n, "initial guess length");
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
                residual_history: vec![0.0],
            },
        ));
    }
    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Diagonal => op
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
    };
    let max_iter = cfg.max_iter(n);

    let mut x = x0.to_vec();
    let mut q = vec![0.0; n];
    let true_residual = |x: &[f64], q: &mut Vec<f64>| -> Vec<f64> {
        op.apply(x, q);
        b.iter().zip(q.iter()).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = true_residual(&x, &mut q);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut history = vec![res];
    if res <= cfg.cg_tol {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: res,
                residual_history: history,
            },
        ));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        op.apply(&p, &mut q);
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) {
            return Err(EedError::CgBreakdown {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= cfg.cg_tol {
            // confirm against the true residual; restart from it on drift
            r = true_residual(&x, &mut q);
            res = dot(&r, &r).sqrt() / b_norm;
            history.push(res);
            if res <= cfg.cg_tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        relative_residual: res,
                        residual_history: history,
                    },
                ));
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        history.push(res);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(EedError::CgNotConverged {
        iterations: max_iter,
        residual: res,
        history,
    })
}

/// Everything produced by one application of the operator `T`.
#[derive(Debug, Clone)]
pub struct TStep {
    pub u: Image,
    pub smoothed_grad: VectorField,
    pub tensor: TensorField,
    pub stats: SolveStats,
}

/// `T(w)`: the minimiser of `J_w` among images equal to `f` on the known set.
pub fn apply_t(
    w: &Image,
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    cfg: &SolverConfig,
) -> Result<TStep> {
    params.validate()?;
    check_same(w.dims(), mask.dims())?;
    check_same(f.dims(), mask.dims())?;
    let kernel = GaussianKernel::new(params.sigma)?;
    let smoothed_grad = smoothed_gradient(w, mask, &kernel)?;
    let tensor = assemble_tensor(&smoothed_grad, params);
    let system = assemble(&tensor, mask, f)?;
    let x0 = system.gather(w);
    let (x, stats) = system.solve(&x0, cfg)?;
    let mut base = f.clone();
    for &p in system.unknowns() {
        base.data_mut()[p] = 0.0;
    }
    let u = system.scatter(&x, &base);
    Ok(TStep {
        u,
        smoothed_grad,
        tensor,
        stats,
    })
}

pub fn solve_t(
    w: &Image,
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    cfg: &SolverConfig,
) -> Result<(Image, SolveStats)> {
    let step = apply_t(w, f, mask, params, cfg)?;
    Ok((step.u, step.stats))
}
