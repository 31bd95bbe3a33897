//! Lagged-diffusivity iteration `u_{j+1} = T(u_j)` with the fixed-point
//! defect `J[u] = sum |grad u - grad T(u)|^2` as the stopping functional.

use crate::error::{EedError, Result};
use crate::grid::{check_same, field_l2_squared, gradient, norm_l1, norm_w11, seminorm_w11, Image, Mask};
use crate::solver::{apply_t, discrete_energy, SolverConfig};
use crate::tensor::EedParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub j_tol: f64,
    pub max_outer: usize,
    pub record_norms: bool,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            j_tol: 1e-8,
            max_outer: 100,
            record_norms: true,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.j_tol > 0.0) {
            return Err(EedError::InvalidParameter {
                name: "j_tol",
                reason: format!("must be positive, got {}", self.j_tol),
            });
        }
        if self.max_outer == 0 {
            return Err(EedError::InvalidParameter {
                name: "max_outer",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Error,
}

/// One row of the iteration trace. Row `j` describes `u_j`; for `j >= 1`
/// `j_functional` is the defect of the previous iterate, `J[u_{j-1}]`, and
/// `energy` is `J_{u_{j-1}}(u_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub j_index: usize,
    pub energy: Option<f64>,
    /// Energy of the data `f` under the same tensor; `energy` never exceeds it.
    pub comparison_energy: Option<f64>,
    pub j_functional: Option<f64>,
    pub l1_norm: Option<f64>,
    pub w11_seminorm: Option<f64>,
    pub cg_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub status: Status,
    /// Index of the returned iterate.
    pub returned_index: usize,
    pub error: Option<String>,
}

impl IterationReport {
    /// `|grad u_j|_1` for every recorded step.
    pub fn seminorm_trace(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.w11_seminorm).collect()
    }

    pub fn final_j(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.j_functional)
    }
}

/// Default admissible start: `f` on the known set, the mean of `f` over the
/// known set elsewhere.
pub fn default_start(f: &Image, mask: &Mask) -> Result<Image> {
    check_same(f.dims(), mask.dims())?;
    let n = mask.known_count();
    if n == 0 {
        return Err(EedError::EmptyDomain("no known pixels"));
    }
    let known = || f.data().iter().zip(mask.known()).filter(|(_, &k)| k).map(|(v, _)| *v);
    // offset from the minimum so that constant data yields its value exactly
    let lo = known().fold(f64::INFINITY, f64::min);
    let mean = lo + known().map(|v| v - lo).sum::<f64>() / n as f64;
    let mut u = f.clone();
    for (v, &k) in u.data_mut().iter_mut().zip(mask.known()) {
        if !k {
            *v = mean;
        }
    }
    Ok(u)
}

fn gradient_defect(u: &Image, tu: &Image, mask: &Mask) -> Result<f64> {
    Ok(field_l2_squared(&gradient(&u.sub(tu)?), mask))
}

/// `J[u] = sum |grad u - grad T(u)|^2` over the gradient cells.
pub fn j_functional(
    u: &Image,
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    cfg: &SolverConfig,
) -> Result<f64> {
    let step = apply_t(u, f, mask, params, cfg)?;
    gradient_defect(u, &step.u, mask)
}

fn check_admissible(u0: &Image, f: &Image, mask: &Mask) -> Result<()> {
    check_same(u0.dims(), mask.dims())?;
    check_same(f.dims(), mask.dims())?;
    for k in 0..mask.len() {
        if mask.is_known(k) && u0.data()[k] != f.data()[k] {
            return Err(EedError::InadmissibleStart {
                x: k % mask.width(),
                y: k / mask.width(),
            });
        }
    }
    Ok(())
}

fn norm_record(u: &Image, mask: &Mask, record: bool) -> Result<(Option<f64>, Option<f64>)> {
    if !record {
        return Ok((None, None));
    }
    Ok((Some(norm_l1(u, mask)?), Some(seminorm_w11(u, mask)?)))
}

/// Iterates `T` from `u0` until `J[u_j] <= j_tol` or `max_outer` steps.
///
/// On convergence the certified iterate `u_j` is returned. Solver failures
/// inside the loop end the run with status [`Status::Error`] and the last
/// good iterate; only invalid input is reported as `Err`.
pub fn iterate(
    u0: &Image,
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    solver: &SolverConfig,
    cfg: &FixedPointConfig,
) -> Result<(Image, IterationReport)> {
    cfg.validate()?;
    params.validate()?;
    solver.validate()?;
    check_admissible(u0, f, mask)?;
    mask.validate()?;

    let (l1, semi) = norm_record(u0, mask, cfg.record_norms)?;
    let mut records = vec![IterationRecord {
        j_index: 0,
        energy: None,
        comparison_energy: None,
        j_functional: None,
        l1_norm: l1,
        w11_seminorm: semi,
        cg_iters: 0,
    }];
    let mut current = u0.clone();
    for j in 1..=cfg.max_outer {
        let step = match apply_t(&current, f, mask, params, solver) {
            Ok(s) => s,
            Err(e) => {
                return Ok((
                    current,
                    IterationReport {
                        records,
                        status: Status::Error,
                        returned_index: j - 1,
                        error: Some(e.to_string()),
                    },
                ))
            }
        };
        let defect = gradient_defect(&current, &step.u, mask)?;
        let (l1, semi) = norm_record(&step.u, mask, cfg.record_norms)?;
        records.push(IterationRecord {
            j_index: j,
            energy: Some(discrete_energy(&step.u, &step.tensor, mask)?),
            comparison_energy: Some(discrete_energy(f, &step.tensor, mask)?),
            j_functional: Some(defect),
            l1_norm: l1,
            w11_seminorm: semi,
            cg_iters: step.stats.iterations,
        });
        if defect <= cfg.j_tol {
            return Ok((
                current,
                IterationReport {
                    records,
                    status: Status::Converged,
                    returned_index: j - 1,
                    error: None,
                },
            ));
        }
        current = step.u;
    }
    Ok((
        current,
        IterationReport {
            records,
            status: Status::MaxIter,
            returned_index: cfg.max_outer,
            error: None,
        },
    ))
}

/// Runs exactly `steps` applications of `T` and returns every iterate,
/// `u_0` included.
pub fn iterates(
    u0: &Image,
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    solver: &SolverConfig,
    steps: usize,
) -> Result<Vec<Image>> {
    check_admissible(u0, f, mask)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(u0.clone());
    for _ in 0..steps {
        let next = apply_t(out.last().unwrap(), f, mask, params, solver)?.u;
        out.push(next);
    }
    Ok(out)
}

/// `|R(n, k)|_{W11} = |u_{n+k} - u_k|_{W11}`.
pub fn iterate_residual(
    u0: &Image,
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    solver: &SolverConfig,
    n: usize,
    k: usize,
) -> Result<f64> {
    let seq = iterates(u0, f, mask, params, solver, n + k)?;
    norm_w11(&seq[n + k].sub(&seq[k])?, mask)
}
