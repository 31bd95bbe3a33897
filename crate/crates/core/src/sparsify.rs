//! Probabilistic sparsification: shrink the known set from the full image
//! by repeatedly dropping random candidates and restoring the ones the
//! inpainting reconstructs worst.

use crate::error::{EedError, Result};
use crate::fixed_point::{default_start, iterate, FixedPointConfig, Status};
use crate::grid::{Image, Mask};
use crate::solver::SolverConfig;
use crate::tensor::EedParams;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsifyConfig {
    pub target_density: f64,
    /// Fraction of the current mask drawn as removal candidates per round.
    pub p: f64,
    /// Fraction of the current mask removed for good per round; the other
    /// `p - q` worth of candidates is put back.
    pub q: f64,
    pub seed: u64,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        Self {
            target_density: 0.10,
            p: 0.02,
            q: 0.01,
            seed: 0,
        }
    }
}

impl SparsifyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(EedError::InvalidParameter { name, reason });
        if !(self.target_density > 0.0 && self.target_density < 1.0) {
            return bad("target_density", format!("must lie in (0, 1), got {}", self.target_density));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p", format!("must lie in (0, 1), got {}", self.p));
        }
        if !(self.q > 0.0 && self.q < self.p) {
            return bad("q", format!("must lie in (0, p), got {}", self.q));
        }
        Ok(())
    }

    /// Number of known pixels the run stops at.
    pub fn target_count(&self, pixels: usize) -> usize {
        (self.target_density * pixels as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub known_before: usize,
    pub candidates: usize,
    pub removed: usize,
    pub outer_iterations: usize,
    pub retried: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sparsified {
    pub mask: Mask,
    pub rounds: Vec<RoundRecord>,
}

/// Sizes of one round: `(candidates, permanently removed)`.
fn round_sizes(cfg: &SparsifyConfig, known: usize, target: usize) -> (usize, usize) {
    let cand = ((cfg.p * known as f64).floor() as usize).max(1);
    let remove = ((cfg.q * known as f64).round() as usize)
        .max(1)
        .min(cand)
        .min(known - target);
    (cand, remove)
}

pub fn probabilistic_sparsify(
    f: &Image,
    cfg: &SparsifyConfig,
    params: &EedParams,
    solver: &SolverConfig,
    fp: &FixedPointConfig,
) -> Result<Sparsified> {
    cfg.validate()?;
    params.validate()?;
    solver.validate()?;
    fp.validate()?;
    let (w, h) = f.dims();
    let target = cfg.target_count(w * h);
    if target == 0 {
        return Err(EedError::InvalidParameter {
            name: "target_density",
            reason: format!("keeps no pixel of a {w}x{h} image"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut known = vec![true; w * h];
    let mut count = w * h;
    let mut rounds = Vec::new();

    while count > target {
        let (n_cand, n_remove) = round_sizes(cfg, count, target);
        let members: Vec<usize> = (0..w * h).filter(|&k| known[k]).collect();
        let mut cands: Vec<usize> = sample(&mut rng, members.len(), n_cand)
            .into_iter()
            .map(|i| members[i])
            .collect();
        for &k in &cands {
            known[k] = false;
        }
        let mask = Mask::new(w, h, known.clone())?;
        let (u, outer, retried) = reconstruct(f, &mask, params, solver, fp, rounds.len())?;

        let err = |k: usize| (u.data()[k] - f.data()[k]).abs();
        cands.sort_by(|&a, &b| err(b).total_cmp(&err(a)).then(a.cmp(&b)));
        for &k in &cands[..n_cand - n_remove] {
            known[k] = true;
        }
        rounds.push(RoundRecord {
            round: rounds.len(),
            known_before: count,
            candidates: n_cand,
            removed: n_remove,
            outer_iterations: outer,
            retried,
        });
        count -= n_remove;
    }
    Ok(Sparsified {
        mask: Mask::new(w, h, known)?,
        rounds,
    })
}

fn reconstruct(
    f: &Image,
    mask: &Mask,
    params: &EedParams,
    solver: &SolverConfig,
    fp: &FixedPointConfig,
    round: usize,
) -> Result<(Image, usize, bool)> {
    let u0 = default_start(f, mask)?;
    let mut cfg = *fp;
    for attempt in 0..2 {
        let (u, rep) = iterate(&u0, f, mask, params, solver, &cfg)?;
        match rep.status {
            Status::Converged => return Ok((u, rep.records.len() - 1, attempt > 0)),
            Status::MaxIter => cfg.max_outer *= 2,
            Status::Error => {
                return Err(EedError::ReconstructionFailed {
                    round,
                    reason: rep.error.unwrap_or_default(),
                })
            }
        }
    }
    Err(EedError::SparsifyNotConverged { round })
}
