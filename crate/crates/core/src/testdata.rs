//! Synthetic inputs: the piecewise-constant two-region image and seeded
//! uniformly random masks.

use crate::error::{EedError, Result};
use crate::grid::{Image, Mask};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INSIDE: f64 = 0.8;
pub const OUTSIDE: f64 = 0.2;

/// `n x n` image: an off-centre disc at [`INSIDE`] on an [`OUTSIDE`] background.
pub fn two_region(n: usize) -> Result<Image> {
    let (cx, cy, r) = (0.45 * n as f64, 0.55 * n as f64, 0.3 * n as f64);
    Image::from_fn(n, n, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        if dx * dx + dy * dy <= r * r {
            INSIDE
        } else {
            OUTSIDE
        }
    })
}

/// Pixels of [`two_region`] within `band` pixels (4-neighbour steps) of a
/// pixel with the other value.
pub fn two_region_edge_band(img: &Image, band: usize) -> Vec<bool> {
    let (w, h) = img.dims();
    let mut dist = vec![usize::MAX; w * h];
    let mut frontier = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            let v = img.data()[k];
            let edge = (x + 1 < w && img.data()[k + 1] != v)
                || (x > 0 && img.data()[k - 1] != v)
                || (y + 1 < h && img.data()[k + w] != v)
                || (y > 0 && img.data()[k - w] != v);
            if edge {
                dist[k] = 0;
                frontier.push(k);
            }
        }
    }
    for d in 1..=band {
        let mut next = Vec::new();
        for &k in &frontier {
            for n in crate::grid::neighbours4(k % w, k / w, w, h).into_iter().flatten() {
                if dist[n] == usize::MAX {
                    dist[n] = d;
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    dist.into_iter().map(|d| d <= band).collect()
}

/// Exactly `round(density * w * h)` known pixels, uniformly at random.
pub fn random_mask(w: usize, h: usize, density: f64, seed: u64) -> Result<Mask> {
    if !(density > 0.0 && density < 1.0) {
        return Err(EedError::InvalidParameter {
            name: "density",
            reason: format!("must lie in (0, 1), got {density}"),
        });
    }
    let n = w * h;
    let count = ((density * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut known = vec![false; n];
    for k in sample(&mut rng, n, count) {
        known[k] = true;
    }
    Mask::new(w, h, known)
}
