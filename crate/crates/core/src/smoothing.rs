//! Gaussian pre-smoothing restricted to the inpainting domain.
//!
//! The input is zero-extended outside `G` (known pixels and everything past
//! the image border contribute nothing), then convolved with the sampled,
//! truncated Gaussian `k(z) = exp(-|z|^2 / 2s^2) / (2 pi s^2)` or with its
//! analytic derivative `-(z_a / s^2) k(z)`. The kernel is not renormalised.
//!
//! Both kernels factor into 1-D taps over the square window, so the
//! convolution is done as a row pass followed by a column pass.

use crate::error::{EedError, Result};
use crate::grid::{check_same, Image, Mask, VectorField};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
    deriv_taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EedError::InvalidParameter {
                name: "sigma",
                reason: format!("must be positive and finite, got {sigma}"),
            });
        }
        let radius = (4.0 * sigma).ceil() as usize;
        let r = radius as isize;
        let norm = 1.0 / ((2.0 * PI).sqrt() * sigma);
        let taps: Vec<f64> = (-r..=r)
            .map(|t| norm * (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let deriv_taps = (-r..=r)
            .zip(&taps)
            .map(|(t, g)| -(t as f64) / (sigma * sigma) * g)
            .collect();
        Ok(Self {
            sigma,
            radius,
            taps,
            deriv_taps,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `k(dx, dy)` evaluated directly from the 2-D formula.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let s2 = self.sigma * self.sigma;
        let r2 = (dx * dx + dy * dy) as f64;
        (-r2 / (2.0 * s2)).exp() / (2.0 * PI * s2)
    }

    /// `(d/dx k, d/dy k)` at offset `(dx, dy)`.
    pub fn weight_gradient(&self, dx: isize, dy: isize) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        let k = self.weight(dx, dy);
        (-(dx as f64) / s2 * k, -(dy as f64) / s2 * k)
    }

    pub fn center_weight(&self) -> f64 {
        self.weight(0, 0)
    }

    /// All weights over the window, row-major with `dy` outermost.
    pub fn weights(&self) -> Vec<f64> {
        let r = self.radius as isize;
        (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| self.weight(dx, dy))
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.weights().iter().sum()
    }

    /// `max |grad k|` over the sampled window: the `L1 -> Linf` operator norm
    /// of [`smoothed_gradient`] when the window fits inside the image.
    pub fn max_gradient_weight(&self) -> f64 {
        let r = self.radius as isize;
        let mut best = 0.0f64;
        for dy in -r..=r {
            for dx in -r..=r {
                let (a, b) = self.weight_gradient(dx, dy);
                best = best.max(a.hypot(b));
            }
        }
        best
    }
}

/// `w_s(x) = sum_{z in G} k(x - z) w(z)`, defined at every pixel.
pub fn smooth_on_g(w: &Image, mask: &Mask, kernel: &GaussianKernel) -> Result<Image> {
    check_same(w.dims(), mask.dims())?;
    let (width, height) = w.dims();
    let masked = restrict(w, mask);
    let rows = pass_x(&masked, width, height, &kernel.taps, Parity::Even);
    let out = pass_y(&rows, width, height, &kernel.taps, Parity::Even);
    Ok(Image::from_raw(width, height, out))
}

/// `grad w_s(x) = sum_{z in G} (grad k)(x - z) w(z)`.
pub fn smoothed_gradient(w: &Image, mask: &Mask, kernel: &GaussianKernel) -> Result<VectorField> {
    check_same(w.dims(), mask.dims())?;
    let (width, height) = w.dims();
    let masked = restrict(w, mask);
    let dx_rows = pass_x(&masked, width, height, &kernel.deriv_taps, Parity::Odd);
    let gx = pass_y(&dx_rows, width, height, &kernel.taps, Parity::Even);
    let rows = pass_x(&masked, width, height, &kernel.taps, Parity::Even);
    let gy = pass_y(&rows, width, height, &kernel.deriv_taps, Parity::Odd);
    VectorField::new(width, height, gx, gy)
}

fn restrict(w: &Image, mask: &Mask) -> Vec<f64> {
    w.data()
        .iter()
        .zip(mask.known())
        .map(|(&v, &known)| if known { 0.0 } else { v })
        .collect()
}

#[derive(Clone, Copy)]
enum Parity {
    Even,
    Odd,
}

// Taps are paired as h(t) * (m[i - t] +/- m[i + t]) so that odd kernels
// cancel exactly on locally constant input.
fn conv_line(line: &[f64], out: &mut [f64], taps: &[f64], parity: Parity) {
    let r = taps.len() / 2;
    let n = line.len();
    let at = |i: isize| -> f64 {
        if i >= 0 && (i as usize) < n {
            line[i as usize]
        } else {
            0.0
        }
    };
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = match parity {
            Parity::Even => taps[r] * at(i),
            Parity::Odd => 0.0,
        };
        for t in 1..=r {
            let ti = t as isize;
            let pair = match parity {
                Parity::Even => at(i - ti) + at(i + ti),
                Parity::Odd => at(i - ti) - at(i + ti),
            };
            acc += taps[r + t] * pair;
        }
        *o = acc;
    }
}

fn pass_x(src: &[f64], w: usize, h: usize, taps: &[f64], parity: Parity) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for (row_in, row_out) in src.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
        conv_line(row_in, row_out, taps, parity);
    }
    out
}

fn pass_y(src: &[f64], w: usize, h: usize, taps: &[f64], parity: Parity) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut col = vec![0.0; h];
    let mut res = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = src[y * w + x];
        }
        conv_line(&col, &mut res, taps, parity);
        for y in 0..h {
            out[y * w + x] = res[y];
        }
    }
    out
}
