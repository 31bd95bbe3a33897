//! Pixel-grid primitives: scalar images, known-pixel masks, forward-difference
//! gradients and their adjoint divergence, and the discrete norms over the
//! inpainting domain.
//!
//! Coordinates are `(x, y)` with `x` the column and `y` the row; storage is
//! row-major. Pixel spacing is 1.
//!
//! The inpainting domain `G` is the set of unknown pixels. Gradient-based
//! quantities (seminorms, energies) are summed over the *gradient cells* of
//! `G`: every pixel whose forward-difference stencil `{x, x+e_x, x+e_y}`
//! touches `G`. This includes the links between a known pixel and an
//! unknown right or lower neighbour, so each unknown pixel sees the full
//! five-point coupling to its neighbours.

use crate::error::{EedError, Result};

/// Real-valued scalar field on a rectangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(EedError::InvalidParameter {
                name: "data",
                reason: format!("expected {} values, got {}", width * height, data.len()),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(EedError::NonFinite {
                x: k % width,
                y: k / width,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds an image from a buffer already known to be finite and sized.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn scaled(&self, alpha: f64) -> Image {
        Image::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|v| alpha * v).collect(),
        )
    }

    /// Pixelwise `self - other`.
    pub fn sub(&self, other: &Image) -> Result<Image> {
        check_same(self.dims(), other.dims())?;
        Ok(Image::from_raw(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Known-pixel indicator. `true` marks a pixel of the known set `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    known: Vec<bool>,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, known: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if known.len() != width * height {
            return Err(EedError::InvalidParameter {
                name: "known",
                reason: format!("expected {} flags, got {}", width * height, known.len()),
            });
        }
        let cells = gradient_cells(width, height, &known);
        Ok(Self {
            width,
            height,
            known,
            cells,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut known = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                known.push(f(x, y));
            }
        }
        Self::new(width, height, known)
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

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    #[inline]
    pub fn is_known(&self, k: usize) -> bool {
        self.known[k]
    }

    #[inline]
    pub fn is_unknown(&self, k: usize) -> bool {
        !self.known[k]
    }

    /// Gradient cells of `G` (see module docs).
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn unknown_count(&self) -> usize {
        self.known.len() - self.known_count()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn density(&self) -> f64 {
        self.known_count() as f64 / self.known.len() as f64
    }

    /// Checks the solvability contract: at least one known and one unknown
    /// pixel, and every 4-connected unknown component is 4-adjacent to a
    /// known pixel.
    pub fn validate(&self) -> Result<()> {
        let n_known = self.known_count();
        if n_known == self.known.len() {
            return Err(EedError::NoUnknowns);
        }
        if let Some((x, y)) = self.floating_component() {
            return Err(EedError::SingularSystem { x, y });
        }
        Ok(())
    }

    /// First pixel of an unknown component with no known 4-neighbour, if any.
    pub fn floating_component(&self) -> Option<(usize, usize)> {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        for start in 0..w * h {
            if self.known[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut anchored = false;
            while let Some(k) = stack.pop() {
                let (x, y) = (k % w, k / w);
                for n in neighbours4(x, y, w, h).into_iter().flatten() {
                    if self.known[n] {
                        anchored = true;
                    } else if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            if !anchored {
                return Some((start % w, start / w));
            }
        }
        None
    }
}

fn gradient_cells(w: usize, h: usize, known: &[bool]) -> Vec<bool> {
    let mut cells = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            cells[k] = !known[k]
                || (x + 1 < w && !known[k + 1])
                || (y + 1 < h && !known[k + w]);
        }
    }
    cells
}

pub(crate) fn neighbours4(x: usize, y: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    let k = y * w + x;
    [
        (x > 0).then(|| k - 1),
        (x + 1 < w).then(|| k + 1),
        (y > 0).then(|| k - w),
        (y + 1 < h).then(|| k + w),
    ]
}

/// Pair field `(gx, gy)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, gx: Vec<f64>, gy: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if gx.len() != width * height || gy.len() != width * height {
            return Err(EedError::InvalidParameter {
                name: "field",
                reason: "component length does not match dimensions".into(),
            });
        }
        Ok(Self {
            width,
            height,
            gx,
            gy,
        })
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
    pub fn at(&self, k: usize) -> (f64, f64) {
        (self.gx[k], self.gy[k])
    }

    #[inline]
    pub fn magnitude(&self, k: usize) -> f64 {
        self.gx[k].hypot(self.gy[k])
    }
}

/// Forward differences; the outward difference on the last column/row is 0.
pub fn gradient(img: &Image) -> VectorField {
    let (w, h) = img.dims();
    let u = img.data();
    let mut field = VectorField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if x + 1 < w {
                field.gx[k] = u[k + 1] - u[k];
            }
            if y + 1 < h {
                field.gy[k] = u[k + w] - u[k];
            }
        }
    }
    field
}

/// Negative adjoint of [`gradient`]: `<grad u, F> = -<u, div F>`.
pub fn divergence(field: &VectorField) -> Image {
    let (w, h) = field.dims();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            let mut d = 0.0;
            if x + 1 < w {
                d += field.gx[k];
            }
            if x > 0 {
                d -= field.gx[k - 1];
            }
            if y + 1 < h {
                d += field.gy[k];
            }
            if y > 0 {
                d -= field.gy[k - w];
            }
            out[k] = d;
        }
    }
    Image::from_raw(w, h, out)
}

/// `sum_G |u|`.
pub fn norm_l1(img: &Image, mask: &Mask) -> Result<f64> {
    check_same(img.dims(), mask.dims())?;
    if mask.unknown_count() == 0 {
        return Err(EedError::EmptyDomain("norm_l1 over an empty unknown set"));
    }
    Ok(img
        .data()
        .iter()
        .zip(mask.known())
        .filter(|(_, &k)| !k)
        .map(|(v, _)| v.abs())
        .sum())
}

/// `sum |grad u|` over the gradient cells of `G`, Euclidean pair norm.
pub fn seminorm_w11(img: &Image, mask: &Mask) -> Result<f64> {
    check_same(img.dims(), mask.dims())?;
    if mask.unknown_count() == 0 {
        return Err(EedError::EmptyDomain("seminorm over an empty unknown set"));
    }
    Ok(field_l1(&gradient(img), mask))
}

pub fn norm_w11(img: &Image, mask: &Mask) -> Result<f64> {
    Ok(norm_l1(img, mask)? + seminorm_w11(img, mask)?)
}

/// `sum |F|` over the gradient cells of `G`.
pub fn field_l1(field: &VectorField, mask: &Mask) -> f64 {
    mask.cells()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(k, _)| field.magnitude(k))
        .sum()
}

/// `sum |F|^2` over the gradient cells of `G`.
pub fn field_l2_squared(field: &VectorField, mask: &Mask) -> f64 {
    mask.cells()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(k, _)| field.gx[k] * field.gx[k] + field.gy[k] * field.gy[k])
        .sum()
}

/// `sup |F|` over the gradient cells of `G`.
pub fn field_sup(field: &VectorField, mask: &Mask) -> f64 {
    mask.cells()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(k, _)| field.magnitude(k))
        .fold(0.0, f64::max)
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(EedError::InvalidDimensions { width, height });
    }
    Ok(())
}

pub(crate) fn check_same(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(EedError::DimensionMismatch { expected, actual });
    }
    Ok(())
}
