//! Dense row-major 2-D grids over the cyclopean visual field.

use std::ops::{Index, IndexMut};

use rayon::prelude::*;

/// A `width x height` grid stored row-major (`y * width + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Real-valued field: phi, disparity maps, consensus mean/sigma, distance maps.
pub type ScalarField = Field<f64>;

/// Boolean mask over the visual field.
pub type Mask = Field<bool>;

impl<T: Clone> Field<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Field<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "field data length mismatch");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Field<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    /// Lookup with replicate padding for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> &T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        &self.data[yc * self.width + xc]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Field<U> {
        Field {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }
}

impl<T: Send> Field<T> {
    /// Builds a field row by row in parallel. `f(x, y)` must be pure so the
    /// result does not depend on scheduling.
    pub fn par_from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self {
        let rows: Vec<Vec<T>> = (0..height)
            .into_par_iter()
            .map(|y| (0..width).map(|x| f(x, y)).collect())
            .collect();
        let data: Vec<T> = rows.into_iter().flatten().collect();
        Self { width, height, data }
    }
}

impl<T> Index<(usize, usize)> for Field<T> {
    type Output = T;

    #[inline]
    fn index(&self, (x, y): (usize, usize)) -> &T {
        &self.data[y * self.width + x]
    }
}

impl<T> IndexMut<(usize, usize)> for Field<T> {
    #[inline]
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        &mut self.data[y * self.width + x]
    }
}

impl ScalarField {
    /// Linear interpolation along x on row `y`; out-of-field positions are
    /// clamped to the border (replicate padding).
    #[inline]
    pub fn sample_x(&self, x: f64, y: usize) -> f64 {
        let row = self.row(y);
        let last = (self.width - 1) as f64;
        let xc = x.clamp(0.0, last);
        let x0 = xc.floor();
        let i0 = x0 as usize;
        let t = xc - x0;
        if t == 0.0 || i0 + 1 >= self.width {
            row[i0]
        } else {
            row[i0] * (1.0 - t) + row[i0 + 1] * t
        }
    }

    /// Central difference along x with replicate padding.
    #[inline]
    pub fn dx(&self, x: usize, y: usize) -> f64 {
        let xi = x as isize;
        let yi = y as isize;
        0.5 * (self.get_clamped(xi + 1, yi) - self.get_clamped(xi - 1, yi))
    }

    /// Central difference along y with replicate padding.
    #[inline]
    pub fn dy(&self, x: usize, y: usize) -> f64 {
        let xi = x as isize;
        let yi = y as isize;
        0.5 * (self.get_clamped(xi, yi + 1) - self.get_clamped(xi, yi - 1))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}
