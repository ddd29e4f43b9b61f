//! Exact Euclidean distance transforms (Felzenszwalb & Huttenlocher lower
//! envelope of parabolas, applied separably along each axis).

use rayon::prelude::*;

use crate::grid::{Mask, ScalarField};

const FAR: f64 = 1e20;

/// Squared distance transform of a sampled 1-D function, in place.
fn dt_1d(f: &mut [f64], v: &mut [usize], z: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |f: &[f64], p: usize, q: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = intersect(f, v[k], q);
        while s <= z[k] {
            k -= 1;
            s = intersect(f, v[k], q);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
    f.copy_from_slice(out);
}

/// Runs the 1-D transform along one axis of a dense array with the given
/// `len` along that axis and element `stride`; `lines` enumerates the
/// starting offsets of every line.
fn transform_axis(data: &mut [f64], len: usize, stride: usize, lines: &[usize]) {
    // Each line is processed independently; gather, transform, scatter.
    let results: Vec<Vec<f64>> = lines
        .par_iter()
        .map(|&start| {
            let mut f: Vec<f64> = (0..len).map(|i| data[start + i * stride]).collect();
            let mut v = vec![0usize; len];
            let mut z = vec![0f64; len + 1];
            let mut out = vec![0f64; len];
            dt_1d(&mut f, &mut v, &mut z, &mut out);
            f
        })
        .collect();
    for (&start, line) in lines.iter().zip(results) {
        for (i, val) in line.into_iter().enumerate() {
            data[start + i * stride] = val;
        }
    }
}

/// Unsigned Euclidean distance to the nearest `true` pixel. Returns `None`
/// when the mask has no `true` pixel.
pub fn distance_2d(seeds: &Mask) -> Option<ScalarField> {
    if seeds.count() == 0 {
        return None;
    }
    let (w, h) = (seeds.width(), seeds.height());
    let mut data: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let rows: Vec<usize> = (0..h).map(|y| y * w).collect();
    transform_axis(&mut data, w, 1, &rows);
    let cols: Vec<usize> = (0..w).collect();
    transform_axis(&mut data, h, w, &cols);
    Some(ScalarField::from_vec(w, h, data.into_iter().map(f64::sqrt).collect()))
}

/// Unsigned Euclidean distance in a `(x, y, d)` volume laid out as
/// `(y * width + x) * depth + d`, unit spacing on every axis. Returns `None`
/// when no seed is set.
pub fn distance_3d(seeds: &[bool], width: usize, height: usize, depth: usize) -> Option<Vec<f64>> {
    assert_eq!(seeds.len(), width * height * depth);
    if !seeds.iter().any(|&s| s) {
        return None;
    }
    let mut data: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    // along d
    let lines: Vec<usize> = (0..width * height).map(|i| i * depth).collect();
    transform_axis(&mut data, depth, 1, &lines);
    // along x
    let lines: Vec<usize> = (0..height)
        .flat_map(|y| (0..depth).map(move |d| y * width * depth + d))
        .collect();
    transform_axis(&mut data, width, depth, &lines);
    // along y
    let lines: Vec<usize> = (0..width * depth).collect();
    transform_axis(&mut data, height, width * depth, &lines);
    Some(data.into_iter().map(f64::sqrt).collect())
}
