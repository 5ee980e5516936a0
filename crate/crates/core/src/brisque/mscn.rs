//! Mean-subtracted contrast-normalized (MSCN) coefficients and their
//! neighbor products.

use std::sync::OnceLock;

use super::image::{GrayImage, Plane};

pub const WINDOW_RADIUS: usize = 3;
pub const WINDOW_SIGMA: f64 = 7.0 / 6.0;
pub const STABILITY_CONSTANT: f64 = 1.0;

/// One axis of the separable 7×7 Gaussian window, normalized so that the
/// full 2-D window sums to one.
pub fn gaussian_window() -> &'static [f64; 2 * WINDOW_RADIUS + 1] {
    static WINDOW: OnceLock<[f64; 2 * WINDOW_RADIUS + 1]> = OnceLock::new();
    WINDOW.get_or_init(|| {
        let mut w = [0.0; 2 * WINDOW_RADIUS + 1];
        for (i, v) in w.iter_mut().enumerate() {
            let x = i as f64 - WINDOW_RADIUS as f64;
            *v = (-(x * x) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        }
        let sum: f64 = w.iter().sum();
        w.map(|v| v / sum)
    })
}

/// Half-sample symmetric reflection: `… c b a | a b c … x y z | z y x …`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

/// Separable Gaussian blur with symmetric boundary handling.
pub fn gaussian_blur(plane: &Plane) -> Plane {
    let w = gaussian_window();
    let (width, height) = (plane.width, plane.height);
    let r = WINDOW_RADIUS as isize;

    let mut vertical = vec![0.0; width * height];
    for row in 0..height {
        for (k, wk) in w.iter().enumerate() {
            let src = reflect(row as isize + k as isize - r, height);
            let src_row = &plane.data[src * width..(src + 1) * width];
            let dst = &mut vertical[row * width..(row + 1) * width];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wk * s;
            }
        }
    }

    let mut out = vec![0.0; width * height];
    for row in 0..height {
        let src_row = &vertical[row * width..(row + 1) * width];
        for col in 0..width {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk * src_row[reflect(col as isize + k as isize - r, width)];
            }
            out[row * width + col] = acc;
        }
    }
    Plane::new(width, height, out)
}

pub fn compute_mscn(gray: &GrayImage) -> Plane {
    mscn_of_plane(gray.plane())
}

/// `(I − μ) / (σ + C)` with Gaussian-weighted local mean μ and deviation σ.
///
/// The window sums are taken over differences from the center pixel, so a
/// flat neighborhood gives exactly `μ = I` and `σ = 0`.
pub fn mscn_of_plane(plane: &Plane) -> Plane {
    let w = gaussian_window();
    let (width, height) = (plane.width, plane.height);
    let r = WINDOW_RADIUS as isize;
    let rows: Vec<[usize; 2 * WINDOW_RADIUS + 1]> = (0..height)
        .map(|i| std::array::from_fn(|k| reflect(i as isize + k as isize - r, height)))
        .collect();
    let cols: Vec<[usize; 2 * WINDOW_RADIUS + 1]> = (0..width)
        .map(|j| std::array::from_fn(|k| reflect(j as isize + k as isize - r, width)))
        .collect();

    let mut out = Vec::with_capacity(width * height);
    for row_idx in &rows {
        let center_row = row_idx[WINDOW_RADIUS];
        for col_idx in &cols {
            let center = plane.get(center_row, col_idx[WINDOW_RADIUS]);
            let mut shift = 0.0;
            for (wa, &ra) in w.iter().zip(row_idx) {
                let line = &plane.data[ra * width..(ra + 1) * width];
                let mut acc = 0.0;
                for (wb, &cb) in w.iter().zip(col_idx) {
                    acc += wb * (line[cb] - center);
                }
                shift += wa * acc;
            }
            let mu = center + shift;
            let mut var = 0.0;
            for (wa, &ra) in w.iter().zip(row_idx) {
                let line = &plane.data[ra * width..(ra + 1) * width];
                let mut acc = 0.0;
                for (wb, &cb) in w.iter().zip(col_idx) {
                    let d = line[cb] - mu;
                    acc += wb * d * d;
                }
                var += wa * acc;
            }
            out.push((center - mu) / (var.sqrt() + STABILITY_CONSTANT));
        }
    }
    Plane::new(width, height, out)
}

/// Products of each coefficient with one neighbor, per orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedProducts {
    /// (i, j) · (i, j+1)
    pub horizontal: Plane,
    /// (i, j) · (i+1, j)
    pub vertical: Plane,
    /// (i, j) · (i+1, j+1)
    pub main_diagonal: Plane,
    /// (i, j) · (i+1, j−1)
    pub secondary_diagonal: Plane,
}

impl PairedProducts {
    pub fn in_feature_order(&self) -> [&Plane; 4] {
        [&self.horizontal, &self.vertical, &self.main_diagonal, &self.secondary_diagonal]
    }
}

pub fn paired_products(m: &Plane) -> PairedProducts {
    let (w, h) = (m.width, m.height);
    let build = |out_w: usize, out_h: usize, f: &dyn Fn(usize, usize) -> f64| {
        let mut data = Vec::with_capacity(out_w * out_h);
        for r in 0..out_h {
            for c in 0..out_w {
                data.push(f(r, c));
            }
        }
        Plane::new(out_w, out_h, data)
    };
    let w1 = w.saturating_sub(1);
    let h1 = h.saturating_sub(1);
    PairedProducts {
        horizontal: build(w1, h, &|r, c| m.get(r, c) * m.get(r, c + 1)),
        vertical: build(w, h1, &|r, c| m.get(r, c) * m.get(r + 1, c)),
        main_diagonal: build(w1, h1, &|r, c| m.get(r, c) * m.get(r + 1, c + 1)),
        secondary_diagonal: build(w1, h1, &|r, c| m.get(r, c + 1) * m.get(r + 1, c)),
    }
}
