//! Canny edge detection on a single-channel `[0, 255]` grid.

use crate::error::{Error, Result};
use crate::types::{BoolGrid, Grid};

/// Boolean edge map.
pub type EdgeMap = BoolGrid;

const SIGMA: f64 = 1.4;

fn gaussian_kernel() -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - 2.0;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn at(data: &[f64], h: usize, w: usize, i: isize, j: isize) -> f64 {
    let y = i.clamp(0, h as isize - 1) as usize;
    let x = j.clamp(0, w as isize - 1) as usize;
    data[y * w + x]
}

/// Separable 5×5 Gaussian blur, replicate borders.
fn blur(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = (0..5)
                .map(|t| k[t] * at(src, h, w, i as isize, j as isize + t as isize - 2))
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = (0..5)
                .map(|t| k[t] * at(&tmp, h, w, i as isize + t as isize - 2, j as isize))
                .sum();
        }
    }
    out
}

fn sobel(src: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let p = |di: isize, dj: isize| at(src, h, w, i + di, j + dj);
            let x = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let y = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let idx = i as usize * w + j as usize;
            gx[idx] = x;
            gy[idx] = y;
        }
    }
    (gx, gy)
}

/// Thins ridges along the gradient direction, quantized to 0°, 45°, 90° or 135°.
///
/// Ties keep the pixel on the lower-index side so plateaus of width two
/// collapse to one pixel.
fn non_maximum_suppression(mag: &[f64], gx: &[f64], gy: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            let m = mag[idx];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[idx].atan2(gx[idx]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // (before, after) neighbour offsets along the gradient
            let (a, b): ((isize, isize), (isize, isize)) = if !(22.5..157.5).contains(&angle) {
                ((0, -1), (0, 1))
            } else if angle < 67.5 {
                ((-1, -1), (1, 1))
            } else if angle < 112.5 {
                ((-1, 0), (1, 0))
            } else {
                ((-1, 1), (1, -1))
            };
            let nb = |(di, dj): (isize, isize)| {
                let y = i as isize + di;
                let x = j as isize + dj;
                if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
                    0.0
                } else {
                    mag[y as usize * w + x as usize]
                }
            };
            if m > nb(a) && m >= nb(b) {
                out[idx] = m;
            }
        }
    }
    out
}

/// Strong pixels (> `high`) seed a flood through 8-connected weak pixels (> `low`).
fn hysteresis(thin: &[f64], h: usize, w: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edges = vec![false; h * w];
    let mut stack = Vec::new();
    for (idx, &m) in thin.iter().enumerate() {
        if m > high && !edges[idx] {
            edges[idx] = true;
            stack.push(idx);
            while let Some(p) = stack.pop() {
                let (i, j) = ((p / w) as isize, (p % w) as isize);
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let (y, x) = (i + di, j + dj);
                        if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
                            continue;
                        }
                        let q = y as usize * w + x as usize;
                        if !edges[q] && thin[q] > low {
                            edges[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
    }
    edges
}

/// Gradient magnitude after blurring, before thinning. Exposed for diagnostics.
pub fn gradient_magnitude(gray: &Grid<f32>) -> Grid<f64> {
    let (h, w) = (gray.height(), gray.width());
    let src: Vec<f64> = gray.as_slice().iter().map(|&v| v as f64).collect();
    let blurred = blur(&src, h, w);
    let (gx, gy) = sobel(&blurred, h, w);
    let mag = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    Grid::from_vec(h, w, mag).expect("same size")
}

/// Classic Canny: Gaussian σ=1.4 (5×5), Sobel, 4-direction NMS, hysteresis.
pub fn canny(gray: &Grid<f32>, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low < high) {
        return Err(Error::Invalid(format!("canny low ({low}) must be below high ({high})")));
    }
    let (h, w) = (gray.height(), gray.width());
    if h == 0 || w == 0 {
        return Ok(EdgeMap::filled(h, w, false));
    }
    let src: Vec<f64> = gray.as_slice().iter().map(|&v| v as f64).collect();
    let blurred = blur(&src, h, w);
    let (gx, gy) = sobel(&blurred, h, w);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let thin = non_maximum_suppression(&mag, &gx, &gy, h, w);
    EdgeMap::from_vec(h, w, hysteresis(&thin, h, w, low, high))
}
