//! Windowed structural similarity of grayscale images.

use image::GrayImage;

use crate::error::{Error, Result};

pub const WINDOW: u32 = 8;
pub const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Summed-area table with a zero first row and column.
struct Integral {
    stride: usize,
    data: Vec<i64>,
}

impl Integral {
    fn build(w: usize, h: usize, value: impl Fn(usize, usize) -> i64) -> Self {
        let stride = w + 1;
        let mut data = vec![0i64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0i64;
            for x in 0..w {
                row += value(x, y);
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        Self { stride, data }
    }

    fn sum(&self, x: usize, y: usize, w: usize, h: usize) -> i64 {
        let s = self.stride;
        self.data[(y + h) * s + x + w] - self.data[y * s + x + w] - self.data[(y + h) * s + x] + self.data[y * s + x]
    }
}

/// SSIM of one window from its exact integer moments over `n` pixels.
pub fn window_ssim(n: i64, sa: i64, sb: i64, saa: i64, sbb: i64, sab: i64) -> f64 {
    let n2 = (n * n) as f64;
    let mu_ab2 = 2.0 * (sa * sb) as f64 / n2;
    let mu_sq = (sa * sa + sb * sb) as f64 / n2;
    let var_a = (n * saa - sa * sa) as f64 / n2;
    let var_b = (n * sbb - sb * sb) as f64 / n2;
    let cov = (n * sab - sa * sb) as f64 / n2;
    ((mu_ab2 + C1) * (2.0 * cov + C2)) / ((mu_sq + C1) * (var_a + var_b + C2))
}

/// Mean SSIM over every 8×8 window (stride 1), uniform weights and population
/// statistics. A side shorter than 8 uses a single window spanning it.
pub fn compute_ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::InvalidArgument(format!(
            "ssim needs equal dimensions, got {:?} and {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("ssim of an empty image".into()));
    }
    let (pa, pb) = (a.as_raw(), b.as_raw());
    let at = |x: usize, y: usize| i64::from(pa[y * w + x]);
    let bt = |x: usize, y: usize| i64::from(pb[y * w + x]);
    let ia = Integral::build(w, h, at);
    let ib = Integral::build(w, h, bt);
    let iaa = Integral::build(w, h, |x, y| at(x, y) * at(x, y));
    let ibb = Integral::build(w, h, |x, y| bt(x, y) * bt(x, y));
    let iab = Integral::build(w, h, |x, y| at(x, y) * bt(x, y));

    let ww = w.min(WINDOW as usize);
    let wh = h.min(WINDOW as usize);
    let n = (ww * wh) as i64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - wh {
        for x in 0..=w - ww {
            total += window_ssim(
                n,
                ia.sum(x, y, ww, wh),
                ib.sum(x, y, ww, wh),
                iaa.sum(x, y, ww, wh),
                ibb.sum(x, y, ww, wh),
                iab.sum(x, y, ww, wh),
            );
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean absolute per-pixel difference.
pub fn mean_abs_diff(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::InvalidArgument("pixel difference needs equal dimensions".into()));
    }
    let n = a.as_raw().len().max(1);
    let total: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| u64::from(x.abs_diff(y)))
        .sum();
    Ok(total as f64 / n as f64)
}
