//! Structural similarity (SSIM) between images, used as the perceptual
//! constraint when tuning attack strength.

use crate::diff::{Scalar, Tensor};
use crate::error::{Error, Result};

/// SSIM parameters. Defaults: 11x11 Gaussian window with sigma 1.5,
/// stability constants k1 = 0.01 and k2 = 0.03, dynamic range 1.0.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SsimConfig {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    /// Normalized 2-d Gaussian window, row-major, summing to 1.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_size;
        let center = (n as f64 - 1.0) / 2.0;
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let di = i as f64 - center;
                let dj = j as f64 - center;
                w.push((-(di * di + dj * dj) / (2.0 * self.sigma * self.sigma)).exp());
            }
        }
        let sum: f64 = w.iter().sum();
        for v in &mut w {
            *v /= sum;
        }
        w
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Mean SSIM between two `[C, H, W]` images.
///
/// The window slides over valid positions only (no padding); scores are
/// averaged over window positions and channels. All arithmetic is `f64`.
pub fn ssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, cfg: &SsimConfig) -> Result<f64> {
    let [c_n, h, w] = x.dims3("ssim")?;
    if x.shape() != y.shape() {
        return Err(Error::shape(
            "ssim",
            format!("mismatched shapes {:?} vs {:?}", x.shape(), y.shape()),
        ));
    }
    let n = cfg.window_size;
    if n == 0 || h < n || w < n {
        return Err(Error::shape(
            "ssim",
            format!("window {n} does not fit {h}x{w} image"),
        ));
    }
    let win = cfg.window();
    let (c1, c2) = (cfg.c1(), cfg.c2());

    let mut total = 0.0;
    let mut windows = 0usize;
    for c in 0..c_n {
        let xp = &x.data()[c * h * w..(c + 1) * h * w];
        let yp = &y.data()[c * h * w..(c + 1) * h * w];
        for oy in 0..=(h - n) {
            for ox in 0..=(w - n) {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut mxx = 0.0;
                let mut myy = 0.0;
                let mut mxy = 0.0;
                for i in 0..n {
                    let row = (oy + i) * w + ox;
                    let wrow = i * n;
                    for j in 0..n {
                        let wv = win[wrow + j];
                        let xv = xp[row + j].as_f64();
                        let yv = yp[row + j].as_f64();
                        mx += wv * xv;
                        my += wv * yv;
                        mxx += wv * xv * xv;
                        myy += wv * yv * yv;
                        mxy += wv * xv * yv;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let cxy = mxy - mx * my;
                let score = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += score;
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

/// Mean SSIM over original/adversarial pairs.
pub fn mean_ssim<T: Scalar>(pairs: &[(&Tensor<T>, &Tensor<T>)], cfg: &SsimConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEval("mean_ssim over zero pairs".to_string()));
    }
    let mut total = 0.0;
    for (x, y) in pairs {
        total += ssim(x, y, cfg)?;
    }
    Ok(total / pairs.len() as f64)
}
