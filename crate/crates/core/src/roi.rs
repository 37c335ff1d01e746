//! Annotation-contour detection and region-of-interest cropping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{Cuboid, DType, Volume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoiError {
    #[error("expected 8-bit RGB frames, got {channels} channel(s) of {dtype}")]
    NotRgb { channels: usize, dtype: &'static str },
    #[error("no annotation pixels found in {frames} frame(s)")]
    NoContourFound { frames: usize },
    #[error("invalid color rule: {0}")]
    BadRule(String),
    #[error("no cuboids to summarise")]
    Empty,
    #[error("histogram bin width must be >= 1")]
    ZeroBinWidth,
}

/// HSV threshold. A pixel matches when its hue lies in `[hue_lo, hue_hi]`
/// degrees (wrapping through 0 when `hue_lo > hue_hi`) and saturation and
/// value reach their minima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorRule {
    pub hue_lo: f64,
    pub hue_hi: f64,
    pub s_min: f64,
    pub v_min: f64,
}

impl Default for ColorRule {
    fn default() -> Self {
        Self {
            hue_lo: 10.0,
            hue_hi: 45.0,
            s_min: 0.45,
            v_min: 0.30,
        }
    }
}

impl ColorRule {
    pub fn new(hue_lo: f64, hue_hi: f64, s_min: f64, v_min: f64) -> Result<Self, RoiError> {
        let r = Self {
            hue_lo,
            hue_hi,
            s_min,
            v_min,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RoiError> {
        let hue = 0.0..360.0;
        if !hue.contains(&self.hue_lo) || !hue.contains(&self.hue_hi) {
            return Err(RoiError::BadRule("hue bounds must lie in [0, 360)".into()));
        }
        if !(0.0..=1.0).contains(&self.s_min) || !(0.0..=1.0).contains(&self.v_min) {
            return Err(RoiError::BadRule("saturation and value minima must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn matches(&self, r: u8, g: u8, b: u8) -> bool {
        let (h, s, v) = rgb_to_hsv(r, g, b);
        if s < self.s_min || v < self.v_min {
            return false;
        }
        if self.hue_lo <= self.hue_hi {
            (self.hue_lo..=self.hue_hi).contains(&h)
        } else {
            h >= self.hue_lo || h <= self.hue_hi
        }
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`. Gray
/// pixels get hue 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    if d == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    (h.rem_euclid(360.0), s, max)
}

/// Per-pixel mask of an interleaved RGB frame.
pub fn orange_mask(frame: &[u8], channels: usize, rule: &ColorRule) -> Result<Vec<bool>, RoiError> {
    if channels != 3 {
        return Err(RoiError::NotRgb {
            channels,
            dtype: "uint8",
        });
    }
    Ok(frame
        .chunks_exact(3)
        .map(|p| rule.matches(p[0], p[1], p[2]))
        .collect())
}

fn check_rgb(v: &Volume) -> Result<(), RoiError> {
    let s = v.shape();
    if s.channels != 3 || v.dtype() != DType::U8 {
        return Err(RoiError::NotRgb {
            channels: s.channels,
            dtype: v.dtype().name(),
        });
    }
    Ok(())
}

/// Bounding box of matching pixels over all frames, padded by `pad` and
/// clamped to the frame. The frame range is always the full stack.
pub fn roi_cuboid(v: &Volume, rule: &ColorRule, pad: usize) -> Result<Cuboid, RoiError> {
    check_rgb(v)?;
    let s = v.shape();
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for f in 0..s.frames {
        let mask = orange_mask(v.frame_u8(f).unwrap(), 3, rule)?;
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let (r, c) = (i / s.width, i % s.width);
            r0 = r0.min(r);
            r1 = r1.max(r + 1);
            c0 = c0.min(c);
            c1 = c1.max(c + 1);
        }
    }
    if r0 == usize::MAX {
        return Err(RoiError::NoContourFound { frames: s.frames });
    }
    Ok(Cuboid::new(
        0..s.frames,
        r0.saturating_sub(pad)..r1.saturating_add(pad).min(s.height),
        c0.saturating_sub(pad)..c1.saturating_add(pad).min(s.width),
    ))
}

/// [`roi_cuboid`] followed by the crop. Contour pixels stay in the output.
pub fn roi_crop(v: &Volume, rule: &ColorRule, pad: usize) -> Result<(Cuboid, Volume), RoiError> {
    let c = roi_cuboid(v, rule, pad)?;
    let out = v.crop(&c).expect("cuboid is clamped to the volume");
    Ok((c, out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisStats {
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    /// `(bin start, count)` for bins `[start, start + bin_width)` from the
    /// bin holding `min` to the one holding `max`.
    pub histogram: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiStats {
    pub count: usize,
    pub bin_width: usize,
    /// Frames, rows, columns.
    pub axes: [AxisStats; 3],
}

/// Linear-interpolation percentile of sorted data (`q` in `[0, 100]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn axis_stats(sizes: &[usize], bin_width: usize) -> AxisStats {
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let (mean, std) = crate::reliability::mean_std(&xs);
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let min = *sizes.iter().min().unwrap();
    let max = *sizes.iter().max().unwrap();
    let first = min / bin_width;
    let mut counts = vec![0usize; max / bin_width - first + 1];
    for &s in sizes {
        counts[s / bin_width - first] += 1;
    }
    AxisStats {
        mean,
        std,
        min,
        max,
        p5: percentile(&sorted, 5.0),
        p25: percentile(&sorted, 25.0),
        p50: percentile(&sorted, 50.0),
        p75: percentile(&sorted, 75.0),
        p95: percentile(&sorted, 95.0),
        histogram: counts
            .into_iter()
            .enumerate()
            .map(|(i, n)| ((first + i) * bin_width, n))
            .collect(),
    }
}

pub fn roi_stats(cuboids: &[Cuboid], bin_width: usize) -> Result<RoiStats, RoiError> {
    if cuboids.is_empty() {
        return Err(RoiError::Empty);
    }
    if bin_width == 0 {
        return Err(RoiError::ZeroBinWidth);
    }
    let axis = |a: usize| {
        let sizes: Vec<usize> = cuboids.iter().map(|c| c.sizes()[a]).collect();
        axis_stats(&sizes, bin_width)
    };
    Ok(RoiStats {
        count: cuboids.len(),
        bin_width,
        axes: [axis(0), axis(1), axis(2)],
    })
}
