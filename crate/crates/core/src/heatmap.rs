//! Attention heatmaps from a feature volume: channel statistics, RGB
//! packing and overlay on the network input.

use ndarray::{Array3, Array4, ArrayView1, Axis as NdAxis};
use thiserror::Error;

use crate::volume::{saturate_u8, DType, Shape, Volume, VolumeData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("feature volume must be non-empty and finite")]
    BadFeatures,
    #[error("channel maps differ in shape")]
    MapShapes,
    #[error("heatmap {heatmap:?} x{factor} does not cover input {input:?} (need ceil(input / factor) == heatmap per axis)")]
    ShapeIncompatible {
        heatmap: [usize; 3],
        input: [usize; 3],
        factor: usize,
    },
    #[error("heatmap must be a uint8 RGB volume")]
    NotRgbHeatmap,
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("upscale factor must be >= 1")]
    ZeroFactor,
}

/// `(f, h, w, c)` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume(Array4<f32>);

impl FeatureVolume {
    pub fn new(a: Array4<f32>) -> Result<Self, HeatmapError> {
        if a.is_empty() || a.iter().any(|x| !x.is_finite()) {
            return Err(HeatmapError::BadFeatures);
        }
        Ok(Self(a.as_standard_layout().into_owned()))
    }

    pub fn array(&self) -> &Array4<f32> {
        &self.0
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.0.shape();
        [s[0], s[1], s[2], s[3]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMaps {
    pub std: Array3<f32>,
    pub max: Array3<f32>,
    pub mean: Array3<f32>,
}

fn reduce_lane(lane: ArrayView1<f32>) -> (f32, f32, f32) {
    let n = lane.len() as f64;
    let mut sum = 0.0f64;
    let mut max = f32::NEG_INFINITY;
    for &x in lane {
        sum += x as f64;
        max = max.max(x);
    }
    let mean = sum / n;
    let var = lane.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (var.sqrt() as f32, max, mean as f32)
}

/// Per-voxel population std, max and mean over the channel axis.
pub fn reduce_channels(fv: &FeatureVolume) -> ChannelMaps {
    let [f, h, w, _] = fv.shape();
    let mut std = Array3::zeros((f, h, w));
    let mut max = Array3::zeros((f, h, w));
    let mut mean = Array3::zeros((f, h, w));
    for (((lane, s), m), a) in fv
        .0
        .lanes(NdAxis(3))
        .into_iter()
        .zip(std.iter_mut())
        .zip(max.iter_mut())
        .zip(mean.iter_mut())
    {
        (*s, *m, *a) = reduce_lane(lane);
    }
    ChannelMaps { std, max, mean }
}

fn normalize(map: &Array3<f32>) -> impl Iterator<Item = u8> + '_ {
    let lo = map.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = map.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let range = hi - lo;
    map.iter().map(move |&x| {
        if range > 0.0 {
            ((x as f64 - lo) / range * 255.0).round() as u8
        } else {
            0
        }
    })
}

/// Packs the three maps into a uint8 `(f, h, w, 3)` volume with channels
/// `(std, max, mean)`, each min-max scaled to `[0, 255]` on its own.
/// Constant maps become 0.
pub fn to_rgb(maps: &ChannelMaps) -> Result<Volume, HeatmapError> {
    let dims = maps.std.shape();
    if maps.max.shape() != dims || maps.mean.shape() != dims {
        return Err(HeatmapError::MapShapes);
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], 3);
    let mut out = vec![0u8; shape.len()];
    for (c, map) in [&maps.std, &maps.max, &maps.mean].into_iter().enumerate() {
        for (i, v) in normalize(map).enumerate() {
            out[i * 3 + c] = v;
        }
    }
    Ok(Volume::from_parts(shape, VolumeData::U8(out)))
}

pub const DEFAULT_FACTOR: usize = 32;
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Nearest-neighbour upscale of `hm` by `factor`, cropped to the input's
/// extent, then `alpha * hm + (1 - alpha) * input` per channel (gray input
/// is repeated over the three channels), rounded to uint8.
pub fn upscale_overlay(
    hm: &Volume,
    input: &Volume,
    factor: usize,
    alpha: f64,
) -> Result<Volume, HeatmapError> {
    if factor == 0 {
        return Err(HeatmapError::ZeroFactor);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HeatmapError::BadAlpha(alpha));
    }
    let hs = hm.shape();
    let Some(hm_data) = hm.as_u8().filter(|_| hs.channels == 3) else {
        return Err(HeatmapError::NotRgbHeatmap);
    };
    let is = input.shape();
    let fits = (0..3).all(|a| is.spatial()[a].div_ceil(factor) == hs.spatial()[a]);
    if !fits {
        return Err(HeatmapError::ShapeIncompatible {
            heatmap: hs.spatial(),
            input: is.spatial(),
            factor,
        });
    }
    let out_shape = Shape::new(is.frames, is.height, is.width, 3);
    let ic = is.channels;
    let beta = 1.0 - alpha;
    // blend[h][i] for uint8 inputs
    let table: Option<Vec<[u8; 256]>> = matches!(input.dtype(), DType::U8).then(|| {
        (0..256)
            .map(|hv| {
                let mut row = [0u8; 256];
                for (iv, r) in row.iter_mut().enumerate() {
                    *r = saturate_u8((alpha * hv as f64 + beta * iv as f64) as f32);
                }
                row
            })
            .collect()
    });
    let mut out = vec![0u8; out_shape.len()];
    let row_len = is.width * 3;
    for f in 0..is.frames {
        for h in 0..is.height {
            let o = out_shape.offset(f, h, 0);
            let dst = &mut out[o..o + row_len];
            let hm_row = hs.offset(f / factor, h / factor, 0);
            let in_row = is.offset(f, h, 0);
            for w in 0..is.width {
                let hp = hm_row + (w / factor) * 3;
                for c in 0..3 {
                    let src = in_row + w * ic + if ic == 3 { c } else { 0 };
                    let hv = hm_data[hp + c];
                    dst[w * 3 + c] = match (&table, input.data()) {
                        (Some(t), VolumeData::U8(d)) => t[hv as usize][d[src] as usize],
                        (_, VolumeData::F32(d)) => saturate_u8((alpha * hv as f64 + beta * d[src] as f64) as f32),
                        _ => unreachable!(),
                    };
                }
            }
        }
    }
    Ok(Volume::from_parts(out_shape, VolumeData::U8(out)))
}

/// Full chain: channel reduction, RGB packing and overlay.
pub fn compile(
    fv: &FeatureVolume,
    input: &Volume,
    factor: usize,
    alpha: f64,
) -> Result<(Volume, Volume), HeatmapError> {
    let hm = to_rgb(&reduce_channels(fv))?;
    let overlay = upscale_overlay(&hm, input, factor, alpha)?;
    Ok((hm, overlay))
}
