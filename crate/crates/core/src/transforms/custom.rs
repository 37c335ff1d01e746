//! Shape-changing transforms: border crop, plane drop and resize.

use super::interp::{nearest_index, resize_taps, trilinear};
use super::{Interpolation, TransformError};
use crate::rng::RandomStream;
use crate::volume::{Axis, Cuboid, Volume};

/// Removes `n ~ U{0, floor(max_frac * extent)}` planes from one border of a
/// uniformly chosen axis. Draw order: axis, border, `n`.
pub fn crop_from_borders(v: &Volume, rng: &mut RandomStream, max_frac: f64) -> Volume {
    let axis = Axis::ALL[rng.index(3)];
    let leading = rng.index(2) == 0;
    let extent = v.shape().extent(axis);
    let n_max = (max_frac * extent as f64).floor() as usize;
    let n = rng.uniform_int(0, n_max.min(extent - 1));
    crop_border_strip(v, axis, leading, n)
}

/// Removes `n` planes from the leading (index 0) or trailing border of `axis`.
/// At least one plane always survives.
pub fn crop_border_strip(v: &Volume, axis: Axis, leading: bool, n: usize) -> Volume {
    let s = v.shape();
    let extent = s.extent(axis);
    let n = n.min(extent - 1);
    if n == 0 {
        return v.clone();
    }
    let mut region = Cuboid::full(s);
    let (lo, hi) = match axis {
        Axis::Frames => (&mut region.f0, &mut region.f1),
        Axis::Height => (&mut region.r0, &mut region.r1),
        Axis::Width => (&mut region.c0, &mut region.c1),
    };
    if leading {
        *lo = n;
    } else {
        *hi = extent - n;
    }
    v.crop(&region).expect("strip region lies inside the volume")
}

/// Removes `k ~ U{0, floor(max_frac * (extent - 2))}` distinct interior
/// planes from one axis chosen uniformly among axes with at least 3 planes.
pub fn drop_plane(
    v: &Volume,
    rng: &mut RandomStream,
    max_frac: f64,
) -> Result<Volume, TransformError> {
    let s = v.shape();
    let eligible: Vec<Axis> = Axis::ALL
        .into_iter()
        .filter(|&a| s.extent(a) >= 3)
        .collect();
    if eligible.is_empty() {
        return Err(TransformError::AxisTooShort(s));
    }
    let axis = eligible[rng.index(eligible.len())];
    let interior = s.extent(axis) - 2;
    let k_max = (max_frac * interior as f64).floor() as usize;
    let k = rng.uniform_int(0, k_max.min(interior));
    let dropped: Vec<usize> = rng
        .sample_indices(interior, k)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    Ok(drop_planes(v, axis, &dropped))
}

/// Removes the listed plane indices along `axis`; survivors keep their order.
/// Indices outside the axis are ignored.
pub fn drop_planes(v: &Volume, axis: Axis, dropped: &[usize]) -> Volume {
    let extent = v.shape().extent(axis);
    let mut keep_mask = vec![true; extent];
    for &i in dropped {
        if i < extent {
            keep_mask[i] = false;
        }
    }
    if keep_mask.iter().all(|&k| k) {
        return v.clone();
    }
    let keep: Vec<usize> = (0..extent).filter(|&i| keep_mask[i]).collect();
    v.select_planes(axis, &keep)
}

/// Resamples to `target = (F, H, W)` with half-pixel-centre mapping and edge
/// clamping.
pub fn resize(v: &Volume, target: [usize; 3], mode: Interpolation) -> Volume {
    let s = v.shape();
    let dims = s.spatial();
    if dims == target {
        return v.clone();
    }
    let out_shape = s.with_spatial(target);
    match mode {
        Interpolation::Nearest => {
            let idx: Vec<Vec<usize>> = (0..3)
                .map(|a| (0..target[a]).map(|x| nearest_index(x, dims[a], target[a])).collect())
                .collect();
            v.gather(out_shape, |f, h, w| (idx[0][f], idx[1][h], idx[2][w]))
        }
        Interpolation::Trilinear => {
            let src = v.to_f32_vec();
            let tf = resize_taps(dims[0], target[0]);
            let th = resize_taps(dims[1], target[1]);
            let tw = resize_taps(dims[2], target[2]);
            let c = s.channels;
            let mut out = vec![0.0f32; out_shape.len()];
            let mut sample = [0.0f32; 3];
            let mut o = 0;
            for f in &tf {
                for h in &th {
                    for w in &tw {
                        trilinear(&src, s, *f, *h, *w, &mut sample);
                        out[o..o + c].copy_from_slice(&sample[..c]);
                        o += c;
                    }
                }
            }
            Volume::from_values(out_shape, out, v.dtype())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape;

    fn ramp(shape: Shape) -> Volume {
        Volume::from_f32(shape, (0..shape.len()).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn border_strip_semantics() {
        let v = ramp(Shape::new(60, 2, 3, 1));
        let out = crop_border_strip(&v, Axis::Frames, true, 6);
        assert_eq!(out.shape(), Shape::new(54, 2, 3, 1));
        assert_eq!(out.get(0, 1, 2, 0), v.get(6, 1, 2, 0));
        let tail = crop_border_strip(&v, Axis::Width, false, 1);
        assert_eq!(tail.shape(), Shape::new(60, 2, 2, 1));
        assert_eq!(crop_border_strip(&v, Axis::Height, true, 0), v);
    }

    #[test]
    fn border_crop_respects_bound() {
        let v = ramp(Shape::new(20, 11, 7, 1));
        for seed in 0..200 {
            let out = crop_from_borders(&v, &mut RandomStream::new(seed), 0.45);
            for (a, b) in out.shape().spatial().iter().zip(v.shape().spatial()) {
                assert!(*a >= b.div_ceil(2));
            }
        }
        assert_eq!(crop_from_borders(&v, &mut RandomStream::new(0), 0.0), v);
    }

    #[test]
    fn dropped_planes_keep_order() {
        let v = ramp(Shape::new(10, 2, 2, 1));
        let out = drop_planes(&v, Axis::Frames, &[3, 7]);
        assert_eq!(out.shape(), Shape::new(8, 2, 2, 1));
        let frames: Vec<usize> = (0..8).map(|f| out.get(f, 0, 0, 0) as usize / 4).collect();
        assert_eq!(frames, vec![0, 1, 2, 4, 5, 6, 8, 9]);
        assert_eq!(drop_planes(&v, Axis::Height, &[]), v);
    }

    #[test]
    fn drop_plane_never_removes_edges() {
        let v = ramp(Shape::new(12, 9, 10, 1));
        for seed in 0..200 {
            let out = drop_plane(&v, &mut RandomStream::new(seed), 0.45).unwrap();
            let s = out.shape();
            assert_eq!(out.get(0, 0, 0, 0), 0.0);
            assert_eq!(out.get(s.frames - 1, s.height - 1, s.width - 1, 0), v.get(11, 8, 9, 0));
        }
        let short = ramp(Shape::new(2, 2, 2, 1));
        assert!(matches!(
            drop_plane(&short, &mut RandomStream::new(0), 0.1),
            Err(TransformError::AxisTooShort(_))
        ));
        // Only the width axis is eligible here.
        let thin = ramp(Shape::new(2, 1, 40, 1));
        let out = drop_plane(&thin, &mut RandomStream::new(3), 0.45).unwrap();
        assert_eq!(out.shape().spatial()[..2], [2, 1]);
    }

    #[test]
    fn resize_identity_and_constants() {
        let v = ramp(Shape::new(3, 4, 5, 3));
        assert_eq!(resize(&v, [3, 4, 5], Interpolation::Nearest), v);
        let s = Shape::new(3, 4, 5, 1);
        let c = Volume::from_u8(s, vec![77; s.len()]).unwrap();
        for mode in [Interpolation::Nearest, Interpolation::Trilinear] {
            let out = resize(&c, [7, 2, 9], mode);
            assert_eq!(out.shape(), Shape::new(7, 2, 9, 1));
            assert!(out.as_u8().unwrap().iter().all(|&x| x == 77));
        }
    }

    #[test]
    fn trilinear_midpoint_is_corner_mean() {
        let corners: Vec<f32> = vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];
        let v = Volume::from_f32(Shape::new(2, 2, 2, 1), corners.clone()).unwrap();
        let out = resize(&v, [3, 3, 3], Interpolation::Trilinear);
        let mean = corners.iter().sum::<f32>() / 8.0;
        assert!((out.get(1, 1, 1, 0) - mean).abs() < 1e-5);
    }

    #[test]
    fn trilinear_within_range() {
        let mut rng = RandomStream::new(5);
        let s = Shape::new(5, 6, 7, 3);
        let v = Volume::from_f32(s, (0..s.len()).map(|_| rng.uniform() as f32).collect()).unwrap();
        let (lo, hi) = v.min_max();
        let (a, b) = resize(&v, [9, 4, 11], Interpolation::Trilinear).min_max();
        assert!(a >= lo - 1e-5 && b <= hi + 1e-5);
    }

    #[test]
    fn nearest_resize_is_idempotent_at_fixed_size() {
        let v = ramp(Shape::new(4, 6, 5, 1));
        let once = resize(&v, [8, 3, 5], Interpolation::Nearest);
        assert_eq!(resize(&once, [8, 3, 5], Interpolation::Nearest), once);
    }
}
