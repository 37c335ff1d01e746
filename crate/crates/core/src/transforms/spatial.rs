//! Geometric transforms: small rotation, elastic warp, 90-degree rotation,
//! flips and grid dropout.

use super::interp::{trilinear, Tap};
use crate::rng::RandomStream;
use crate::volume::{Shape, Volume, VolumeData};

/// Rotates every `(H, W)` plane by one angle drawn from `[-max_deg, max_deg)`.
pub fn rotate_small(v: &Volume, rng: &mut RandomStream, max_deg: f64) -> Volume {
    let angle = rng.uniform_range(-max_deg, max_deg);
    rotate_plane(v, angle)
}

/// Rotates each `(H, W)` plane by `angle_deg` about its centre.
///
/// Bilinear sampling; samples outside the plane read as zero.
pub fn rotate_plane(v: &Volume, angle_deg: f64) -> Volume {
    let s = v.shape();
    let (h, w, c) = (s.height, s.width, s.channels);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;

    // Per output pixel: up to four (source pixel, weight) taps.
    let mut taps: Vec<[(usize, f32); 4]> = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = (sx - x0) as f32;
            let fy = (sy - y0) as f32;
            let corners = [
                (0, 0, (1.0 - fy) * (1.0 - fx)),
                (0, 1, (1.0 - fy) * fx),
                (1, 0, fy * (1.0 - fx)),
                (1, 1, fy * fx),
            ];
            let mut t = [(0usize, 0.0f32); 4];
            for (slot, (oy, ox, weight)) in t.iter_mut().zip(corners) {
                let yy = y0 + oy as f64;
                let xx = x0 + ox as f64;
                if weight != 0.0 && yy >= 0.0 && xx >= 0.0 && yy < h as f64 && xx < w as f64 {
                    *slot = (yy as usize * w + xx as usize, weight);
                }
            }
            taps.push(t);
        }
    }

    let src = v.to_f32_vec();
    let mut out = vec![0.0f32; s.len()];
    match c {
        1 => rotate_frames::<1>(&src, &taps, &mut out),
        3 => rotate_frames::<3>(&src, &taps, &mut out),
        _ => unreachable!("volumes have 1 or 3 channels, got {c}"),
    }
    Volume::from_values(s, out, v.dtype())
}

fn rotate_frames<const C: usize>(src: &[f32], taps: &[[(usize, f32); 4]], out: &mut [f32]) {
    let plane = taps.len();
    for (frame_in, frame_out) in src.chunks_exact(plane * C).zip(out.chunks_exact_mut(plane * C)) {
        for (t, px) in taps.iter().zip(frame_out.chunks_exact_mut(C)) {
            let mut acc = [0.0f32; C];
            for &(idx, weight) in t {
                let s = &frame_in[idx * C..idx * C + C];
                for k in 0..C {
                    acc[k] += weight * s[k];
                }
            }
            px.copy_from_slice(&acc);
        }
    }
}

/// Control lattice of `(grid, grid, grid)` displacement vectors, in voxels,
/// spanning the volume corner to corner.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticLattice {
    grid: usize,
    disp: Vec<[f64; 3]>,
}

impl ElasticLattice {
    pub fn new(grid: usize, disp: Vec<[f64; 3]>) -> Option<Self> {
        (grid >= 2 && disp.len() == grid * grid * grid).then_some(Self { grid, disp })
    }

    pub fn zeros(grid: usize) -> Self {
        Self {
            grid,
            disp: vec![[0.0; 3]; grid * grid * grid],
        }
    }

    /// Independent `N(0, sigma^2)` displacements, drawn in lattice order
    /// (frame-major, then components f, h, w).
    pub fn random(rng: &mut RandomStream, grid: usize, sigma: f64) -> Self {
        let disp = (0..grid * grid * grid)
            .map(|_| {
                [
                    sigma * rng.normal(),
                    sigma * rng.normal(),
                    sigma * rng.normal(),
                ]
            })
            .collect();
        Self { grid, disp }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    fn at(&self, a: usize, b: usize, c: usize) -> [f64; 3] {
        self.disp[(a * self.grid + b) * self.grid + c]
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], w: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * w,
        a[1] + (b[1] - a[1]) * w,
        a[2] + (b[2] - a[2]) * w,
    ]
}

/// Position of voxel `i` of an `n`-long axis on a `grid`-point lattice.
fn lattice_tap(i: usize, n: usize, grid: usize) -> Tap {
    let t = if n > 1 {
        i as f64 * (grid - 1) as f64 / (n - 1) as f64
    } else {
        0.0
    };
    Tap::clamped(t, grid)
}

/// Random elastic warp: a normal control lattice upsampled trilinearly.
pub fn elastic(v: &Volume, rng: &mut RandomStream, grid: usize, sigma: f64) -> Volume {
    let lattice = ElasticLattice::random(rng, grid, sigma);
    elastic_with_lattice(v, &lattice)
}

/// Resamples `v` at `x + d(x)`, where `d` is the trilinear upsampling of the
/// lattice; sampling is trilinear with edge clamping.
pub fn elastic_with_lattice(v: &Volume, lattice: &ElasticLattice) -> Volume {
    let s = v.shape();
    let g = lattice.grid();
    let src = v.to_f32_vec();
    let mut out = vec![0.0f32; s.len()];
    let c = s.channels;

    let h_taps: Vec<Tap> = (0..s.height).map(|i| lattice_tap(i, s.height, g)).collect();
    let w_taps: Vec<Tap> = (0..s.width).map(|i| lattice_tap(i, s.width, g)).collect();

    // Lattice collapsed along frames, then along height.
    let mut plane = vec![[0.0f64; 3]; g * g];
    let mut line = vec![[0.0f64; 3]; g];
    let mut sample = [0.0f32; 3];
    for f in 0..s.frames {
        let tf = lattice_tap(f, s.frames, g);
        for b in 0..g {
            for cc in 0..g {
                plane[b * g + cc] =
                    lerp3(lattice.at(tf.lo, b, cc), lattice.at(tf.hi, b, cc), tf.w as f64);
            }
        }
        for (y, th) in h_taps.iter().enumerate() {
            for cc in 0..g {
                line[cc] = lerp3(plane[th.lo * g + cc], plane[th.hi * g + cc], th.w as f64);
            }
            for (x, tw) in w_taps.iter().enumerate() {
                let d = lerp3(line[tw.lo], line[tw.hi], tw.w as f64);
                let pf = Tap::clamped(f as f64 + d[0], s.frames);
                let ph = Tap::clamped(y as f64 + d[1], s.height);
                let pw = Tap::clamped(x as f64 + d[2], s.width);
                trilinear(&src, s, pf, ph, pw, &mut sample);
                let o = s.offset(f, y, x);
                out[o..o + c].copy_from_slice(&sample[..c]);
            }
        }
    }
    Volume::from_values(s, out, v.dtype())
}

/// Plane of a 90-degree rotation, named by its two axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationPlane {
    HeightWidth,
    FramesHeight,
    FramesWidth,
}

impl RotationPlane {
    pub const ALL: [RotationPlane; 3] = [
        RotationPlane::HeightWidth,
        RotationPlane::FramesHeight,
        RotationPlane::FramesWidth,
    ];

    fn axes(self) -> (usize, usize) {
        match self {
            RotationPlane::HeightWidth => (1, 2),
            RotationPlane::FramesHeight => (0, 1),
            RotationPlane::FramesWidth => (0, 2),
        }
    }
}

/// Uniformly random plane and quarter-turn count `k` in `0..4`.
pub fn rotate90(v: &Volume, rng: &mut RandomStream) -> Volume {
    let plane = RotationPlane::ALL[rng.index(3)];
    let k = rng.index(4);
    rotate90_plane(v, plane, k)
}

/// Rotates by `k` quarter turns in `plane`: one turn maps output `(i, j)`
/// to input `(j, B - 1 - i)` where `B` is the input extent of the second axis.
pub fn rotate90_plane(v: &Volume, plane: RotationPlane, k: usize) -> Volume {
    let k = k % 4;
    if k == 0 {
        return v.clone();
    }
    let (a, b) = plane.axes();
    let s = v.shape();
    let dims = s.spatial();
    let (na, nb) = (dims[a], dims[b]);
    let mut out_dims = dims;
    if k % 2 == 1 {
        out_dims.swap(a, b);
    }
    v.gather(s.with_spatial(out_dims), |f, h, w| {
        let o = [f, h, w];
        let (i, j) = (o[a], o[b]);
        let mut src = o;
        let (sa, sb) = match k {
            1 => (j, nb - 1 - i),
            2 => (na - 1 - i, nb - 1 - j),
            _ => (na - 1 - j, i),
        };
        src[a] = sa;
        src[b] = sb;
        (src[0], src[1], src[2])
    })
}

/// Reverses each spatial axis independently with probability `p_axis`
/// (coins drawn in frames, height, width order).
pub fn flip(v: &Volume, rng: &mut RandomStream, p_axis: f64) -> Volume {
    let axes = [rng.bernoulli(p_axis), rng.bernoulli(p_axis), rng.bernoulli(p_axis)];
    flip_axes(v, axes)
}

pub fn flip_axes(v: &Volume, axes: [bool; 3]) -> Volume {
    if !axes.iter().any(|&a| a) {
        return v.clone();
    }
    let s = v.shape();
    let pick = |i: usize, n: usize, on: bool| if on { n - 1 - i } else { i };
    v.gather(s, |f, h, w| {
        (
            pick(f, s.frames, axes[0]),
            pick(h, s.height, axes[1]),
            pick(w, s.width, axes[2]),
        )
    })
}

/// Grid dropout with a global offset drawn uniformly from `[0, cell)` per axis.
pub fn grid_dropout(v: &Volume, rng: &mut RandomStream, cell: usize, ratio: f64) -> Volume {
    let offset = [
        rng.index(cell),
        rng.index(cell),
        rng.index(cell),
    ];
    grid_dropout_with_offset(v, cell, ratio, offset)
}

/// Side of the zeroed sub-block inside a `cell`-long block.
pub(crate) fn hole_len(cell: usize, ratio: f64) -> usize {
    ((ratio * cell as f64).round() as usize).min(cell)
}

/// Zeroes voxel `x` (all channels) iff `(x - offset) mod cell < hole` on
/// every axis, with `hole = round(ratio * cell)`.
pub fn grid_dropout_with_offset(v: &Volume, cell: usize, ratio: f64, offset: [usize; 3]) -> Volume {
    let hole = hole_len(cell, ratio);
    if hole == 0 {
        return v.clone();
    }
    let s = v.shape();
    let mask = |axis: usize, n: usize| -> Vec<bool> {
        let o = offset[axis] % cell;
        (0..n).map(|x| (x + cell - o) % cell < hole).collect()
    };
    let (mf, mh, mw) = (mask(0, s.frames), mask(1, s.height), mask(2, s.width));
    let mut data = v.data().clone();
    fn zero<T: Copy + Default>(buf: &mut [T], s: Shape, mf: &[bool], mh: &[bool], mw: &[bool]) {
        for f in (0..s.frames).filter(|&f| mf[f]) {
            for h in (0..s.height).filter(|&h| mh[h]) {
                for w in (0..s.width).filter(|&w| mw[w]) {
                    let o = s.offset(f, h, w);
                    buf[o..o + s.channels].fill(T::default());
                }
            }
        }
    }
    match &mut data {
        VolumeData::U8(buf) => zero(buf, s, &mf, &mh, &mw),
        VolumeData::F32(buf) => zero(buf, s, &mf, &mh, &mw),
    }
    Volume::from_parts(s, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::DType;

    fn random_f32(shape: Shape, seed: u64) -> Volume {
        let mut rng = RandomStream::new(seed);
        let data = (0..shape.len()).map(|_| rng.uniform() as f32 * 100.0).collect();
        Volume::from_f32(shape, data).unwrap()
    }

    fn random_u8(shape: Shape, seed: u64) -> Volume {
        let mut rng = RandomStream::new(seed);
        let data = (0..shape.len()).map(|_| rng.uniform_int(0, 255) as u8).collect();
        Volume::from_u8(shape, data).unwrap()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let v = random_f32(Shape::new(3, 8, 9, 3), 1);
        assert_eq!(rotate_plane(&v, 0.0), v);
        let u = random_u8(Shape::new(2, 7, 6, 1), 2);
        assert_eq!(rotate_plane(&u, 0.0), u);
    }

    #[test]
    fn rotation_fixes_centre_voxel() {
        let s = Shape::new(1, 9, 9, 1);
        let mut data = vec![0.0f32; s.len()];
        data[s.offset(0, 4, 4)] = 200.0;
        let v = Volume::from_f32(s, data).unwrap();
        let out = rotate_plane(&v, 10.0);
        assert!((out.get(0, 4, 4, 0) - 200.0).abs() < 1e-5);
        assert_eq!(out.shape(), s);
    }

    #[test]
    fn rotation_range_includes_zero_fill() {
        let v = random_f32(Shape::new(2, 10, 12, 1), 3);
        let (lo, hi) = v.min_max();
        let mut rng = RandomStream::new(4);
        for _ in 0..10 {
            let (a, b) = rotate_small(&v, &mut rng, 10.0).min_max();
            assert!(a >= lo.min(0.0) - 1e-5 && b <= hi + 1e-5);
        }
    }

    #[test]
    fn elastic_zero_sigma_is_identity() {
        let v = random_f32(Shape::new(5, 6, 7, 3), 5);
        let out = elastic(&v, &mut RandomStream::new(0), 4, 0.0);
        for (a, b) in out.as_f32().unwrap().iter().zip(v.as_f32().unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn elastic_preserves_constants_and_range() {
        let s = Shape::new(6, 7, 8, 1);
        let c = Volume::from_f32(s, vec![3.5; s.len()]).unwrap();
        let out = elastic(&c, &mut RandomStream::new(1), 4, 6.0);
        assert!(out.as_f32().unwrap().iter().all(|&x| (x - 3.5).abs() < 1e-5));

        let v = random_f32(Shape::new(10, 12, 12, 1), 6);
        let (lo, hi) = v.min_max();
        for seed in 0..5 {
            let out = elastic(&v, &mut RandomStream::new(seed), 4, 6.0);
            let (a, b) = out.min_max();
            assert!(a >= lo - 1e-5 && b <= hi + 1e-5);
            assert_ne!(out, v);
        }
    }

    #[test]
    fn elastic_uniform_shift_translates() {
        // A lattice of identical displacements is a pure translation.
        let s = Shape::new(4, 5, 6, 1);
        let v = random_f32(s, 7);
        let lattice = ElasticLattice::new(2, vec![[0.0, 0.0, 1.0]; 8]).unwrap();
        let out = elastic_with_lattice(&v, &lattice);
        for f in 0..4 {
            for h in 0..5 {
                for w in 0..5 {
                    assert!((out.get(f, h, w, 0) - v.get(f, h, w + 1, 0)).abs() < 1e-5);
                }
                assert_eq!(out.get(f, h, 5, 0), v.get(f, h, 5, 0));
            }
        }
    }

    #[test]
    fn rotate90_rules() {
        let v = random_u8(Shape::new(2, 3, 4, 3), 8);
        for plane in RotationPlane::ALL {
            assert_eq!(rotate90_plane(&v, plane, 0), v);
            let mut r = v.clone();
            for _ in 0..4 {
                r = rotate90_plane(&r, plane, 1);
            }
            assert_eq!(r, v);
            let twice = rotate90_plane(&rotate90_plane(&v, plane, 1), plane, 1);
            assert_eq!(twice, rotate90_plane(&v, plane, 2));
            let thrice = rotate90_plane(&twice, plane, 1);
            assert_eq!(thrice, rotate90_plane(&v, plane, 3));
        }
        let r = rotate90_plane(&v, RotationPlane::HeightWidth, 1);
        assert_eq!(r.shape(), Shape::new(2, 4, 3, 3));
        // numpy.rot90 convention: out[i, j] = in[j, W - 1 - i]
        assert_eq!(r.get(1, 0, 0, 2), v.get(1, 0, 3, 2));
        assert_eq!(r.get(0, 3, 2, 0), v.get(0, 2, 0, 0));
    }

    #[test]
    fn flips() {
        let v = random_u8(Shape::new(3, 4, 5, 1), 9);
        assert_eq!(flip_axes(&v, [false; 3]), v);
        for axis in 0..3 {
            let mut axes = [false; 3];
            axes[axis] = true;
            assert_eq!(flip_axes(&flip_axes(&v, axes), axes), v);
        }
        let f = flip_axes(&v, [true, false, false]);
        for frame in 0..3 {
            assert_eq!(f.get(frame, 1, 2, 0), v.get(2 - frame, 1, 2, 0));
        }
        assert_eq!(flip(&v, &mut RandomStream::new(0), 0.0), v);
    }

    #[test]
    fn grid_dropout_counts() {
        let s = Shape::new(32, 32, 32, 3);
        let v = Volume::from_u8(s, vec![7; s.len()]).unwrap();
        let out = grid_dropout_with_offset(&v, 16, 0.5, [0, 0, 0]);
        let zeros = out.as_u8().unwrap().iter().filter(|&&x| x == 0).count();
        assert_eq!(zeros, 4096 * 3);
        assert_eq!(grid_dropout_with_offset(&v, 16, 0.0, [3, 1, 2]), v);
        let all = grid_dropout_with_offset(&v, 16, 1.0, [0, 0, 0]);
        assert!(all.as_u8().unwrap().iter().all(|&x| x == 0));
        let near = grid_dropout_with_offset(&v, 16, 0.999, [0, 0, 0]);
        assert!(near.as_u8().unwrap().iter().all(|&x| x == 0));
    }

    /// Direct re-statement of the dropout rule, one voxel at a time.
    fn dropout_oracle(v: &Volume, cell: usize, ratio: f64, offset: [usize; 3]) -> Vec<f32> {
        let s = v.shape();
        let hole = (ratio * cell as f64).round() as i64;
        let mut out = Vec::new();
        for f in 0..s.frames {
            for h in 0..s.height {
                for w in 0..s.width {
                    let inside = [f, h, w]
                        .iter()
                        .zip(offset)
                        .all(|(&x, o)| (x as i64 - o as i64).rem_euclid(cell as i64) < hole);
                    for c in 0..s.channels {
                        out.push(if inside { 0.0 } else { v.get(f, h, w, c) });
                    }
                }
            }
        }
        out
    }

    #[test]
    fn grid_dropout_matches_brute_force() {
        let mut rng = RandomStream::new(10);
        for seed in 0..40 {
            let s = Shape::new(
                rng.uniform_int(1, 9),
                rng.uniform_int(1, 9),
                rng.uniform_int(1, 9),
                1,
            );
            let v = random_f32(s, seed);
            let cell = rng.uniform_int(2, 5);
            let ratio = rng.uniform();
            let offset = [rng.index(cell), rng.index(cell), rng.index(cell)];
            let out = grid_dropout_with_offset(&v, cell, ratio, offset);
            assert_eq!(out.to_f32_vec(), dropout_oracle(&v, cell, ratio, offset));
        }
    }

    #[test]
    fn spatial_transforms_keep_dtype() {
        let v = random_u8(Shape::new(4, 6, 6, 1), 11);
        let mut rng = RandomStream::new(12);
        for out in [
            rotate_small(&v, &mut rng, 10.0),
            elastic(&v, &mut rng, 3, 2.0),
            rotate90(&v, &mut rng),
            flip(&v, &mut rng, 0.5),
            grid_dropout(&v, &mut rng, 4, 0.5),
        ] {
            assert_eq!(out.dtype(), DType::U8);
        }
    }
}
