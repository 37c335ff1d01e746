//! Dense `(frames, height, width, channels)` volumes.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("invalid shape {0}: frames, height and width must be >= 1 and channels 1 or 3")]
    InvalidShape(Shape),
    #[error("buffer holds {actual} values but shape {shape} needs {expected}")]
    BufferLength {
        shape: Shape,
        expected: usize,
        actual: usize,
    },
    #[error("float32 volume contains a non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("region {region} lies outside volume of shape {shape}")]
    RegionOutOfBounds { region: Cuboid, shape: Shape },
    #[error("invalid region {0}: every interval must be non-empty")]
    EmptyRegion(Cuboid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    U8,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::U8 => "uint8",
            DType::F32 => "float32",
        }
    }
}

/// Spatial axes. The channel axis is never addressed by transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Frames = 0,
    Height = 1,
    Width = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Frames, Axis::Height, Axis::Width];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.frames >= 1
            && self.height >= 1
            && self.width >= 1
            && (self.channels == 1 || self.channels == 3)
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.frames, self.height, self.width]
    }

    pub fn with_spatial(&self, dims: [usize; 3]) -> Shape {
        Shape::new(dims[0], dims[1], dims[2], self.channels)
    }

    pub fn extent(&self, axis: Axis) -> usize {
        self.spatial()[axis.index()]
    }

    pub fn voxels(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.voxels() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of voxel `(f, h, w)`, channel 0.
    #[inline]
    pub fn offset(&self, f: usize, h: usize, w: usize) -> usize {
        ((f * self.height + h) * self.width + w) * self.channels
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.frames, self.height, self.width, self.channels
        )
    }
}

/// Half-open axis-aligned region `[f0,f1) x [r0,r1) x [c0,c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Cuboid {
    pub f0: usize,
    pub f1: usize,
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl Cuboid {
    pub fn new(
        f: std::ops::Range<usize>,
        r: std::ops::Range<usize>,
        c: std::ops::Range<usize>,
    ) -> Self {
        Self {
            f0: f.start,
            f1: f.end,
            r0: r.start,
            r1: r.end,
            c0: c.start,
            c1: c.end,
        }
    }

    /// The region covering a whole volume of `shape`.
    pub fn full(shape: Shape) -> Self {
        Self::new(0..shape.frames, 0..shape.height, 0..shape.width)
    }

    pub fn sizes(&self) -> [usize; 3] {
        [
            self.f1.saturating_sub(self.f0),
            self.r1.saturating_sub(self.r0),
            self.c1.saturating_sub(self.c0),
        ]
    }

    pub fn volume(&self) -> usize {
        self.sizes().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.volume() == 0
    }

    pub fn fits(&self, shape: Shape) -> bool {
        self.f1 <= shape.frames && self.r1 <= shape.height && self.c1 <= shape.width
    }

    pub fn contains(&self, f: usize, r: usize, c: usize) -> bool {
        (self.f0..self.f1).contains(&f)
            && (self.r0..self.r1).contains(&r)
            && (self.c0..self.c1).contains(&c)
    }

    pub fn contains_cuboid(&self, other: &Cuboid) -> bool {
        self.f0 <= other.f0
            && other.f1 <= self.f1
            && self.r0 <= other.r0
            && other.r1 <= self.r1
            && self.c0 <= other.c0
            && other.c1 <= self.c1
    }

    /// `inner` expressed relative to this cuboid's origin, in absolute coordinates.
    pub fn compose(&self, inner: &Cuboid) -> Cuboid {
        Cuboid {
            f0: self.f0 + inner.f0,
            f1: self.f0 + inner.f1,
            r0: self.r0 + inner.r0,
            r1: self.r0 + inner.r1,
            c0: self.c0 + inner.c0,
            c1: self.c0 + inner.c1,
        }
    }
}

impl fmt::Display for Cuboid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "f[{},{}) r[{},{}) c[{},{})",
            self.f0, self.f1, self.r0, self.r1, self.c0, self.c1
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl VolumeData {
    pub fn len(&self) -> usize {
        match self {
            VolumeData::U8(v) => v.len(),
            VolumeData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            VolumeData::U8(_) => DType::U8,
            VolumeData::F32(_) => DType::F32,
        }
    }
}

/// An immutable dense volume in row-major `(F, H, W, C)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: Shape,
    data: VolumeData,
}

/// Float32 to uint8: round half away from zero, then clamp to `[0, 255]`.
#[inline]
pub fn saturate_u8(x: f32) -> u8 {
    if x.is_nan() {
        return 0;
    }
    // Truncation of a clamped non-negative value plus one half rounds half up,
    // matching `round` on this range without a libm call.
    ((x as f64).clamp(0.0, 255.0) + 0.5) as u8
}

impl Volume {
    pub fn new(shape: Shape, data: VolumeData) -> Result<Self, VolumeError> {
        if !shape.is_valid() {
            return Err(VolumeError::InvalidShape(shape));
        }
        if data.len() != shape.len() {
            return Err(VolumeError::BufferLength {
                shape,
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if let VolumeData::F32(v) = &data {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(VolumeError::NonFinite(i));
            }
        }
        Ok(Self { shape, data })
    }

    pub fn from_u8(shape: Shape, data: Vec<u8>) -> Result<Self, VolumeError> {
        Self::new(shape, VolumeData::U8(data))
    }

    pub fn from_f32(shape: Shape, data: Vec<f32>) -> Result<Self, VolumeError> {
        Self::new(shape, VolumeData::F32(data))
    }

    pub fn zeros(shape: Shape, dtype: DType) -> Result<Self, VolumeError> {
        let data = match dtype {
            DType::U8 => VolumeData::U8(vec![0; shape.len()]),
            DType::F32 => VolumeData::F32(vec![0.0; shape.len()]),
        };
        Self::new(shape, data)
    }

    /// Builds a volume of `dtype` from float values; uint8 targets are
    /// rounded and saturated.
    pub fn from_f32_as(shape: Shape, values: Vec<f32>, dtype: DType) -> Result<Self, VolumeError> {
        match dtype {
            DType::F32 => Self::from_f32(shape, values),
            DType::U8 => Self::from_u8(shape, values.into_iter().map(saturate_u8).collect()),
        }
    }

    /// Transform output from float values: uint8 targets are rounded and
    /// saturated; float values must already be finite.
    pub(crate) fn from_values(shape: Shape, values: Vec<f32>, dtype: DType) -> Self {
        let data = match dtype {
            DType::F32 => VolumeData::F32(values),
            DType::U8 => VolumeData::U8(values.into_iter().map(saturate_u8).collect()),
        };
        Self::from_parts(shape, data)
    }

    /// Internal constructor for transform outputs whose shape and length are
    /// already guaranteed.
    pub(crate) fn from_parts(shape: Shape, data: VolumeData) -> Self {
        debug_assert!(shape.is_valid());
        debug_assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &VolumeData {
        &self.data
    }

    pub fn into_data(self) -> VolumeData {
        self.data
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            VolumeData::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            VolumeData::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Voxel value as `f32`, regardless of storage type.
    pub fn get(&self, f: usize, h: usize, w: usize, c: usize) -> f32 {
        let i = self.shape.offset(f, h, w) + c;
        match &self.data {
            VolumeData::U8(v) => v[i] as f32,
            VolumeData::F32(v) => v[i],
        }
    }

    /// All values widened to `f32`.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.data {
            VolumeData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VolumeData::F32(v) => v.clone(),
        }
    }

    /// Minimum and maximum value over all channels.
    pub fn min_max(&self) -> (f32, f32) {
        let fold = |(lo, hi): (f32, f32), x: f32| (lo.min(x), hi.max(x));
        match &self.data {
            VolumeData::U8(v) => v
                .iter()
                .map(|&x| x as f32)
                .fold((f32::INFINITY, f32::NEG_INFINITY), fold),
            VolumeData::F32(v) => v
                .iter()
                .copied()
                .fold((f32::INFINITY, f32::NEG_INFINITY), fold),
        }
    }

    pub fn cast(&self, target: DType) -> Volume {
        let data = match (&self.data, target) {
            (VolumeData::U8(v), DType::U8) => VolumeData::U8(v.clone()),
            (VolumeData::F32(v), DType::F32) => VolumeData::F32(v.clone()),
            (VolumeData::U8(v), DType::F32) => VolumeData::F32(v.iter().map(|&x| x as f32).collect()),
            (VolumeData::F32(v), DType::U8) => {
                VolumeData::U8(v.iter().map(|&x| saturate_u8(x)).collect())
            }
        };
        Volume::from_parts(self.shape, data)
    }

    pub fn crop(&self, region: &Cuboid) -> Result<Volume, VolumeError> {
        if region.is_empty() {
            return Err(VolumeError::EmptyRegion(*region));
        }
        if !region.fits(self.shape) {
            return Err(VolumeError::RegionOutOfBounds {
                region: *region,
                shape: self.shape,
            });
        }
        let [nf, nh, nw] = region.sizes();
        let out_shape = self.shape.with_spatial([nf, nh, nw]);
        let row = nw * self.shape.channels;
        Ok(self.gather_rows(out_shape, |f, h| {
            self.shape.offset(region.f0 + f, region.r0 + h, region.c0)
        }, row))
    }

    /// Builds a volume of `out_shape` by copying whole rows: output row
    /// `(f, h)` is `row_len` contiguous values starting at `src_start(f, h)`.
    fn gather_rows<F>(&self, out_shape: Shape, src_start: F, row_len: usize) -> Volume
    where
        F: Fn(usize, usize) -> usize,
    {
        fn run<T: Copy, F: Fn(usize, usize) -> usize>(
            src: &[T],
            out_shape: Shape,
            src_start: F,
            row_len: usize,
        ) -> Vec<T> {
            let mut out = Vec::with_capacity(out_shape.len());
            for f in 0..out_shape.frames {
                for h in 0..out_shape.height {
                    let s = src_start(f, h);
                    out.extend_from_slice(&src[s..s + row_len]);
                }
            }
            out
        }
        let data = match &self.data {
            VolumeData::U8(v) => VolumeData::U8(run(v, out_shape, src_start, row_len)),
            VolumeData::F32(v) => VolumeData::F32(run(v, out_shape, src_start, row_len)),
        };
        Volume::from_parts(out_shape, data)
    }

    /// Builds a volume of `out_shape` whose voxel `(f, h, w)` copies all
    /// channels of source voxel `src(f, h, w)`.
    pub(crate) fn gather<F>(&self, out_shape: Shape, src: F) -> Volume
    where
        F: Fn(usize, usize, usize) -> (usize, usize, usize),
    {
        fn run<T: Copy, F: Fn(usize, usize, usize) -> (usize, usize, usize)>(
            data: &[T],
            in_shape: Shape,
            out_shape: Shape,
            src: F,
        ) -> Vec<T> {
            let c = in_shape.channels;
            let mut out = Vec::with_capacity(out_shape.len());
            for f in 0..out_shape.frames {
                for h in 0..out_shape.height {
                    for w in 0..out_shape.width {
                        let (sf, sh, sw) = src(f, h, w);
                        let o = in_shape.offset(sf, sh, sw);
                        out.extend_from_slice(&data[o..o + c]);
                    }
                }
            }
            out
        }
        let data = match &self.data {
            VolumeData::U8(v) => VolumeData::U8(run(v, self.shape, out_shape, src)),
            VolumeData::F32(v) => VolumeData::F32(run(v, self.shape, out_shape, src)),
        };
        Volume::from_parts(out_shape, data)
    }

    /// Keeps the listed planes along `axis`, in the given order.
    pub(crate) fn select_planes(&self, axis: Axis, keep: &[usize]) -> Volume {
        let mut dims = self.shape.spatial();
        dims[axis.index()] = keep.len();
        let out_shape = self.shape.with_spatial(dims);
        match axis {
            Axis::Frames => {
                let row = self.shape.width * self.shape.channels;
                self.gather_rows(out_shape, |f, h| self.shape.offset(keep[f], h, 0), row)
            }
            Axis::Height => {
                let row = self.shape.width * self.shape.channels;
                self.gather_rows(out_shape, |f, h| self.shape.offset(f, keep[h], 0), row)
            }
            Axis::Width => self.gather(out_shape, |f, h, w| (f, h, keep[w])),
        }
    }

    /// Contiguous view of one frame: `height * width * channels` values.
    pub fn frame_u8(&self, f: usize) -> Option<&[u8]> {
        let per = self.shape.height * self.shape.width * self.shape.channels;
        self.as_u8().map(|v| &v[f * per..(f + 1) * per])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn saturate_matches_round() {
        for i in -4000..=30000 {
            let x = i as f32 * 0.01 - 0.005;
            for x in [x, f32::from_bits(x.to_bits() + 1), f32::from_bits(x.to_bits().saturating_sub(1))] {
                assert_eq!(saturate_u8(x), x.round().clamp(0.0, 255.0) as u8, "{x}");
            }
        }
        assert_eq!(saturate_u8(0.49999997), 0);
        assert_eq!(saturate_u8(f32::NAN), 0);
        assert_eq!(saturate_u8(f32::INFINITY), 255);
        assert_eq!(saturate_u8(f32::NEG_INFINITY), 0);
    }

    fn random_u8(shape: Shape, seed: u64) -> Volume {
        let mut rng = RandomStream::new(seed);
        let data = (0..shape.len()).map(|_| rng.uniform_int(0, 255) as u8).collect();
        Volume::from_u8(shape, data).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_buffers() {
        assert!(Volume::from_u8(Shape::new(0, 1, 1, 1), vec![]).is_err());
        assert!(Volume::from_u8(Shape::new(1, 1, 1, 2), vec![0, 0]).is_err());
        assert!(matches!(
            Volume::from_u8(Shape::new(1, 2, 2, 1), vec![0; 3]),
            Err(VolumeError::BufferLength { .. })
        ));
        assert!(matches!(
            Volume::from_f32(Shape::new(1, 1, 1, 1), vec![f32::NAN]),
            Err(VolumeError::NonFinite(0))
        ));
    }

    #[test]
    fn full_crop_is_identity() {
        let v = random_u8(Shape::new(3, 4, 5, 3), 1);
        assert_eq!(v.crop(&Cuboid::full(v.shape())).unwrap(), v);
    }

    #[test]
    fn crop_shape() {
        let v = random_u8(Shape::new(4, 4, 4, 1), 2);
        let out = v.crop(&Cuboid::new(1..3, 0..2, 2..4)).unwrap();
        assert_eq!(out.shape(), Shape::new(2, 2, 2, 1));
    }

    #[test]
    fn crop_out_of_bounds() {
        let v = random_u8(Shape::new(4, 4, 4, 1), 2);
        assert!(matches!(
            v.crop(&Cuboid::new(0..5, 0..1, 0..1)),
            Err(VolumeError::RegionOutOfBounds { .. })
        ));
        assert!(matches!(
            v.crop(&Cuboid::new(2..2, 0..1, 0..1)),
            Err(VolumeError::EmptyRegion(_))
        ));
    }

    #[test]
    fn crop_matches_index_oracle() {
        let mut rng = RandomStream::new(11);
        for seed in 0..30 {
            let shape = Shape::new(
                rng.uniform_int(1, 6),
                rng.uniform_int(1, 7),
                rng.uniform_int(1, 8),
                if rng.bernoulli(0.5) { 1 } else { 3 },
            );
            let v = random_u8(shape, seed);
            let mut pick = |n: usize| {
                let a = rng.uniform_int(0, n - 1);
                let b = rng.uniform_int(a + 1, n);
                a..b
            };
            let region = Cuboid::new(pick(shape.frames), pick(shape.height), pick(shape.width));
            let out = v.crop(&region).unwrap();
            let s = out.shape();
            for f in 0..s.frames {
                for h in 0..s.height {
                    for w in 0..s.width {
                        for c in 0..s.channels {
                            assert_eq!(
                                out.get(f, h, w, c),
                                v.get(f + region.f0, h + region.r0, w + region.c0, c)
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn crop_composes() {
        let v = random_u8(Shape::new(8, 9, 10, 1), 5);
        let a = Cuboid::new(1..7, 2..9, 3..10);
        let b = Cuboid::new(1..4, 0..5, 2..6);
        let twice = v.crop(&a).unwrap().crop(&b).unwrap();
        assert_eq!(twice, v.crop(&a.compose(&b)).unwrap());
    }

    #[test]
    fn cast_rules() {
        let s = Shape::new(1, 1, 3, 1);
        let v = Volume::from_u8(s, vec![0, 128, 255]).unwrap();
        assert_eq!(v.cast(DType::F32).as_f32().unwrap(), &[0.0, 128.0, 255.0]);
        let f = Volume::from_f32(s, vec![254.6, -3.2, 2.5]).unwrap();
        assert_eq!(f.cast(DType::U8).as_u8().unwrap(), &[255, 0, 3]);
        let round_trip = random_u8(Shape::new(2, 3, 4, 3), 9);
        assert_eq!(round_trip.cast(DType::F32).cast(DType::U8), round_trip);
    }
}
