//! 2D to 3D convolution kernel inflation.
//!
//! A `(kh, kw, c_in, c_out)` kernel becomes `(kd, kh, kw, c_in, c_out)`:
//!
//! * [`InflationMode::CenterPlane`] puts the 2D kernel on the middle depth
//!   plane and zeros elsewhere, so a 3D convolution reproduces the per-frame
//!   2D response exactly.
//! * [`InflationMode::Averaged`] spreads the kernel evenly as `k / kd` over
//!   every depth plane, keeping the total weight (and so the output scale)
//!   while mixing in neighbouring frames.
//!
//! The reference convolutions are direct valid-padding, stride-1
//! cross-correlations accumulated in `f64`.

pub use ndarray::{Array1, Array3, Array4, Array5};
use ndarray::{ArrayView4, Axis};
use regex::Regex;
use thiserror::Error;

use crate::tensor::{Tensor, TensorDType, TensorMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InflateError {
    #[error("center-plane inflation needs an odd depth, got {0}")]
    EvenDepthCenter(usize),
    #[error("inflation depth must be >= 1")]
    ZeroDepth,
    #[error("tensor `{name}` has shape {shape:?}; expected a 4-D (kh, kw, c_in, c_out) kernel")]
    ShapeMismatch { name: String, shape: Vec<usize> },
    #[error("tensor `{name}` has dtype {dtype}; only F32 and F64 kernels can be inflated")]
    UnsupportedDtype { name: String, dtype: &'static str },
    #[error("kernel {kernel:?} does not fit inside input {input:?}")]
    KernelLargerThanInput { kernel: Vec<usize>, input: Vec<usize> },
    #[error("input has {input} channels but the kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid tensor name pattern `{pattern}`: {message}")]
    BadPattern { pattern: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InflationMode {
    CenterPlane,
    Averaged,
}

impl InflationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "center" | "center_plane" => Some(InflationMode::CenterPlane),
            "average" | "averaged" => Some(InflationMode::Averaged),
            _ => None,
        }
    }
}

fn check_depth(kd: usize, mode: InflationMode) -> Result<(), InflateError> {
    if kd == 0 {
        return Err(InflateError::ZeroDepth);
    }
    if mode == InflationMode::CenterPlane && kd % 2 == 0 {
        return Err(InflateError::EvenDepthCenter(kd));
    }
    Ok(())
}

/// `(kh, kw, c_in, c_out)` weights with an optional `c_out` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    weights: Array4<f32>,
    bias: Option<Array1<f32>>,
}

impl Kernel2D {
    pub fn new(weights: Array4<f32>, bias: Option<Array1<f32>>) -> Result<Self, InflateError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(InflateError::InvalidKernel("non-finite weight".into()));
        }
        if weights.is_empty() {
            return Err(InflateError::InvalidKernel("empty kernel".into()));
        }
        validate_bias(&bias, weights.shape()[3])?;
        Ok(Self { weights, bias })
    }

    /// Single-channel `kh x kw` kernel from rows.
    pub fn from_rows(rows: &[&[f32]]) -> Result<Self, InflateError> {
        let kh = rows.len();
        let kw = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != kw) {
            return Err(InflateError::InvalidKernel("ragged rows".into()));
        }
        let flat: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let weights = Array4::from_shape_vec((kh, kw, 1, 1), flat)
            .map_err(|e| InflateError::InvalidKernel(e.to_string()))?;
        Self::new(weights, None)
    }

    pub fn weights(&self) -> &Array4<f32> {
        &self.weights
    }

    pub fn bias(&self) -> Option<&Array1<f32>> {
        self.bias.as_ref()
    }
}

/// `(kd, kh, kw, c_in, c_out)` weights with an optional `c_out` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3D {
    weights: Array5<f32>,
    bias: Option<Array1<f32>>,
}

impl Kernel3D {
    pub fn new(weights: Array5<f32>, bias: Option<Array1<f32>>) -> Result<Self, InflateError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(InflateError::InvalidKernel("non-finite weight".into()));
        }
        if weights.is_empty() {
            return Err(InflateError::InvalidKernel("empty kernel".into()));
        }
        validate_bias(&bias, weights.shape()[4])?;
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Array5<f32> {
        &self.weights
    }

    pub fn bias(&self) -> Option<&Array1<f32>> {
        self.bias.as_ref()
    }

    pub fn depth(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Depth plane `d` as a `(kh, kw, c_in, c_out)` view.
    pub fn plane(&self, d: usize) -> ArrayView4<'_, f32> {
        self.weights.index_axis(Axis(0), d)
    }
}

fn validate_bias(bias: &Option<Array1<f32>>, c_out: usize) -> Result<(), InflateError> {
    match bias {
        Some(b) if b.len() != c_out => Err(InflateError::InvalidKernel(format!(
            "bias has {} entries for {} output channels",
            b.len(),
            c_out
        ))),
        Some(b) if b.iter().any(|x| !x.is_finite()) => {
            Err(InflateError::InvalidKernel("non-finite bias".into()))
        }
        _ => Ok(()),
    }
}

/// Inflates a contiguous plane buffer into `kd` stacked planes.
fn inflate_buffer<T>(plane: &[T], kd: usize, mode: InflationMode, scale: impl Fn(T) -> T) -> Vec<T>
where
    T: Copy + Default,
{
    let mut out = Vec::with_capacity(plane.len() * kd);
    match mode {
        InflationMode::CenterPlane => {
            let center = (kd - 1) / 2;
            for d in 0..kd {
                if d == center {
                    out.extend_from_slice(plane);
                } else {
                    out.extend(std::iter::repeat_n(T::default(), plane.len()));
                }
            }
        }
        InflationMode::Averaged => {
            if kd == 1 {
                out.extend_from_slice(plane);
            } else {
                let scaled: Vec<T> = plane.iter().map(|&w| scale(w)).collect();
                for _ in 0..kd {
                    out.extend_from_slice(&scaled);
                }
            }
        }
    }
    out
}

pub fn inflate(k2: &Kernel2D, kd: usize, mode: InflationMode) -> Result<Kernel3D, InflateError> {
    check_depth(kd, mode)?;
    let &[kh, kw, ci, co] = k2.weights.shape() else {
        unreachable!("Array4 has four axes")
    };
    let plane: Vec<f32> = k2.weights.iter().copied().collect();
    let div = kd as f32;
    let data = inflate_buffer(&plane, kd, mode, |w| w / div);
    let weights = Array5::from_shape_vec((kd, kh, kw, ci, co), data).expect("inflated length matches");
    Ok(Kernel3D {
        weights,
        bias: k2.bias.clone(),
    })
}

/// Valid-padding, stride-1 2D cross-correlation of an `(h, w, c_in)` image,
/// giving `(h - kh + 1, w - kw + 1, c_out)`. Bias is added when present.
pub fn conv2d_ref(image: &Array3<f32>, k: &Kernel2D) -> Result<Array3<f32>, InflateError> {
    let &[h, w, ci] = image.shape() else { unreachable!() };
    let &[kh, kw, kci, co] = k.weights.shape() else { unreachable!() };
    if kci != ci {
        return Err(InflateError::ChannelMismatch { input: ci, kernel: kci });
    }
    if kh > h || kw > w {
        return Err(InflateError::KernelLargerThanInput {
            kernel: vec![kh, kw],
            input: vec![h, w],
        });
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Array3::<f32>::zeros((oh, ow, co));
    for y in 0..oh {
        for x in 0..ow {
            for o in 0..co {
                let mut acc = k.bias.as_ref().map_or(0.0, |b| b[o] as f64);
                for i in 0..kh {
                    for j in 0..kw {
                        for c in 0..ci {
                            acc += image[[y + i, x + j, c]] as f64 * k.weights[[i, j, c, o]] as f64;
                        }
                    }
                }
                out[[y, x, o]] = acc as f32;
            }
        }
    }
    Ok(out)
}

/// Valid-padding, stride-1 3D cross-correlation of a `(d, h, w, c_in)` volume.
pub fn conv3d_ref(vol: &Array4<f32>, k: &Kernel3D) -> Result<Array4<f32>, InflateError> {
    let &[d, h, w, ci] = vol.shape() else { unreachable!() };
    let &[kd, kh, kw, kci, co] = k.weights.shape() else { unreachable!() };
    if kci != ci {
        return Err(InflateError::ChannelMismatch { input: ci, kernel: kci });
    }
    if kd > d || kh > h || kw > w {
        return Err(InflateError::KernelLargerThanInput {
            kernel: vec![kd, kh, kw],
            input: vec![d, h, w],
        });
    }
    let (od, oh, ow) = (d - kd + 1, h - kh + 1, w - kw + 1);
    let mut out = Array4::<f32>::zeros((od, oh, ow, co));
    for z in 0..od {
        for y in 0..oh {
            for x in 0..ow {
                for o in 0..co {
                    let mut acc = k.bias.as_ref().map_or(0.0, |b| b[o] as f64);
                    for a in 0..kd {
                        for i in 0..kh {
                            for j in 0..kw {
                                for c in 0..ci {
                                    acc += vol[[z + a, y + i, x + j, c]] as f64
                                        * k.weights[[a, i, j, c, o]] as f64;
                                }
                            }
                        }
                    }
                    out[[z, y, x, o]] = acc as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Inflation rule: tensors whose full name matches `pattern` (a regular
/// expression) are inflated to `depth` planes with `mode`.
#[derive(Debug, Clone)]
pub struct InflateRule {
    pattern: Regex,
    pub depth: usize,
    pub mode: InflationMode,
}

impl InflateRule {
    pub fn new(pattern: &str, depth: usize, mode: InflationMode) -> Result<Self, InflateError> {
        check_depth(depth, mode)?;
        let anchored = Regex::new(&format!("^(?:{pattern})$")).map_err(|e| InflateError::BadPattern {
            pattern: pattern.to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            pattern: anchored,
            depth,
            mode,
        })
    }

    pub fn matches(&self, name: &str) -> bool {
        self.pattern.is_match(name)
    }
}

/// Inflates every tensor matched by a rule (first matching rule wins);
/// unmatched tensors are copied byte for byte. Names and order are kept.
pub fn inflate_map(tensors: &TensorMap, rules: &[InflateRule]) -> Result<TensorMap, InflateError> {
    let mut out = TensorMap::new();
    out.set_metadata(tensors.metadata().cloned());
    for (name, tensor) in tensors.iter() {
        let Some(rule) = rules.iter().find(|r| r.matches(name)) else {
            out.insert(name.clone(), tensor.clone());
            continue;
        };
        if tensor.shape().len() != 4 {
            return Err(InflateError::ShapeMismatch {
                name: name.clone(),
                shape: tensor.shape().to_vec(),
            });
        }
        let mut shape = vec![rule.depth];
        shape.extend_from_slice(tensor.shape());
        let inflated = match tensor.dtype() {
            TensorDType::F32 => {
                let div = rule.depth as f32;
                let data = inflate_buffer(&tensor.to_f32().unwrap(), rule.depth, rule.mode, |w| w / div);
                Tensor::from_f32(shape, &data)
            }
            TensorDType::F64 => {
                let div = rule.depth as f64;
                let data = inflate_buffer(&tensor.to_f64().unwrap(), rule.depth, rule.mode, |w| w / div);
                Tensor::from_f64(shape, &data)
            }
            TensorDType::U8 => {
                return Err(InflateError::UnsupportedDtype {
                    name: name.clone(),
                    dtype: "U8",
                })
            }
        };
        out.insert(name.clone(), inflated.expect("inflated length matches shape"));
    }
    Ok(out)
}
