//! Volumetric augmentation transforms.
//!
//! Each transform is a pure function of `(volume, stream, params)`. The
//! random variant draws its parameters from the stream and then calls a
//! deterministic counterpart (e.g. [`rotate_small`] draws an angle and calls
//! [`rotate_plane`]), so the geometry can be tested without randomness.
//!
//! Boundary policy: every resampler clamps to the edge except
//! [`rotate_small`], which fills with zero.

mod custom;
pub(crate) mod interp;
mod pixel;
mod spatial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomStream;
use crate::volume::{Shape, Volume};

pub use custom::{crop_border_strip, crop_from_borders, drop_plane, drop_planes, resize};
pub use pixel::{add_gaussian_noise, apply_gamma, gaussian_noise, random_gamma};
pub use spatial::{
    elastic, elastic_with_lattice, flip, flip_axes, grid_dropout, grid_dropout_with_offset,
    rotate90, rotate90_plane, rotate_plane, rotate_small, ElasticLattice, RotationPlane,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("volume is constant; gamma has no range to act on")]
    DegenerateRange,
    #[error("every spatial axis of {0} is shorter than 3 planes")]
    AxisTooShort(Shape),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

fn check(ok: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<(), TransformError> {
    if ok {
        Ok(())
    } else {
        Err(TransformError::InvalidParam {
            name,
            reason: reason(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    #[default]
    Trilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotateSmallParams {
    pub max_deg: f64,
}

impl Default for RotateSmallParams {
    fn default() -> Self {
        Self { max_deg: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticParams {
    /// Control points per axis.
    pub grid: usize,
    /// Displacement standard deviation in voxels.
    pub sigma: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self { grid: 4, sigma: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Rotate90Params {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipParams {
    pub p_axis: f64,
}

impl Default for FlipParams {
    fn default() -> Self {
        Self { p_axis: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridDropoutParams {
    pub cell: usize,
    /// Fraction of each cell side that is zeroed.
    pub ratio: f64,
}

impl Default for GridDropoutParams {
    fn default() -> Self {
        Self { cell: 16, ratio: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Upper bound of the drawn noise sigma, in uint8 intensity units.
    pub sigma_max: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { sigma_max: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaParams {
    pub lo: f64,
    pub hi: f64,
}

impl Default for GammaParams {
    fn default() -> Self {
        Self { lo: 0.8, hi: 1.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneFractionParams {
    pub max_frac: f64,
}

impl Default for PlaneFractionParams {
    fn default() -> Self {
        Self { max_frac: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResizeParams {
    /// Target `(frames, height, width)`.
    pub target: [usize; 3],
    #[serde(default)]
    pub mode: Interpolation,
}

/// A transform together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    RotateSmall(RotateSmallParams),
    Elastic(ElasticParams),
    Rotate90(Rotate90Params),
    Flip(FlipParams),
    GridDropout(GridDropoutParams),
    GaussianNoise(NoiseParams),
    RandomGamma(GammaParams),
    CropFromBorders(PlaneFractionParams),
    DropPlane(PlaneFractionParams),
    Resize(ResizeParams),
}

impl Transform {
    pub const IDS: [&'static str; 10] = [
        "rotate_small",
        "elastic",
        "rotate90",
        "flip",
        "grid_dropout",
        "gaussian_noise",
        "random_gamma",
        "crop_from_borders",
        "drop_plane",
        "resize",
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Transform::RotateSmall(_) => "rotate_small",
            Transform::Elastic(_) => "elastic",
            Transform::Rotate90(_) => "rotate90",
            Transform::Flip(_) => "flip",
            Transform::GridDropout(_) => "grid_dropout",
            Transform::GaussianNoise(_) => "gaussian_noise",
            Transform::RandomGamma(_) => "random_gamma",
            Transform::CropFromBorders(_) => "crop_from_borders",
            Transform::DropPlane(_) => "drop_plane",
            Transform::Resize(_) => "resize",
        }
    }

    /// Parses the `params` object of transform `id`.
    pub fn from_parts(id: &str, params: serde_json::Value) -> Result<Transform, ParamsError> {
        fn de<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, ParamsError> {
            serde_json::from_value(v).map_err(|e| ParamsError::Malformed(e.to_string()))
        }
        let t = match id {
            "rotate_small" => Transform::RotateSmall(de(params)?),
            "elastic" => Transform::Elastic(de(params)?),
            "rotate90" => Transform::Rotate90(de(params)?),
            "flip" => Transform::Flip(de(params)?),
            "grid_dropout" => Transform::GridDropout(de(params)?),
            "gaussian_noise" => Transform::GaussianNoise(de(params)?),
            "random_gamma" => Transform::RandomGamma(de(params)?),
            "crop_from_borders" => Transform::CropFromBorders(de(params)?),
            "drop_plane" => Transform::DropPlane(de(params)?),
            "resize" => Transform::Resize(de(params)?),
            other => return Err(ParamsError::UnknownOp(other.to_string())),
        };
        t.validate().map_err(ParamsError::Invalid)?;
        Ok(t)
    }

    pub fn params_json(&self) -> serde_json::Value {
        let v = match self {
            Transform::RotateSmall(p) => serde_json::to_value(p),
            Transform::Elastic(p) => serde_json::to_value(p),
            Transform::Rotate90(p) => serde_json::to_value(p),
            Transform::Flip(p) => serde_json::to_value(p),
            Transform::GridDropout(p) => serde_json::to_value(p),
            Transform::GaussianNoise(p) => serde_json::to_value(p),
            Transform::RandomGamma(p) => serde_json::to_value(p),
            Transform::CropFromBorders(p) => serde_json::to_value(p),
            Transform::DropPlane(p) => serde_json::to_value(p),
            Transform::Resize(p) => serde_json::to_value(p),
        };
        v.expect("transform params serialize to JSON")
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match self {
            Transform::RotateSmall(p) => check(p.max_deg > 0.0 && p.max_deg <= 45.0, "max_deg", || {
                format!("{} not in (0, 45]", p.max_deg)
            }),
            Transform::Elastic(p) => {
                check(p.grid >= 2, "grid", || format!("{} < 2", p.grid))?;
                check(p.sigma >= 0.0 && p.sigma.is_finite(), "sigma", || {
                    format!("{} is not a finite non-negative value", p.sigma)
                })
            }
            Transform::Rotate90(_) => Ok(()),
            Transform::Flip(p) => check(unit(p.p_axis), "p_axis", || format!("{} not in [0, 1]", p.p_axis)),
            Transform::GridDropout(p) => {
                check(p.cell >= 2, "cell", || format!("{} < 2", p.cell))?;
                check(unit(p.ratio), "ratio", || format!("{} not in [0, 1]", p.ratio))
            }
            Transform::GaussianNoise(p) => check(p.sigma_max >= 0.0 && p.sigma_max.is_finite(), "sigma_max", || {
                format!("{} is not a finite non-negative value", p.sigma_max)
            }),
            Transform::RandomGamma(p) => check(p.lo > 0.0 && p.lo <= p.hi && p.hi.is_finite(), "lo", || {
                format!("gamma range [{}, {}] must satisfy 0 < lo <= hi", p.lo, p.hi)
            }),
            Transform::CropFromBorders(p) | Transform::DropPlane(p) => {
                check((0.0..0.5).contains(&p.max_frac), "max_frac", || {
                    format!("{} not in [0, 0.5)", p.max_frac)
                })
            }
            Transform::Resize(p) => check(p.target.iter().all(|&t| t >= 1), "target", || {
                format!("{:?} has a zero extent", p.target)
            }),
        }
    }

    /// Applies the transform, drawing any random parameters from `rng`.
    pub fn apply(&self, v: &Volume, rng: &mut RandomStream) -> Result<Volume, TransformError> {
        match self {
            Transform::RotateSmall(p) => Ok(rotate_small(v, rng, p.max_deg)),
            Transform::Elastic(p) => Ok(elastic(v, rng, p.grid, p.sigma)),
            Transform::Rotate90(_) => Ok(rotate90(v, rng)),
            Transform::Flip(p) => Ok(flip(v, rng, p.p_axis)),
            Transform::GridDropout(p) => Ok(grid_dropout(v, rng, p.cell, p.ratio)),
            Transform::GaussianNoise(p) => Ok(gaussian_noise(v, rng, p.sigma_max)),
            Transform::RandomGamma(p) => random_gamma(v, rng, p.lo, p.hi),
            Transform::CropFromBorders(p) => Ok(crop_from_borders(v, rng, p.max_frac)),
            Transform::DropPlane(p) => drop_plane(v, rng, p.max_frac),
            Transform::Resize(p) => Ok(resize(v, p.target, p.mode)),
        }
    }

    /// Whether the transform may change the volume's shape.
    pub fn changes_shape(&self) -> bool {
        matches!(
            self,
            Transform::Rotate90(_)
                | Transform::CropFromBorders(_)
                | Transform::DropPlane(_)
                | Transform::Resize(_)
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("unknown transform id `{0}`")]
    UnknownOp(String),
    #[error("malformed params: {0}")]
    Malformed(String),
    #[error(transparent)]
    Invalid(TransformError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn params_defaults_fill_missing_fields() {
        let t = Transform::from_parts("elastic", json!({"sigma": 2.0})).unwrap();
        assert_eq!(t, Transform::Elastic(ElasticParams { grid: 4, sigma: 2.0 }));
    }

    #[test]
    fn unknown_fields_and_ids_rejected() {
        assert!(matches!(
            Transform::from_parts("blur2d", json!({})),
            Err(ParamsError::UnknownOp(_))
        ));
        assert!(matches!(
            Transform::from_parts("flip", json!({"p": 0.1})),
            Err(ParamsError::Malformed(_))
        ));
        assert!(matches!(
            Transform::from_parts("resize", json!({})),
            Err(ParamsError::Malformed(_))
        ));
    }

    #[test]
    fn ranges_validated() {
        assert!(Transform::from_parts("rotate_small", json!({"max_deg": 50.0})).is_err());
        assert!(Transform::from_parts("grid_dropout", json!({"cell": 1})).is_err());
        assert!(Transform::from_parts("random_gamma", json!({"lo": 1.5, "hi": 1.0})).is_err());
        assert!(Transform::from_parts("drop_plane", json!({"max_frac": 0.5})).is_err());
        assert!(Transform::from_parts("resize", json!({"target": [0, 2, 2]})).is_err());
    }

    #[test]
    fn every_id_round_trips() {
        for id in Transform::IDS {
            let params = if id == "resize" {
                json!({"target": [4, 5, 6]})
            } else {
                json!({})
            };
            let t = Transform::from_parts(id, params).unwrap();
            assert_eq!(t.id(), id);
            assert_eq!(Transform::from_parts(id, t.params_json()).unwrap(), t);
        }
    }
}
