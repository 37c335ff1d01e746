//! Probability-gated transform pipelines.
//!
//! Randomness layout for `apply(v, index)`:
//!
//! ```text
//! sample stream = RandomStream(child_seed(pipeline seed, index))
//! step stream   = sample_stream.child(step position)
//! ```
//!
//! The first draw of a step stream is the gate (`fires iff u < p`); the
//! transform consumes the rest. Steps never share a stream, so inserting
//! or removing a step leaves the randomness of every other step untouched.

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::rng::{child_seed, RandomStream};
use crate::transforms::{
    ElasticParams, FlipParams, GammaParams, GridDropoutParams, Interpolation, NoiseParams,
    ParamsError, PlaneFractionParams, Rotate90Params, RotateSmallParams, ResizeParams, Transform,
    TransformError,
};
use crate::volume::Volume;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("step {index} ({op}): {source}")]
    Step {
        index: usize,
        op: &'static str,
        #[source]
        source: TransformError,
    },
}

/// Malformed pipeline description.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}", self.describe())]
pub struct SchemaError {
    /// Step position, or `None` for top-level fields.
    pub step: Option<usize>,
    pub field: String,
    pub message: String,
}

impl SchemaError {
    fn new(step: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            step,
            field: field.into(),
            message: message.into(),
        }
    }

    fn describe(&self) -> String {
        match self.step {
            Some(i) => format!("schema error in step {i}, field `{}`: {}", self.field, self.message),
            None => format!("schema error in field `{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub transform: Transform,
    /// Probability that the step fires.
    pub p: f64,
}

impl Step {
    pub fn new(transform: Transform, p: f64) -> Self {
        Self { transform, p }
    }
}

/// A step that fired during [`Pipeline::apply_traced`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiredStep {
    pub step: usize,
    pub op: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    seed: u64,
    steps: Vec<Step>,
}

impl Pipeline {
    pub fn new(seed: u64, steps: Vec<Step>) -> Result<Self, SchemaError> {
        for (i, step) in steps.iter().enumerate() {
            if !(0.0..=1.0).contains(&step.p) {
                return Err(SchemaError::new(Some(i), "p", format!("{} not in [0, 1]", step.p)));
            }
            if let Err(TransformError::InvalidParam { name, reason }) = step.transform.validate() {
                return Err(SchemaError::new(Some(i), format!("params.{name}"), reason));
            }
        }
        Ok(Self { seed, steps })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Replaces the interpolation mode of every resize step.
    pub fn with_resize_mode(mut self, mode: Interpolation) -> Self {
        for step in &mut self.steps {
            if let Transform::Resize(p) = &mut step.transform {
                p.mode = mode;
            }
        }
        self
    }

    /// Stream feeding step `step` of sample `sample_index`.
    pub fn step_stream(&self, sample_index: u64, step: usize) -> RandomStream {
        RandomStream::new(child_seed(self.seed, sample_index)).child(step as u64)
    }

    pub fn apply(&self, v: &Volume, sample_index: u64) -> Result<Volume, PipelineError> {
        self.apply_traced(v, sample_index).map(|(out, _)| out)
    }

    /// Like [`Pipeline::apply`], also reporting which steps fired.
    pub fn apply_traced(
        &self,
        v: &Volume,
        sample_index: u64,
    ) -> Result<(Volume, Vec<FiredStep>), PipelineError> {
        let mut current: Option<Volume> = None;
        let mut fired = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let mut rng = self.step_stream(sample_index, i);
            if rng.uniform() >= step.p {
                continue;
            }
            let input = current.as_ref().unwrap_or(v);
            let out = match step.transform.apply(input, &mut rng) {
                Ok(out) => out,
                // Constant float volumes pass through gamma unchanged.
                Err(TransformError::DegenerateRange) => input.clone(),
                Err(source) => {
                    return Err(PipelineError::Step {
                        index: i,
                        op: step.transform.id(),
                        source,
                    })
                }
            };
            fired.push(FiredStep {
                step: i,
                op: step.transform.id(),
            });
            current = Some(out);
        }
        Ok((current.unwrap_or_else(|| v.clone()), fired))
    }

    pub fn to_json_value(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|s| json!({"op": s.transform.id(), "p": s.p, "params": s.transform.params_json()}))
            .collect();
        json!({"seed": self.seed, "steps": steps})
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("pipeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Pipeline, SchemaError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| SchemaError::new(None, "<document>", e.to_string()))?;
        Self::from_json_value(&value)
    }

    pub fn from_json_value(value: &Value) -> Result<Pipeline, SchemaError> {
        let top = value
            .as_object()
            .ok_or_else(|| SchemaError::new(None, "<document>", "expected a JSON object"))?;
        reject_unknown(top, &["seed", "steps"], None)?;
        let seed = top
            .get("seed")
            .ok_or_else(|| SchemaError::new(None, "seed", "missing"))?
            .as_u64()
            .ok_or_else(|| SchemaError::new(None, "seed", "expected an unsigned 64-bit integer"))?;
        let raw_steps = top
            .get("steps")
            .ok_or_else(|| SchemaError::new(None, "steps", "missing"))?
            .as_array()
            .ok_or_else(|| SchemaError::new(None, "steps", "expected an array"))?;

        let mut steps = Vec::with_capacity(raw_steps.len());
        for (i, raw) in raw_steps.iter().enumerate() {
            let obj = raw
                .as_object()
                .ok_or_else(|| SchemaError::new(Some(i), "<step>", "expected a JSON object"))?;
            reject_unknown(obj, &["op", "p", "params"], Some(i))?;
            let op = obj
                .get("op")
                .and_then(Value::as_str)
                .ok_or_else(|| SchemaError::new(Some(i), "op", "missing or not a string"))?;
            let p = obj
                .get("p")
                .and_then(Value::as_f64)
                .ok_or_else(|| SchemaError::new(Some(i), "p", "missing or not a number"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(SchemaError::new(Some(i), "p", format!("{p} not in [0, 1]")));
            }
            let params = obj.get("params").cloned().unwrap_or_else(|| json!({}));
            if !params.is_object() {
                return Err(SchemaError::new(Some(i), "params", "expected a JSON object"));
            }
            let transform = Transform::from_parts(op, params).map_err(|e| match e {
                ParamsError::UnknownOp(id) => {
                    SchemaError::new(Some(i), "op", format!("unknown transform id `{id}`"))
                }
                ParamsError::Malformed(msg) => SchemaError::new(Some(i), "params", msg),
                ParamsError::Invalid(TransformError::InvalidParam { name, reason }) => {
                    SchemaError::new(Some(i), format!("params.{name}"), reason)
                }
                ParamsError::Invalid(other) => SchemaError::new(Some(i), "params", other.to_string()),
            })?;
            steps.push(Step::new(transform, p));
        }
        Pipeline::new(seed, steps)
    }
}

fn reject_unknown(obj: &Map<String, Value>, allowed: &[&str], step: Option<usize>) -> Result<(), SchemaError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(SchemaError::new(step, k.clone(), "unknown field")),
        None => Ok(()),
    }
}

/// The ten-step "heavy augs" protocol, ending in a mandatory trilinear resize
/// to `target`. Rotation by 90 degrees always runs; one of its four equally
/// likely turn counts is the identity.
pub fn preset_heavy_augs(target: [usize; 3]) -> Pipeline {
    let steps = vec![
        Step::new(Transform::RotateSmall(RotateSmallParams::default()), 0.3),
        Step::new(Transform::Elastic(ElasticParams::default()), 0.1),
        Step::new(Transform::Rotate90(Rotate90Params::default()), 1.0),
        Step::new(Transform::Flip(FlipParams::default()), 0.5),
        Step::new(Transform::GridDropout(GridDropoutParams::default()), 0.1),
        Step::new(Transform::GaussianNoise(NoiseParams::default()), 0.2),
        Step::new(Transform::RandomGamma(GammaParams::default()), 0.2),
        Step::new(Transform::CropFromBorders(PlaneFractionParams::default()), 0.4),
        Step::new(Transform::DropPlane(PlaneFractionParams::default()), 0.5),
        Step::new(
            Transform::Resize(ResizeParams {
                target,
                mode: Interpolation::Trilinear,
            }),
            1.0,
        ),
    ];
    Pipeline::new(0, steps).expect("preset is valid")
}

/// "Mirror 3 axes": an always-on flip with an independent 0.5 coin per axis,
/// then a trilinear resize to `target`.
pub fn preset_mirror3(target: [usize; 3]) -> Pipeline {
    let steps = vec![
        Step::new(Transform::Flip(FlipParams { p_axis: 0.5 }), 1.0),
        Step::new(
            Transform::Resize(ResizeParams {
                target,
                mode: Interpolation::Trilinear,
            }),
            1.0,
        ),
    ];
    Pipeline::new(0, steps).expect("preset is valid")
}

/// Default resize target of the shipped presets, `(frames, height, width)`.
pub const DEFAULT_TARGET: [usize; 3] = [96, 128, 128];

/// Shipped preset files.
pub const HEAVY_AUGS_JSON: &str = include_str!("../presets/heavy_augs.json");
pub const MIRROR3_JSON: &str = include_str!("../presets/mirror3.json");
