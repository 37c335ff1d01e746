//! Python module `voxflow_native`.
//!
//! Arrays cross the boundary as little-endian `bytes` plus a shape tuple;
//! the `python/voxflow_py.py` helpers convert to and from numpy.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use voxflow::inflate::{inflate as inflate_kernel, InflateError, InflationMode, Kernel2D};
use voxflow::pipeline::{Pipeline, PipelineError};
use voxflow::sampler::{batches as sample_batches, SamplerConfig, SamplerError};
use voxflow::transforms::TransformError;
use voxflow::{Shape, Volume, VolumeData};

create_exception!(voxflow_native, VoxflowError, PyValueError);

/// Error codes shared with the command-line tool's exit codes.
const SCHEMA: u8 = 3;
const SHAPE: u8 = 4;
const INFEASIBLE: u8 = 5;

fn raise(code: u8, msg: impl std::fmt::Display) -> PyErr {
    VoxflowError::new_err((code, msg.to_string()))
}

fn volume_from_bytes(data: &[u8], shape: (usize, usize, usize, usize), dtype: &str) -> PyResult<Volume> {
    let s = Shape::new(shape.0, shape.1, shape.2, shape.3);
    let vol = match dtype {
        "uint8" => Volume::from_u8(s, data.to_vec()),
        "float32" => {
            if data.len() % 4 != 0 {
                return Err(raise(SHAPE, "float32 buffer length is not a multiple of 4"));
            }
            let v = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            Volume::from_f32(s, v)
        }
        other => return Err(raise(SCHEMA, format!("unsupported dtype `{other}`"))),
    };
    vol.map_err(|e| raise(SHAPE, e))
}

fn volume_to_bytes(v: &Volume) -> (Vec<u8>, &'static str) {
    match v.data() {
        VolumeData::U8(d) => (d.clone(), "uint8"),
        VolumeData::F32(d) => (d.iter().flat_map(|x| x.to_le_bytes()).collect(), "float32"),
    }
}

type ArrayOut<'py> = (Bound<'py, PyBytes>, (usize, usize, usize, usize), &'static str);

/// Applies a pipeline (JSON text) to a `(F, H, W, C)` array.
/// `seed` overrides the seed stored in the pipeline.
#[pyfunction]
#[pyo3(signature = (pipeline_json, data, shape, dtype, sample_index=0, seed=None))]
fn apply<'py>(
    py: Python<'py>,
    pipeline_json: &str,
    data: &[u8],
    shape: (usize, usize, usize, usize),
    dtype: &str,
    sample_index: u64,
    seed: Option<u64>,
) -> PyResult<ArrayOut<'py>> {
    let mut pipeline = Pipeline::from_json(pipeline_json).map_err(|e| raise(SCHEMA, e))?;
    if let Some(s) = seed {
        pipeline = pipeline.with_seed(s);
    }
    let vol = volume_from_bytes(data, shape, dtype)?;
    let out = py
        .detach(|| pipeline.apply(&vol, sample_index))
        .map_err(|e| {
            let code = match &e {
                PipelineError::Step {
                    source: TransformError::AxisTooShort(_),
                    ..
                } => SHAPE,
                _ => SCHEMA,
            };
            raise(code, e)
        })?;
    let s = out.shape();
    let (bytes, dt) = volume_to_bytes(&out);
    Ok((PyBytes::new(py, &bytes), (s.frames, s.height, s.width, s.channels), dt))
}

/// Inflates a float32 `(kh, kw, c_in, c_out)` kernel to
/// `(depth, kh, kw, c_in, c_out)`. `mode` is `"center"` or `"average"`.
#[pyfunction]
fn inflate<'py>(
    py: Python<'py>,
    data: &[u8],
    shape: (usize, usize, usize, usize),
    depth: usize,
    mode: &str,
) -> PyResult<(Bound<'py, PyBytes>, (usize, usize, usize, usize, usize))> {
    let mode = InflationMode::parse(mode).ok_or_else(|| raise(SCHEMA, format!("unknown mode `{mode}`")))?;
    let n = shape.0 * shape.1 * shape.2 * shape.3;
    if data.len() != n * 4 {
        return Err(raise(SHAPE, format!("expected {} bytes for shape {shape:?}, got {}", n * 4, data.len())));
    }
    let values: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let weights = voxflow_ndarray(shape, values).map_err(|e| raise(SHAPE, e))?;
    let k2 = Kernel2D::new(weights, None).map_err(|e| raise(SHAPE, e))?;
    let k3 = inflate_kernel(&k2, depth, mode).map_err(|e| match e {
        InflateError::EvenDepthCenter(_) | InflateError::ZeroDepth => raise(SCHEMA, e),
        other => raise(SHAPE, other),
    })?;
    let bytes: Vec<u8> = k3.weights().iter().flat_map(|x| x.to_le_bytes()).collect();
    Ok((PyBytes::new(py, &bytes), (depth, shape.0, shape.1, shape.2, shape.3)))
}

fn voxflow_ndarray(
    shape: (usize, usize, usize, usize),
    values: Vec<f32>,
) -> Result<voxflow::inflate::Array4<f32>, String> {
    voxflow::inflate::Array4::from_shape_vec(shape, values).map_err(|e| e.to_string())
}

/// Class-balanced index batches over binary `labels`.
#[pyfunction]
#[pyo3(signature = (labels, batch_size, pos_frac, seed=0, n=1))]
fn batches(labels: Vec<u8>, batch_size: usize, pos_frac: f64, seed: u64, n: usize) -> PyResult<Vec<Vec<usize>>> {
    let cfg = SamplerConfig::new(labels, batch_size, pos_frac, seed);
    sample_batches(&cfg, n).map_err(|e| match e {
        SamplerError::InfeasibleBatch { .. } => raise(INFEASIBLE, e),
        SamplerError::InvalidConfig(_) => raise(SCHEMA, e),
    })
}

#[pymodule]
fn voxflow_native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", voxflow::VERSION)?;
    m.add("VoxflowError", m.py().get_type::<VoxflowError>())?;
    m.add_function(wrap_pyfunction!(apply, m)?)?;
    m.add_function(wrap_pyfunction!(inflate, m)?)?;
    m.add_function(wrap_pyfunction!(batches, m)?)?;
    Ok(())
}
