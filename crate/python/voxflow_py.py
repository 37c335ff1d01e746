"""numpy helpers around the `voxflow_native` extension."""

import numpy as np

import voxflow_native as _native

VoxflowError = _native.VoxflowError


def apply(pipeline_json, array, sample_index=0, seed=None):
    """Apply a pipeline to a `(F, H, W, C)` uint8 or float32 array."""
    array = np.ascontiguousarray(array)
    if array.ndim != 4:
        raise ValueError("expected a 4-d (F, H, W, C) array")
    dtype = {np.dtype(np.uint8): "uint8", np.dtype(np.float32): "float32"}.get(array.dtype)
    if dtype is None:
        raise ValueError(f"unsupported dtype {array.dtype}")
    data, shape, out_dtype = _native.apply(
        pipeline_json, array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes(),
        tuple(array.shape), dtype, sample_index, seed,
    )
    return np.frombuffer(data, dtype=np.dtype(out_dtype).newbyteorder("<")).reshape(shape)


def inflate(kernel, depth, mode="average"):
    """Inflate a `(kh, kw, c_in, c_out)` kernel to `(depth, kh, kw, c_in, c_out)`."""
    kernel = np.ascontiguousarray(kernel, dtype="<f4")
    data, shape = _native.inflate(kernel.tobytes(), tuple(kernel.shape), depth, mode)
    return np.frombuffer(data, dtype="<f4").reshape(shape)


def batches(labels, batch_size, pos_frac, seed=0, n=1):
    """Class-balanced index batches over binary labels."""
    return _native.batches([int(x) for x in labels], batch_size, pos_frac, seed, n)
