"""Smoke test for the native bindings.

Build first, e.g. `maturin develop --release`, or copy
`target/release/libvoxflow_native.so` to `python/voxflow_native.so`.
"""

import json
import sys

import numpy as np

import voxflow_py as vf


def main():
    rng = np.random.default_rng(0)
    clip = rng.integers(0, 256, size=(6, 16, 16, 3), dtype=np.uint8)

    identity = json.dumps({"seed": 11, "steps": [{"op": "flip", "p": 1.0, "params": {"p_axis": 0.0}}]})
    assert np.array_equal(vf.apply(identity, clip), clip)

    pipeline = json.dumps({
        "seed": 11,
        "steps": [
            {"op": "flip", "p": 1.0, "params": {"p_axis": 0.5}},
            {"op": "gaussian_noise", "p": 0.5},
        ],
    })
    out = vf.apply(pipeline, clip, sample_index=3)
    assert out.shape == clip.shape and out.dtype == np.uint8
    assert np.array_equal(vf.apply(pipeline, clip, sample_index=3), out)
    assert np.array_equal(vf.apply(pipeline, clip, sample_index=3, seed=11), out)

    kernel = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
    avg = vf.inflate(kernel, 5, "average")
    assert avg.shape == (5, 3, 3, 2, 4)
    np.testing.assert_allclose(avg.sum(axis=0), kernel, rtol=1e-5, atol=1e-6)
    center = vf.inflate(kernel, 3, "center")
    np.testing.assert_array_equal(center[1], kernel)
    assert not center[0].any() and not center[2].any()

    labels = [1] * 10 + [0] * 30
    bs = vf.batches(labels, 8, 0.25, seed=4, n=3)
    assert len(bs) == 3
    for b in bs:
        assert len(b) == 8
        assert sum(labels[i] for i in b) == 2
    assert bs == vf.batches(labels, 8, 0.25, seed=4, n=3)

    try:
        vf.batches([1] + [0] * 20, 8, 0.25)
    except vf.VoxflowError as e:
        assert e.args[0] == 5, e.args
    else:
        raise AssertionError("expected an infeasible-batch error")

    print("smoke ok")


if __name__ == "__main__":
    sys.exit(main())
