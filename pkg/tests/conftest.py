import numpy as np
import pytest

from debugcn import synth


def finite_difference(loss_fn, arrays, h=1e-4):
    """Central finite differences of loss_fn w.r.t. each float64 array."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = float(loss_fn())
            flat[i] = orig - h
            lm = float(loss_fn())
            flat[i] = orig
            gflat[i] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    err = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        err = max(err, float((np.abs(a - n) / denom).max()))
    return err


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Default synthetic dataset shared by training-oriented tests."""
    out = tmp_path_factory.mktemp("synth_default")
    manifest = synth.generate(synth.SynthSpec(seed=42), out)
    return out, manifest


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small, fast dataset: 8+8 bundles with a 4x24 head and (4,1,3,3) conv."""
    out = tmp_path_factory.mktemp("synth_tiny")
    spec = synth.SynthSpec(num_clean=8, num_trojaned=8, fc_shape=(4, 24),
                           conv_shape=(4, 1, 3, 3), trojan_column_fraction=0.25,
                           seed=7)
    manifest = synth.generate(spec, out)
    return out, manifest
