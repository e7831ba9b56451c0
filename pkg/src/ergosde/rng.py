"""Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed by
``(seed, stream_index)``, so paths, workers and sweep points get independent,
reproducible streams without sharing state.  Gaussian variates come from the
Box-Muller transform applied to the generator's 53-bit uniform doubles, which
keeps trajectories identical across platforms and numpy releases that preserve
``Generator.random``.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, index=0):
    """Return an independent generator for ``(seed, index)``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and stream index must be non-negative")
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed, *labels):
    """Deterministically derive a child seed from a parent seed and integer labels."""
    ss = np.random.SeedSequence([seed & _MASK64, *labels])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gaussian(gen, shape):
    """Standard normal draws via Box-Muller on uniform doubles."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    n = int(np.prod(shape)) if shape else 1
    half = (n + 1) // 2
    u = gen.random(2 * half)
    # 1 - u lies in (0, 1], so the log is finite
    radius = np.sqrt(-2.0 * np.log1p(-u[:half]))
    angle = 2.0 * np.pi * u[half:]
    z = np.empty(2 * half)
    z[:half] = radius * np.cos(angle)
    z[half:] = radius * np.sin(angle)
    return z[:n].reshape(shape)
