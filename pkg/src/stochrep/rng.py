"""Counter-based Gaussian streams keyed by (seed, path, step, component).

Any increment can be regenerated on its own, so results do not depend on how
paths are chunked or in which order they are simulated.  Bits come from two
rounds of the SplitMix64 finalizer; normals from the inverse normal CDF.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PATH_SALT = np.uint64(0xD1B54A32D192ED03)


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def path_keys(seed: int, paths) -> np.ndarray:
    paths = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = mix64(np.array([seed], dtype=np.uint64) * _GOLDEN + _PATH_SALT)
        return mix64(base ^ mix64((paths + np.uint64(1)) * _GOLDEN))


def uniforms(seed: int, paths, steps, n_comp: int) -> np.ndarray:
    """Uniforms in (0, 1), shape (len(paths), len(steps), n_comp)."""
    keys = path_keys(seed, paths)[:, None, None]
    steps = np.asarray(steps, dtype=np.uint64)[None, :, None]
    comp = np.arange(n_comp, dtype=np.uint64)[None, None, :]
    with np.errstate(over="ignore"):
        ctr = steps * np.uint64(n_comp) + comp + np.uint64(1)
        bits = mix64(keys ^ mix64(ctr * _GOLDEN))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(seed: int, paths, steps, n_comp: int) -> np.ndarray:
    return ndtri(uniforms(seed, paths, steps, n_comp))
