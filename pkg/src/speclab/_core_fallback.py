"""Pure numpy twins of the compiled kernels in ``_core``.

``disorder_matrix`` must reproduce the compiled output bit for bit; the
eigensolve twin may differ at rounding level since it goes through a separately
linked LAPACK.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SCALE = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    z = z ^ (z >> np.uint64(31))
    return z


def disorder_matrix(master_seed, first_index, n_real, n_sites):
    """Uniform [0,1) couplings keyed by (master_seed, realization index, site)."""
    if n_real < 0 or n_sites < 0:
        raise ValueError("n_real and n_sites must be nonnegative")
    seed = np.uint64(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    base = int(first_index)
    with np.errstate(over="ignore"):
        r = np.arange(base + 1, base + n_real + 1, dtype=np.uint64)
        streams = _mix(seed + r * _GOLDEN)
        s = (np.arange(n_sites, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
        z = _mix(streams[:, None] + s[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * _SCALE


def batch_eigvalsh(h0, diags):
    """Ascending eigenvalues of h0 + diag(diags[b]) for every row b."""
    h0 = np.asarray(h0, dtype=np.float64)
    diags = np.asarray(diags, dtype=np.float64)
    if h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
        raise ValueError("h0 must be a square matrix")
    if diags.ndim != 2 or diags.shape[1] != h0.shape[0]:
        raise ValueError("diags must have shape (batch, n)")
    out = np.empty_like(diags)
    work = np.empty_like(h0)
    idx = np.diag_indices_from(h0)
    for b in range(diags.shape[0]):
        np.copyto(work, h0)
        work[idx] += diags[b]
        out[b] = np.linalg.eigvalsh(work)
    return out
