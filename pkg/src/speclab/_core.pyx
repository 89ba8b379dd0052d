# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: counter-hash coupling generation and batched dense eigensolves.

Both kernels have drop-in numpy twins in ``_core_fallback``; the dispatch in
``speclab.kernels`` picks whichever is importable.
"""

import numpy as np

from libc.stdint cimport uint64_t
from scipy.linalg.cython_lapack cimport dsyevd

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15u


cdef inline uint64_t _mix(uint64_t z) nogil:
    # splitmix64 finalizer: bijective, passes BigCrush as a counter hash
    z ^= z >> 30
    z *= <uint64_t>0xBF58476D1CE4E5B9u
    z ^= z >> 27
    z *= <uint64_t>0x94D049BB133111EBu
    z ^= z >> 31
    return z


def disorder_matrix(master_seed, first_index, n_real, n_sites):
    """Uniform [0,1) couplings, one row per realization, one column per site.

    Entry (r, s) depends only on (master_seed, first_index + r, s), so any
    chunking or thread schedule reproduces identical values.
    """
    # reduce modulo 2^64 exactly like the fallback, so oversized Python ints
    # select the same stream on both backends
    cdef uint64_t seed = <uint64_t>(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t base = <uint64_t>(int(first_index) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t nr = n_real
    cdef Py_ssize_t ns = n_sites
    if nr < 0 or ns < 0:
        raise ValueError("n_real and n_sites must be nonnegative")
    out = np.empty((nr, ns), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, s
    cdef uint64_t stream, z
    cdef double scale = 2.0 ** -53
    with nogil:
        for r in range(nr):
            stream = _mix(seed + (base + <uint64_t>r + 1u) * _GOLDEN)
            for s in range(ns):
                z = _mix(stream + (<uint64_t>s + 1u) * _GOLDEN)
                o[r, s] = <double>(z >> 11) * scale
    return out


def batch_eigvalsh(h0, diags):
    """Ascending eigenvalues of h0 + diag(diags[b]) for every row b."""
    a_in = np.ascontiguousarray(h0, dtype=np.float64)
    d_in = np.ascontiguousarray(diags, dtype=np.float64)
    if a_in.ndim != 2 or a_in.shape[0] != a_in.shape[1]:
        raise ValueError("h0 must be a square matrix")
    if d_in.ndim != 2 or d_in.shape[1] != a_in.shape[0]:
        raise ValueError("diags must have shape (batch, n)")
    cdef double[:, ::1] h = a_in
    cdef double[:, ::1] dg = d_in
    cdef int n = <int>a_in.shape[0]
    cdef Py_ssize_t nb = d_in.shape[0]
    out = np.empty((nb, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    if nb == 0 or n == 0:
        return out

    work_a = np.empty((n, n), dtype=np.float64)
    work_w = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] a = work_a
    cdef double[::1] w = work_w

    cdef char jobz = b"N"
    cdef char uplo = b"L"
    cdef int info = 0
    cdef int lwork = -1
    cdef int liwork = -1
    cdef double wq = 0.0
    cdef int iq = 0
    dsyevd(&jobz, &uplo, &n, &a[0, 0], &n, &w[0], &wq, &lwork, &iq, &liwork, &info)
    if info != 0:
        raise RuntimeError(f"eigensolver workspace query failed (info={info})")
    lwork = <int>wq
    liwork = iq
    work = np.empty(lwork, dtype=np.float64)
    iwork = np.empty(liwork, dtype=np.int32)
    cdef double[::1] wk = work
    cdef int[::1] iwk = iwork

    cdef Py_ssize_t b, i, j
    with nogil:
        for b in range(nb):
            for i in range(n):
                for j in range(n):
                    a[i, j] = h[i, j]
                a[i, i] += dg[b, i]
            dsyevd(&jobz, &uplo, &n, &a[0, 0], &n, &w[0], &wk[0], &lwork,
                   &iwk[0], &liwork, &info)
            if info != 0:
                break
            for i in range(n):
                o[b, i] = w[i]
    if info != 0:
        raise RuntimeError(f"eigensolver failed on batch row (info={info})")
    return out
