"""Hot-loop path kernels: numba-jitted versions with pure-numpy twins.

The front end (simulation.py) precomputes every per-step coefficient table and
all Gaussian increments, so the kernels below are straight multiply-add
recursions: no RNG, no transcendentals, no allocation inside the loop.  Per
path both backends execute the same floating-point operations in the same
order, which makes the numpy twin a bit-faithful reference for the jitted
code rather than an approximation of it.

KYLEBACK_BACKEND picks "numba" or "numpy" ("auto"/unset prefers numba when it
imports); KYLEBACK_THREADS caps the numba thread count.  Threads only change
scheduling, never results: paths are independent and every write lands in a
per-path slot.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ValidationError

try:
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    prange = range


# ======================================================================
# Kernel bodies: scalar per-path loops, jitted when numba is available
# ======================================================================

def _closed_loop_body(V0, dB1, dB2, p0, fdt, gdt, hdt, fgdt, svol, szvol,
                      bdt, gain, V, Y, P):
    n_paths, n = dB1.shape
    for p in prange(n_paths):
        v = V0[p]
        pr = p0
        y = 0.0
        V[p, 0] = v
        Y[p, 0] = 0.0
        P[p, 0] = pr
        for i in range(n):
            dy = bdt[i] * (v - pr) + szvol[i] * dB2[p, i]
            v = v + fdt[i] * v + gdt[i] * pr + hdt[i] + svol[i] * dB1[p, i]
            pr = pr + fgdt[i] * pr + hdt[i] + gain[i] * dy
            y = y + dy
            V[p, i + 1] = v
            Y[p, i + 1] = y
            P[p, i + 1] = pr


def _explicit_body(V0, dB1, dB2, v0, phi1, phi2v, psi, hdrift, u1, u2, e1,
                   bdt, szvol, V, Y, P):
    n_paths, n = dB1.shape
    for p in prange(n_paths):
        dv = V0[p] - v0
        a = 0.0
        cc = 0.0
        ee = 0.0
        y = 0.0
        for i in range(n + 1):
            s = dv + a
            d = phi1[i] * s
            pr = phi2v[i] * (v0 + hdrift[i] + psi[i] * s - cc + ee)
            V[p, i] = pr + d
            Y[p, i] = y
            P[p, i] = pr
            if i < n:
                y = y + bdt[i] * d + szvol[i] * dB2[p, i]
                inc = u1[i] * dB1[p, i] - u2[i] * dB2[p, i]
                a = a + inc
                cc = cc + psi[i] * inc
                ee = ee + e1[i] * dB2[p, i]


def _reference_body(X0, dB1, dB2, p0, fdt, gdt, hdt, fgdt, svol, szvol,
                    gain, etab, sz2dt, V, Y, P, LL):
    n_paths, n = dB1.shape
    for p in prange(n_paths):
        x = X0[p]
        pr = p0
        y = 0.0
        ll = 0.0
        V[p, 0] = x
        Y[p, 0] = 0.0
        P[p, 0] = pr
        LL[p, 0] = 0.0
        for i in range(n):
            dy = szvol[i] * dB2[p, i]
            eta = etab[i] * (x - pr)
            ll = ll + eta * dy - 0.5 * eta * eta * sz2dt[i]
            x = x + fdt[i] * x + gdt[i] * pr + hdt[i] + svol[i] * dB1[p, i]
            pr = pr + fgdt[i] * pr + hdt[i] + gain[i] * dy
            y = y + dy
            V[p, i + 1] = x
            Y[p, i + 1] = y
            P[p, i + 1] = pr
            LL[p, i + 1] = ll


# ======================================================================
# numpy twins: time loop outside, vectorized across the batch.  The
# per-element expressions match the scalar bodies term for term.
# ======================================================================

def _closed_loop_numpy(V0, dB1, dB2, p0, fdt, gdt, hdt, fgdt, svol, szvol,
                       bdt, gain, V, Y, P):
    n = dB1.shape[1]
    v = V0.copy()
    pr = np.full_like(v, p0)
    y = np.zeros_like(v)
    V[:, 0] = v
    Y[:, 0] = 0.0
    P[:, 0] = pr
    for i in range(n):
        dy = bdt[i] * (v - pr) + szvol[i] * dB2[:, i]
        v = v + fdt[i] * v + gdt[i] * pr + hdt[i] + svol[i] * dB1[:, i]
        pr = pr + fgdt[i] * pr + hdt[i] + gain[i] * dy
        y = y + dy
        V[:, i + 1] = v
        Y[:, i + 1] = y
        P[:, i + 1] = pr


def _explicit_numpy(V0, dB1, dB2, v0, phi1, phi2v, psi, hdrift, u1, u2, e1,
                    bdt, szvol, V, Y, P):
    n = dB1.shape[1]
    dv = V0 - v0
    a = np.zeros_like(dv)
    cc = np.zeros_like(dv)
    ee = np.zeros_like(dv)
    y = np.zeros_like(dv)
    for i in range(n + 1):
        s = dv + a
        d = phi1[i] * s
        pr = phi2v[i] * (v0 + hdrift[i] + psi[i] * s - cc + ee)
        V[:, i] = pr + d
        Y[:, i] = y
        P[:, i] = pr
        if i < n:
            y = y + bdt[i] * d + szvol[i] * dB2[:, i]
            inc = u1[i] * dB1[:, i] - u2[i] * dB2[:, i]
            a = a + inc
            cc = cc + psi[i] * inc
            ee = ee + e1[i] * dB2[:, i]


def _reference_numpy(X0, dB1, dB2, p0, fdt, gdt, hdt, fgdt, svol, szvol,
                     gain, etab, sz2dt, V, Y, P, LL):
    n = dB1.shape[1]
    x = X0.copy()
    pr = np.full_like(x, p0)
    y = np.zeros_like(x)
    ll = np.zeros_like(x)
    V[:, 0] = x
    Y[:, 0] = 0.0
    P[:, 0] = pr
    LL[:, 0] = 0.0
    for i in range(n):
        dy = szvol[i] * dB2[:, i]
        eta = etab[i] * (x - pr)
        ll = ll + eta * dy - 0.5 * eta * eta * sz2dt[i]
        x = x + fdt[i] * x + gdt[i] * pr + hdt[i] + svol[i] * dB1[:, i]
        pr = pr + fgdt[i] * pr + hdt[i] + gain[i] * dy
        y = y + dy
        V[:, i + 1] = x
        Y[:, i + 1] = y
        P[:, i + 1] = pr
        LL[:, i + 1] = ll


# ======================================================================
# Backend selection
# ======================================================================

_NUMPY_KERNELS = {
    "closed_loop": _closed_loop_numpy,
    "explicit": _explicit_numpy,
    "reference": _reference_numpy,
}

if HAVE_NUMBA:
    _jit = njit(cache=True, parallel=True)
    _NUMBA_KERNELS = {
        "closed_loop": _jit(_closed_loop_body),
        "explicit": _jit(_explicit_body),
        "reference": _jit(_reference_body),
    }


def resolve_backend(override=None):
    """Pick the kernel backend: override arg > KYLEBACK_BACKEND > auto."""
    choice = override if override is not None else os.environ.get("KYLEBACK_BACKEND", "auto")
    choice = str(choice).strip().lower() or "auto"
    if choice == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if choice == "numba":
        if not HAVE_NUMBA:
            print("WARNING: KYLEBACK_BACKEND=numba but numba is not importable; using numpy kernels")
            return "numpy"
        return "numba"
    if choice == "numpy":
        return "numpy"
    raise ValidationError(f"unknown backend {choice!r}: use 'numba', 'numpy' or 'auto'")


def kernels(backend=None):
    """The kernel table for the resolved backend."""
    name = resolve_backend(backend)
    return _NUMBA_KERNELS if name == "numba" else _NUMPY_KERNELS


def set_threads():
    """Apply KYLEBACK_THREADS to the numba pool (numpy backend: no-op).

    Returns the applied count, or None when the variable is unset or numba
    is unavailable.  The count is clamped to what the process launched with,
    since numba cannot grow its pool after import.
    """
    if not HAVE_NUMBA:
        return None
    raw = os.environ.get("KYLEBACK_THREADS", "").strip()
    if not raw:
        return None
    try:
        want = int(raw)
    except ValueError:
        raise ValidationError(f"KYLEBACK_THREADS must be an integer, got {raw!r}")
    want = max(1, min(want, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(want)
    return want
