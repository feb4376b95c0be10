"""Hot loops of the many-body layer.

Every kernel exists twice: an explicit-loop version compiled with numba
``@njit`` and a vectorized pure-numpy version.  The public names at module
level dispatch to one of the two, chosen once at import time:

* numba is used when it imports cleanly and ``DRESSEDSPIN_DISABLE_NUMBA`` is
  unset (or ``0``/``false``);
* otherwise the numpy path is used.

Both implementations stay importable as :data:`numba_impl` and
:data:`numpy_impl` so tests and ``benchmarks/bench_kernels.py`` can compare
them directly.

Basis convention for spin-1/2 product states: site 0 is the most significant
bit, bit value 0 is spin up (s^z = +1/2).
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_FLAG = "DRESSEDSPIN_DISABLE_NUMBA"


def _numba_disabled_by_env() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _spin_signs(n):
    """(2**n, n) array of +-1, +1 meaning spin up."""
    states = np.arange(2**n)
    shifts = n - 1 - np.arange(n)
    bits = (states[:, None] >> shifts[None, :]) & 1
    return 1.0 - 2.0 * bits


def _np_diagonal_energies(n, zz, h):
    sig = _spin_signs(n)
    # 0.25 * sum_{i<j} zz_ij sig_i sig_j = 0.125 * (sig zz sig - trace part)
    pair = 0.125 * (np.einsum("si,ij,sj->s", sig, zz, sig) - np.trace(zz))
    return pair + 0.5 * sig @ h


def _np_flipflop_coo(n, xy):
    dim = 2**n
    states = np.arange(dim)
    rows, cols, vals = [], [], []
    for i in range(n):
        bi = n - 1 - i
        for j in range(i + 1, n):
            if xy[i, j] == 0.0:
                continue
            bj = n - 1 - j
            differ = ((states >> bi) & 1) != ((states >> bj) & 1)
            src = states[differ]
            rows.append(src ^ ((1 << bi) | (1 << bj)))
            cols.append(src)
            vals.append(np.full(src.size, 0.5 * xy[i, j]))
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), np.zeros(0)
    return (np.concatenate(rows).astype(np.int64),
            np.concatenate(cols).astype(np.int64),
            np.concatenate(vals))


def _np_xxz_matvec(psi, n, diag, xy):
    out = diag * psi
    states = np.arange(psi.size)
    for i in range(n):
        bi = n - 1 - i
        for j in range(i + 1, n):
            if xy[i, j] == 0.0:
                continue
            bj = n - 1 - j
            differ = ((states >> bi) & 1) != ((states >> bj) & 1)
            src = states[differ]
            np.add.at(out, src ^ ((1 << bi) | (1 << bj)), 0.5 * xy[i, j] * psi[src])
    return out


def _np_spectral_correlation(weights, energies, t_grid):
    gaps = energies[:, None] - energies[None, :]
    out = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        out[k] = np.sum(weights * np.cos(2.0 * np.pi * gaps * t))
    return out


numpy_impl = SimpleNamespace(
    diagonal_energies=_np_diagonal_energies,
    flipflop_coo=_np_flipflop_coo,
    xxz_matvec=_np_xxz_matvec,
    spectral_correlation=_np_spectral_correlation,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _nb_diagonal_energies(n, zz, h):
    dim = 1 << n
    out = np.zeros(dim)
    sig = np.empty(n)
    for s in range(dim):
        for i in range(n):
            sig[i] = 1.0 - 2.0 * ((s >> (n - 1 - i)) & 1)
        e = 0.0
        for i in range(n):
            e += 0.5 * h[i] * sig[i]
            for j in range(i + 1, n):
                e += 0.25 * zz[i, j] * sig[i] * sig[j]
        out[s] = e
    return out


def _nb_flipflop_coo(n, xy):
    dim = 1 << n
    npairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            if xy[i, j] != 0.0:
                npairs += 1
    size = npairs * (dim // 2)
    rows = np.empty(size, dtype=np.int64)
    cols = np.empty(size, dtype=np.int64)
    vals = np.empty(size)
    k = 0
    for i in range(n):
        bi = n - 1 - i
        for j in range(i + 1, n):
            if xy[i, j] == 0.0:
                continue
            bj = n - 1 - j
            mask = (1 << bi) | (1 << bj)
            amp = 0.5 * xy[i, j]
            for s in range(dim):
                if ((s >> bi) & 1) != ((s >> bj) & 1):
                    rows[k] = s ^ mask
                    cols[k] = s
                    vals[k] = amp
                    k += 1
    return rows, cols, vals


def _nb_xxz_matvec(psi, n, diag, xy):
    dim = psi.shape[0]
    out = np.empty_like(psi)
    for s in range(dim):
        acc = diag[s] * psi[s]
        for i in range(n):
            bi = n - 1 - i
            for j in range(i + 1, n):
                bj = n - 1 - j
                if ((s >> bi) & 1) != ((s >> bj) & 1):
                    acc += 0.5 * xy[i, j] * psi[s ^ ((1 << bi) | (1 << bj))]
        out[s] = acc
    return out


def _nb_spectral_correlation(weights, energies, t_grid):
    dim = energies.shape[0]
    out = np.zeros(t_grid.shape[0])
    two_pi = 2.0 * np.pi
    for k in range(t_grid.shape[0]):
        t = t_grid[k]
        acc = 0.0
        for m in range(dim):
            acc += weights[m, m]
            for l in range(m + 1, dim):
                acc += (weights[m, l] + weights[l, m]) * np.cos(two_pi * (energies[m] - energies[l]) * t)
        out[k] = acc
    return out


if _numba is not None:
    _jit = _numba.njit(cache=True)
    numba_impl = SimpleNamespace(
        diagonal_energies=_jit(_nb_diagonal_energies),
        flipflop_coo=_jit(_nb_flipflop_coo),
        xxz_matvec=_jit(_nb_xxz_matvec),
        spectral_correlation=_jit(_nb_spectral_correlation),
    )
else:  # pragma: no cover
    numba_impl = None

USE_NUMBA = numba_impl is not None and not _numba_disabled_by_env()
_active = numba_impl if USE_NUMBA else numpy_impl


def diagonal_energies(n: int, zz: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Diagonal of sum_{i<j} zz_ij s^z_i s^z_j + sum_i h_i s^z_i in the product basis."""
    return _active.diagonal_energies(int(n), np.ascontiguousarray(zz, dtype=float),
                                     np.ascontiguousarray(h, dtype=float))


def flipflop_coo(n: int, xy: np.ndarray):
    """COO triplets of sum_{i<j} xy_ij (s^x s^x + s^y s^y)."""
    return _active.flipflop_coo(int(n), np.ascontiguousarray(xy, dtype=float))


def xxz_matvec(psi: np.ndarray, n: int, diag: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Matrix-free product of an XXZ Hamiltonian with ``psi``.

    ``diag`` comes from :func:`diagonal_energies`; ``xy`` must be symmetric
    with only the upper triangle used.
    """
    return _active.xxz_matvec(np.ascontiguousarray(psi, dtype=complex), int(n),
                              np.ascontiguousarray(diag, dtype=float),
                              np.ascontiguousarray(xy, dtype=float))


def spectral_correlation(weights: np.ndarray, energies: np.ndarray, t_grid) -> np.ndarray:
    """sum_{m,l} W_ml cos(2 pi (E_m - E_l) t) on each grid time.

    ``W`` is real and non-negative (squared matrix elements), energies in MHz
    and times in microseconds.
    """
    return _active.spectral_correlation(np.ascontiguousarray(weights, dtype=float),
                                        np.ascontiguousarray(energies, dtype=float),
                                        np.ascontiguousarray(t_grid, dtype=float))
