"""Spin operators, tensor embedding and unitary time evolution.

Hamiltonians are stored in linear frequency units (MHz) and times in
microseconds; the factor 2*pi is applied only inside :func:`evolve`, so the
propagator is ``U = exp(-2j*pi*H*t)``.

Basis orders are fixed globally: ``|+1>, |0>, |-1>`` for spin 1 and
``|up>, |down>`` for spin 1/2.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

# dense exponentiation up to and including this Hilbert-space dimension
DENSE_MAX_DIM = 1024

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10


class EvolutionError(RuntimeError):
    """Raised when a propagator fails to converge to the requested tolerance."""


def spin_operators(spin):
    """Return ``(Sx, Sy, Sz)`` for spin 1/2 or spin 1 as dense complex arrays.

    >>> sx, sy, sz = spin_operators(1)
    >>> np.diag(sz).real.tolist()
    [1.0, 0.0, -1.0]
    """
    if np.isclose(spin, 0.5):
        sx = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
        sy = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
        sz = 0.5 * np.array([[1, 0], [0, -1]], dtype=complex)
        return sx, sy, sz
    if np.isclose(spin, 1.0):
        r = 1 / np.sqrt(2)
        sx = r * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
        sy = r * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
        sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
        return sx, sy, sz
    raise ValueError(f"unsupported spin value {spin!r}; expected 1/2 or 1")


def embed(local_op, site, dims):
    """Tensor ``local_op`` into site ``site`` of a product space with local ``dims``.

    Returns a sparse CSR matrix; identity acts on every other factor.
    """
    dims = [int(d) for d in dims]
    if not 0 <= site < len(dims):
        raise ValueError(f"site {site} out of range for {len(dims)} sites")
    local_op = np.asarray(local_op.toarray() if sp.issparse(local_op) else local_op)
    if local_op.shape != (dims[site], dims[site]):
        raise ValueError(
            f"operator of shape {local_op.shape} does not match local dimension {dims[site]}")
    left = int(np.prod(dims[:site], dtype=np.int64))
    right = int(np.prod(dims[site + 1:], dtype=np.int64))
    out = sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(local_op), format="csr")
    return sp.kron(out, sp.identity(right, format="csr"), format="csr").astype(complex)


def kron_all(ops):
    """Dense Kronecker product of a sequence of matrices."""
    return reduce(np.kron, ops)


def is_hermitian(op, tol=HERMITIAN_TOL):
    """True when ``op`` is Hermitian to within ``tol`` relative Frobenius error."""
    if sp.issparse(op):
        diff = sp.linalg.norm(op - op.getH())
        scale = sp.linalg.norm(op)
    else:
        op = np.asarray(op)
        diff = np.linalg.norm(op - op.conj().T)
        scale = np.linalg.norm(op)
    return diff <= tol * max(scale, 1.0)


def _check_hermitian(op):
    if not is_hermitian(op):
        raise ValueError("operator is not Hermitian")


def propagator(H, t):
    """Dense ``exp(-2j*pi*H*t)`` via eigendecomposition of a Hermitian ``H``."""
    H = H.toarray() if sp.issparse(H) else np.asarray(H)
    _check_hermitian(H)
    evals, evecs = la.eigh(H)
    return (evecs * np.exp(-2j * np.pi * evals * t)) @ evecs.conj().T


def _lanczos_step(matvec, v, dt, m, tol):
    """One Krylov step of length ``dt``; returns (new vector, error estimate)."""
    dim = v.size
    m = min(m, dim)
    beta0 = np.linalg.norm(v)
    basis = np.zeros((m + 1, dim), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    basis[0] = v / beta0
    k_used = m
    for k in range(m):
        w = matvec(basis[k])
        alpha[k] = np.vdot(basis[k], w).real
        w = w - alpha[k] * basis[k]
        if k > 0:
            w = w - beta[k - 1] * basis[k - 1]
        # full reorthogonalisation keeps the small basis numerically clean
        w = w - basis[:k + 1].T @ (basis[:k + 1].conj() @ w)
        beta[k] = np.linalg.norm(w)
        if beta[k] < 1e-13 * max(1.0, abs(alpha[k])):
            k_used = k + 1
            break
        basis[k + 1] = w / beta[k]
    T = np.diag(alpha[:k_used]) + np.diag(beta[:k_used - 1], 1) + np.diag(beta[:k_used - 1], -1)
    evals, evecs = la.eigh(T)
    coeffs = evecs @ (np.exp(-2j * np.pi * evals * dt) * evecs[0].conj())
    if k_used < m or k_used == dim:
        err = 0.0
    else:
        err = beta[k_used - 1] * abs(coeffs[-1])
    return beta0 * (basis[:k_used].T @ coeffs), err


def krylov_evolve(psi, H, t, m=30, tol=1e-9, max_steps=100_000):
    """Short-step Lanczos propagation of ``psi`` under ``H`` for time ``t``.

    ``H`` may be any object supporting ``H @ v`` (sparse matrix or
    ``scipy.sparse.linalg.LinearOperator``).  Steps are halved until the
    per-step error estimate drops below ``tol``.
    """
    matvec = (lambda x: H @ x)
    v = np.asarray(psi, dtype=complex).copy()
    remaining = float(t)
    dt = remaining
    steps = 0
    while remaining > 0:
        dt = min(dt, remaining)
        new, err = _lanczos_step(matvec, v, dt, m, tol)
        if err > tol:
            dt *= 0.5
            steps += 1
            if steps > max_steps or dt < 1e-15:
                raise EvolutionError("Krylov propagation did not reach tolerance")
            continue
        v = new
        remaining -= dt
        steps += 1
        if steps > max_steps:
            raise EvolutionError("Krylov propagation exceeded the step cap")
        if err < 0.1 * tol:
            dt *= 1.5
    return v


def evolve(psi, H, t, method="auto"):
    """Return ``exp(-2j*pi*H*t) @ psi``.

    ``method`` is ``"dense"``, ``"krylov"`` or ``"auto"`` (dense up to
    :data:`DENSE_MAX_DIM`).  The output norm matches the input to 1e-10.
    """
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    psi = np.asarray(psi, dtype=complex)
    if H.shape != (psi.size, psi.size):
        raise ValueError(f"Hamiltonian shape {H.shape} does not match state of size {psi.size}")
    if method == "auto":
        method = "dense" if psi.size <= DENSE_MAX_DIM else "krylov"
    if t == 0:
        return psi.copy()
    if method == "dense":
        out = propagator(H, t) @ psi
    elif method == "krylov":
        if sp.issparse(H) or isinstance(H, np.ndarray):
            _check_hermitian(H)
        out = krylov_evolve(psi, H, t)
    else:
        raise ValueError(f"unknown evolution method {method!r}")
    n0, n1 = np.linalg.norm(psi), np.linalg.norm(out)
    if abs(n1 - n0) > NORM_TOL * max(n0, 1.0):
        raise EvolutionError(f"norm drift {abs(n1 - n0):.2e} exceeds tolerance")
    return out


def expectation(psi, O):
    """Real expectation value ``<psi|O|psi>`` of a Hermitian observable."""
    psi = np.asarray(psi)
    if O.shape != (psi.size, psi.size):
        raise ValueError(f"observable shape {O.shape} does not match state of size {psi.size}")
    val = np.vdot(psi, O @ psi)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; observable not Hermitian?")
    return float(val.real)


def rotation_matrix_su2(axis, angle):
    """Spin-1/2 rotation ``exp(-i angle n.s)`` about a unit 3-vector ``axis``."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    sx, sy, sz = spin_operators(0.5)
    gen = n[0] * sx + n[1] * sy + n[2] * sz
    return np.cos(angle / 2) * np.eye(2) - 2j * np.sin(angle / 2) * gen


def apply_local(psi, op2, n):
    """Apply the same 2x2 operator on every one of ``n`` spin-1/2 sites."""
    psi = np.asarray(psi, dtype=complex).reshape((2,) * n)
    for site in range(n):
        psi = np.moveaxis(np.tensordot(op2, psi, axes=([1], [site])), 0, site)
    return psi.reshape(-1)
