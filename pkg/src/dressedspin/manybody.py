"""Exact state-vector simulation of the measurement protocols.

Spin-1/2 product basis follows :mod:`dressedspin.kernels` (site 0 is the
most significant bit, bit 0 is spin up).  All Hamiltonians are in MHz and
times in microseconds.

Disorder realizations and typicality samples are independent tasks.  Each
task draws from its own child of ``SeedSequence(seed)`` and results are
reduced in task order, so output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .dressed import NVConstants, dressed_basis, moment_difference, su2_field
from .ensemble import ORIENTATIONS, sample_disorder
from .sequences import (Pulse, Wait, auto_modulation, builtin_sequence, effective_field,
                        toggling_frames)
from .spin import (DENSE_MAX_DIM, apply_local, embed, krylov_evolve, rotation_matrix_su2,
                   spin_operators)

log = logging.getLogger(__name__)

DEFAULT_MAX_SPINS = 14
FULL_TRACE_MAX_SPINS = 10
TYPICALITY_ABOVE = 8
MIN_TYPICALITY_SAMPLES = 20
PROTOCOL_KINDS = ("disorder_order_xx", "disorder_order_zz", "global_decay", "rabi",
                  "ac_magnetometry")


class SpinCapError(ValueError):
    """Raised when a system exceeds the exact-simulation size cap."""


def t2_star(width):
    """Gaussian-FID dephasing time sqrt(2)/(2 pi W) for disorder std ``width`` (MHz)."""
    return np.sqrt(2) / (2 * np.pi * width)


@dataclass
class TimeSeries:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    x_label: str = "t_us"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.value = np.asarray(self.value, dtype=float).reshape(-1)
        if self.stderr is None:
            self.stderr = np.zeros_like(self.value)
        self.stderr = np.asarray(self.stderr, dtype=float).reshape(-1)
        if not (self.t.size == self.value.size == self.stderr.size):
            raise ValueError("t, value and stderr lengths differ")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if np.any(self.stderr < 0):
            raise ValueError("stderr must be non-negative")

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.x_label, "value", "stderr"])
        for row in zip(self.t, self.value, self.stderr):
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, x_label=None):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            cols = reader.fieldnames or []
        xcol = x_label or (cols[0] if cols else "t_us")
        for need in (xcol, "value"):
            if need not in cols:
                raise KeyError(need)
        t = [float(r[xcol]) for r in rows]
        v = [float(r["value"]) for r in rows]
        se = [float(r["stderr"]) for r in rows] if "stderr" in cols else None
        return cls(t, v, se, x_label=xcol)


@dataclass
class ProtocolSpec:
    kind: str
    time_grid: np.ndarray
    disorder_width: float = 100.0           # MHz
    tau_wind: float | None = None           # us, default 3.5 T2*
    tau_prime: float | None = None          # us, default 3 tau_wind
    sequence: object = None                 # PulseSequence, builtin name or None
    n_realizations: int = 200
    n_typicality_samples: int = MIN_TYPICALITY_SAMPLES
    seed: int = 0
    disorder_distribution: str = "gaussian"
    disorder_in_hamiltonian: bool = False
    extrinsic_T: float | None = None        # us, multiplicative exp(-t/T)

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        if self.tau_wind is None:
            self.tau_wind = 3.5 * t2_star(self.disorder_width)
        if self.tau_prime is None:
            self.tau_prime = 3 * self.tau_wind
        if isinstance(self.sequence, str):
            self.sequence = builtin_sequence(self.sequence)


# -- Hamiltonians and observables ------------------------------------------

def build_hamiltonian(couplings, disorder=None, field=None, g=None, max_spins=DEFAULT_MAX_SPINS):
    """Sparse ``sum_{i<j} J_ij [g_x sx sx + g_y sy sy + g_z sz sz] + sum_i h_i sz_i + f.S``.

    ``couplings`` is a :class:`~dressedspin.ensemble.CouplingMatrix`; ``g``
    overrides its ``(g_xy, g_xy, g_zz)`` (e.g. with a Floquet average).
    ``field`` is a global 3-vector in MHz.
    """
    J = np.asarray(couplings.J, dtype=float)
    n = J.shape[0]
    if n > max_spins:
        raise SpinCapError(f"{n} spins exceed the cap of {max_spins}")
    gx, gy, gz = (couplings.g_xy, couplings.g_xy, couplings.g_zz) if g is None else g
    h = np.zeros(n) if disorder is None else np.asarray(disorder, dtype=float)
    f = np.zeros(3) if field is None else np.asarray(field, dtype=float)
    dim = 2**n
    diag = kernels.diagonal_energies(n, gz * J, h + f[2])
    rows, cols, vals = kernels.flipflop_coo(n, 0.5 * (gx + gy) * J)
    parts_r, parts_c, parts_v = [np.arange(dim), rows], [np.arange(dim), cols], [diag, vals]
    parts_v = [v.astype(complex) for v in parts_v]
    if abs(gx - gy) > 0:
        r2, c2, v2 = _double_flip_coo(n, 0.5 * (gx - gy) * J)
        parts_r.append(r2), parts_c.append(c2), parts_v.append(v2.astype(complex))
    if f[0] != 0 or f[1] != 0:
        r3, c3, v3 = _transverse_coo(n, f[0], f[1])
        parts_r.append(r3), parts_c.append(c3), parts_v.append(v3)
    H = sp.coo_matrix((np.concatenate(parts_v), (np.concatenate(parts_r), np.concatenate(parts_c))),
                      shape=(dim, dim)).tocsr()
    H.sum_duplicates()
    return H


def xxz_operator(couplings, disorder=None, max_spins=DEFAULT_MAX_SPINS):
    """Matrix-free XXZ Hamiltonian as a ``LinearOperator`` (Krylov paths only)."""
    J = np.asarray(couplings.J, dtype=float)
    n = J.shape[0]
    if n > max_spins:
        raise SpinCapError(f"{n} spins exceed the cap of {max_spins}")
    h = np.zeros(n) if disorder is None else np.asarray(disorder, dtype=float)
    diag = kernels.diagonal_energies(n, couplings.g_zz * J, h)
    xy = couplings.g_xy * J
    return spla.LinearOperator((2**n, 2**n), matvec=lambda v: kernels.xxz_matvec(v, n, diag, xy),
                               dtype=complex)


def _double_flip_coo(n, coef):
    """sum_{i<j} coef_ij (sx sx - sy sy): couples states where bits i, j agree."""
    states = np.arange(2**n)
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            if coef[i, j] == 0:
                continue
            bi, bj = n - 1 - i, n - 1 - j
            same = ((states >> bi) & 1) == ((states >> bj) & 1)
            src = states[same]
            rows.append(src ^ ((1 << bi) | (1 << bj)))
            cols.append(src)
            vals.append(np.full(src.size, 0.5 * coef[i, j]))
    if not rows:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _transverse_coo(n, fx, fy):
    states = np.arange(2**n)
    rows, cols, vals = [], [], []
    for i in range(n):
        b = n - 1 - i
        up = ((states >> b) & 1) == 0
        # <flipped| fx sx + fy sy |s>: up->down gives (fx + i fy)/2, down->up (fx - i fy)/2
        amp = np.where(up, 0.5 * (fx + 1j * fy), 0.5 * (fx - 1j * fy))
        rows.append(states ^ (1 << b))
        cols.append(states)
        vals.append(amp)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def site_operator(n, site, axis):
    """Sparse spin-1/2 operator ``s^axis`` on ``site`` of ``n`` spins."""
    op = spin_operators(0.5)["xyz".index(axis)]
    return embed(op, site, [2] * n)


def total_spin(n, axis):
    return sum(site_operator(n, i, axis) for i in range(n))


def site_expectations(psi, n, axis):
    """``<s_i^axis>`` for every site, from a normalized state."""
    psi = np.asarray(psi).reshape((2,) * n)
    out = np.empty(n)
    for i in range(n):
        a = np.moveaxis(psi, i, 0)
        up, dn = a[0], a[1]
        if axis == "z":
            out[i] = 0.5 * (np.vdot(up, up) - np.vdot(dn, dn)).real
        elif axis == "x":
            out[i] = np.vdot(up, dn).real
        elif axis == "y":
            out[i] = np.vdot(up, dn).imag
        else:
            raise ValueError(f"unknown axis {axis!r}")
    return out


def product_state(n, direction):
    """All ``n`` spins polarized along a unit 3-vector."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    theta = np.arccos(np.clip(d[2], -1, 1))
    phi = np.arctan2(d[1], d[0])
    one = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    psi = one
    for _ in range(n - 1):
        psi = np.kron(psi, one)
    return psi


def apply_global_rotation(psi, n, axis, angle):
    return apply_local(psi, rotation_matrix_su2(axis, angle), n)


def _z_phase(n, h, tau, sign=-1.0):
    """Diagonal of ``exp(sign * 2 pi i tau sum_i h_i sz_i)``."""
    e = kernels.diagonal_energies(n, np.zeros((n, n)), h)
    return np.exp(sign * 2j * np.pi * e * tau)


# -- propagation helpers ----------------------------------------------------

class Spectrum:
    """Eigendecomposition of a Hermitian Hamiltonian, real when possible."""

    def __init__(self, H):
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        if np.max(np.abs(dense.imag), initial=0.0) == 0.0:
            dense = dense.real
        self.energies, self.vectors = la.eigh(dense)

    @property
    def dim(self):
        return self.energies.size

    def unitary(self, t):
        V = self.vectors
        return (V * np.exp(-2j * np.pi * self.energies * t)) @ V.conj().T

    def evolve_grid(self, psi, t_grid):
        """States at every time in ``t_grid`` as a (T, dim) array."""
        c = self.vectors.conj().T @ psi
        phases = np.exp(-2j * np.pi * np.outer(t_grid, self.energies))
        return (phases * c) @ self.vectors.T


class _KrylovGrid:
    def __init__(self, H):
        self.H = H

    def evolve_grid(self, psi, t_grid):
        out = np.empty((len(t_grid), psi.size), dtype=complex)
        cur, t_prev = np.asarray(psi, dtype=complex), 0.0
        for k, t in enumerate(t_grid):
            if t > t_prev:
                cur = krylov_evolve(cur, self.H, t - t_prev)
            out[k] = cur
            t_prev = t
        return out


def _propagator_for(H):
    if isinstance(H, spla.LinearOperator) or H.shape[0] > DENSE_MAX_DIM:
        return _KrylovGrid(H)
    return Spectrum(H)


class PulsedEvolution:
    """Stroboscopic evolution under ``H`` interleaved with ideal global pulses."""

    def __init__(self, H, n, seq):
        self.n = n
        self.seq = seq
        spec = Spectrum(H)
        waits = {}
        U = np.eye(2**n, dtype=complex)
        for e in seq.elements:
            if isinstance(e, Wait):
                if e.duration not in waits:
                    waits[e.duration] = spec.unitary(e.duration)
                U = waits[e.duration] @ U
            else:
                U = _global_pulse_matrix(n, e) @ U
        self.period_unitary = U

    def evolve_grid(self, psi, t_grid):
        period = self.seq.period
        counts = np.rint(np.asarray(t_grid) / period).astype(int)
        if np.any(np.abs(counts * period - t_grid) > 1e-9 * max(period, 1.0)):
            raise ValueError("time grid must be a multiple of the sequence period")
        out = np.empty((len(t_grid), psi.size), dtype=complex)
        cur, done = np.asarray(psi, dtype=complex), 0
        for k, m in enumerate(counts):
            for _ in range(m - done):
                cur = self.period_unitary @ cur
            done = max(done, m)
            out[k] = cur
        return out


def _global_pulse_matrix(n, pulse):
    u = pulse.unitary()
    out = u
    for _ in range(n - 1):
        out = np.kron(out, u)
    return out


def _map_ordered(fn, n_tasks, workers):
    if workers is None or workers <= 1:
        return [fn(k) for k in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_tasks)))


def _mean_stderr(samples):
    samples = np.asarray(samples)
    mean = samples.mean(axis=0)
    if samples.shape[0] > 1:
        se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    else:
        se = np.zeros_like(mean)
    return mean, se


# -- autocorrelators --------------------------------------------------------

def _n_from_dim(dim):
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError("Hamiltonian dimension is not a power of two")
    return n


def autocorrelator_direct(H, t_grid, axis="x", sites="all", method="full_trace",
                          n_samples=MIN_TYPICALITY_SAMPLES, seed=0, workers=1, spectrum=None):
    """Infinite-temperature ``<s_i^a(t) s_i^a(0)>`` normalized to 1 at t = 0.

    ``sites="all"`` averages over every site.  ``full_trace`` is exact via
    the eigenbasis (N <= 10); ``typicality`` averages over random states
    and reports a standard error.
    """
    n = _n_from_dim(H.shape[0])
    t_grid = np.asarray(t_grid, dtype=float)
    site_list = list(range(n)) if sites == "all" else [int(sites)] if np.isscalar(sites) else list(sites)
    if method == "full_trace":
        if isinstance(H, spla.LinearOperator):
            raise ValueError("full_trace needs an explicit matrix; use typicality")
        if n > FULL_TRACE_MAX_SPINS:
            raise SpinCapError(f"full_trace limited to {FULL_TRACE_MAX_SPINS} spins; use typicality")
        spec = spectrum or Spectrum(H)
        V = spec.vectors
        W = np.zeros((spec.dim, spec.dim))
        for i in site_list:
            A = site_operator(n, i, axis)
            if axis != "y":
                A = A.real
            Ap = V.conj().T @ (A @ V)
            W += np.abs(Ap) ** 2
        norm = len(site_list) * spec.dim / 4
        val = kernels.spectral_correlation(W, spec.energies, t_grid) / norm
        return TimeSeries(t_grid, val, np.zeros_like(val),
                          {"method": method, "axis": axis, "N": n})
    if method != "typicality":
        raise ValueError(f"unknown method {method!r}")
    prop = spectrum or _propagator_for(H)
    ops = [site_operator(n, i, axis) for i in site_list]
    children = np.random.SeedSequence(seed).spawn(n_samples)

    def task(k):
        rng = np.random.default_rng(children[k])
        r = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
        r /= np.linalg.norm(r)
        rt = prop.evolve_grid(r, t_grid)
        acc = np.zeros(len(t_grid))
        for A in ops:
            phit = prop.evolve_grid(A @ r, t_grid)
            acc += np.einsum("td,td->t", rt.conj(), (A @ phit.T).T).real
        return 4 * acc / len(ops)

    mean, se = _mean_stderr(_map_ordered(task, n_samples, workers))
    return TimeSeries(t_grid, mean, se, {"method": method, "axis": axis, "N": n,
                                         "n_samples": n_samples, "seed": seed})


def global_decay(H, axis, t_grid, sequence=None, spectrum=None):
    """``<S^a>(t) / <S^a>(0)`` from the fully polarized product state along ``axis``.

    With ``sequence`` the evolution is pulsed and sampled stroboscopically.
    """
    n = _n_from_dim(H.shape[0])
    direction = {"x": [1, 0, 0], "y": [0, 1, 0], "z": [0, 0, 1]}[axis]
    psi0 = product_state(n, direction)
    if sequence is not None:
        prop = PulsedEvolution(H, n, sequence)
    else:
        prop = spectrum or _propagator_for(H)
    states = prop.evolve_grid(psi0, np.asarray(t_grid, dtype=float))
    vals = np.array([site_expectations(s, n, axis).sum() for s in states]) / (n / 2)
    return TimeSeries(t_grid, vals, None, {"axis": axis, "N": n})


# -- disorder-order protocol -----------------------------------------------

def _protocol_gate_list(kind):
    """Documented gate order; see :func:`disorder_order_protocol`."""
    if kind == "disorder_order_xx":
        return ["prep pi/2 about y", "wind +h", "evolve H(t)", "unwind -h", "measure S^x"]
    return ["prep pi/2 about y", "wind +h", "pi/2 about y", "dephase +h for tau'",
            "evolve H(t)", "pi/2 about -y", "unwind -h", "measure S^x"]


def disorder_order_protocol(spec, geom, couplings, H=None, workers=1,
                            max_spins=DEFAULT_MAX_SPINS):
    """Simulate the disorder-order sequence and return the site-averaged autocorrelator.

    Gate list for ``disorder_order_xx``:
        |up...up> -> pi/2_y -> exp(-2 pi i tau_w sum h_i sz_i) -> H(t)
        -> exp(+2 pi i tau_w sum h_i sz_i) -> measure S^x, normalized by N/2.
    For ``disorder_order_zz`` a pi/2_y after winding tips the random XY
    polarization into the YZ plane, free disorder precession for
    ``tau' = 3 tau_w`` dephases the y part, and a pi/2 about -y before
    unwinding maps z back onto x; the signal is normalized by N/4.

    The random winding angles make all cross-site terms average out, so the
    mean over realizations equals (C^XX + C^YY)/2 respectively C^ZZ of the
    Hamiltonian used in the ``H(t)`` window.  ``H`` defaults to
    :func:`build_hamiltonian` of ``couplings`` (plus the realization's
    disorder when ``spec.disorder_in_hamiltonian``).  With
    ``spec.sequence`` set, the window is pulsed and the time grid must be a
    multiple of the sequence period.
    """
    if spec.kind not in ("disorder_order_xx", "disorder_order_zz"):
        raise ValueError("spec.kind must be a disorder-order protocol")
    n = couplings.n
    if geom is not None and geom.n != n:
        raise ValueError("geometry and coupling matrix disagree on the spin count")
    if n > max_spins:
        raise SpinCapError(f"{n} spins exceed the cap of {max_spins}")
    phase_spread = 2 * np.pi * spec.disorder_width * spec.tau_wind
    if phase_spread < 2:
        warnings.warn(f"winding phase spread {phase_spread:.2f} rad < 2; protocol output is biased",
                      stacklevel=2)
    t_grid = spec.time_grid
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_realizations)

    def window(h):
        Hk = H
        if Hk is None:
            Hk = build_hamiltonian(couplings, h if spec.disorder_in_hamiltonian else None,
                                   max_spins=max_spins)
        if spec.sequence is not None:
            return PulsedEvolution(Hk, n, spec.sequence)
        return _propagator_for(Hk)

    shared = None if spec.disorder_in_hamiltonian else window(None)
    y, my = np.array([0.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.0])
    zz = spec.kind == "disorder_order_zz"

    def task(k):
        rng = np.random.default_rng(children[k])
        h = sample_disorder(n, spec.disorder_width, spec.disorder_distribution, rng)
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1.0
        psi = apply_global_rotation(psi, n, y, np.pi / 2)
        psi = _z_phase(n, h, spec.tau_wind, -1.0) * psi
        if zz:
            psi = apply_global_rotation(psi, n, y, np.pi / 2)
            psi = _z_phase(n, h, spec.tau_prime, -1.0) * psi
        prop = shared if shared is not None else window(h)
        states = prop.evolve_grid(psi, t_grid)
        unwind = _z_phase(n, h, spec.tau_wind, +1.0)
        out = np.empty(len(t_grid))
        for j, s in enumerate(states):
            if zz:
                s = apply_global_rotation(s, n, my, np.pi / 2)
            s = unwind * s
            out[j] = site_expectations(s, n, "x").sum()
        return out / (n / 4 if zz else n / 2)

    mean, se = _mean_stderr(_map_ordered(task, spec.n_realizations, workers))
    if spec.extrinsic_T:
        decay = np.exp(-t_grid / spec.extrinsic_T)
        mean, se = mean * decay, se * decay
    meta = {"kind": spec.kind, "N": n, "seed": spec.seed, "n_realizations": spec.n_realizations,
            "tau_wind": spec.tau_wind, "tau_prime": spec.tau_prime,
            "gates": _protocol_gate_list(spec.kind)}
    return TimeSeries(t_grid, mean, se, meta)


# -- single-spin experiments -------------------------------------------------

def nv_frame(group, B_dir):
    """Rows are the NV-frame x (along the field), y, z (NV axis) unit vectors."""
    z = ORIENTATIONS[group]
    x = np.asarray(B_dir, dtype=float)
    x = x - np.dot(x, z) * z
    x = x / np.linalg.norm(x)
    return np.array([x, np.cross(z, x), z])


def rabi_frequencies(groups, B_perp, drive_amplitude, drive_direction, B_dir, c=NVConstants()):
    """Per-group Rabi frequency (MHz) of the dressed qubit in the rotating frame.

    The drive ``drive_amplitude * d.J`` is written in each group's NV frame
    and projected onto that group's dressed qubit; the Rabi frequency is
    ``drive_amplitude * |<B~|P(d.J)|0~>|``.
    """
    basis = dressed_basis(B_perp, c)
    Q = basis.qubit_frame
    J = spin_operators(1)
    d = np.asarray(drive_direction, dtype=float)
    d = d / np.linalg.norm(d)
    out = []
    for g in groups:
        if abs(np.dot(ORIENTATIONS[g], B_dir)) > 1e-9:
            raise ValueError(f"field is not perpendicular to group {g}")
        dn = nv_frame(g, B_dir) @ d
        P = Q.conj().T @ sum(dn[a] * J[a] for a in range(3)) @ Q
        out.append(drive_amplitude * abs(P[1, 0]))
    return np.array(out)


def rabi_simulation(groups, B_perp, drive_amplitude, drive_direction, t_grid, B_dir=None,
                    c=NVConstants()):
    """Population of ``|B~>`` under resonant drive, averaged over the groups."""
    from .ensemble import perpendicular_direction
    groups = list(groups)
    if B_dir is None:
        B_dir = perpendicular_direction(groups)
    freqs = rabi_frequencies(groups, B_perp, drive_amplitude, drive_direction, B_dir, c)
    sx = spin_operators(0.5)[0]
    pops = []
    for f in freqs:
        H = f * sx  # rotating frame, resonant
        spec = Spectrum(H)
        psi0 = np.array([1, 0], dtype=complex)  # |0~> first in the qubit frame
        states = spec.evolve_grid(psi0, np.asarray(t_grid, dtype=float))
        pops.append(np.abs(states[:, 1]) ** 2)
    meta = {"groups": groups, "rabi_MHz": freqs.tolist(), "B_perp": B_perp}
    return TimeSeries(t_grid, np.mean(pops, axis=0), None, meta)


ENCODINGS = ("onaxis", "onaxis_droid_like", "perpendicular_two_group")
GAUSS_PER_NT = 1e-5
# default cycle length keeps the per-cycle rotation small so averaging holds
MAX_CYCLE_US = 0.05


def encoding_setup(encoding, c=NVConstants(), B_perp=None):
    """(moment ratio, pulse sequence) for a magnetometry encoding."""
    if encoding == "onaxis":
        return 1.0, builtin_sequence("xy8")
    if encoding == "onaxis_droid_like":
        return 1.0, builtin_sequence("balanced_su2")
    if encoding == "perpendicular_two_group":
        b = su2_field(c) if B_perp is None else B_perp
        return moment_difference(b, c), builtin_sequence("cxy8")
    raise ValueError(f"unsupported encoding {encoding!r}")


def ac_magnetometry(encoding, amplitudes_nT, t_phase=7.2, c=NVConstants(), couplings=None,
                    sequence=None, B_perp=None, n_periods=None):
    """Contrast response to a synchronized square-wave AC field.

    The target field flips sign with the per-frame modulation from
    :func:`~dressedspin.sequences.auto_modulation`; its component along the
    qubit moment shifts the qubit frequency by ``dmu * gamma * B``.  The
    spins are prepared along ``n0``, the x axis projected perpendicular to
    the averaged field direction, the sequence is repeated to fill
    ``t_phase`` of free evolution, and the contrast is ``<2 n0.S>/N``.
    Passing ``couplings`` switches on the interacting many-spin version.
    """
    dmu, seq = encoding_setup(encoding, c, B_perp)
    if sequence is not None:
        seq = builtin_sequence(sequence) if isinstance(sequence, str) else sequence
    if n_periods is None:
        n_periods = int(np.ceil(t_phase / MAX_CYCLE_US - 1e-9))
    seq = seq.scaled(t_phase / n_periods)
    frames = toggling_frames(seq)
    mod = auto_modulation(frames)
    n = 1 if couplings is None else couplings.n
    H_int = None if couplings is None else build_hamiltonian(couplings).toarray()
    sz_tot = total_spin(n, "z").toarray()
    axis = effective_field(1.0, frames, mod)
    axis = axis / np.linalg.norm(axis)
    n0 = np.array([1.0, 0.0, 0.0]) - axis[0] * axis
    n0 = n0 / np.linalg.norm(n0)
    psi0 = product_state(n, n0)
    amplitudes_nT = np.asarray(amplitudes_nT, dtype=float)
    contrast = np.empty(amplitudes_nT.size)
    pulses = {}
    for k, b in enumerate(amplitudes_nT):
        shift = dmu * c.gamma * GAUSS_PER_NT * b  # MHz
        U = np.eye(2**n, dtype=complex)
        w = 0
        for e in seq.elements:
            if isinstance(e, Pulse):
                key = (e.axis, e.angle)
                if key not in pulses:
                    pulses[key] = _global_pulse_matrix(n, e)
                U = pulses[key] @ U
            elif e.duration > 0:
                Hk = mod[w] * shift * sz_tot
                if H_int is not None:
                    Hk = Hk + H_int
                U = la.expm(-2j * np.pi * Hk * e.duration) @ U
                w += 1
        psi = np.linalg.matrix_power(U, n_periods) @ psi0
        proj = sum(n0[a] * site_expectations(psi, n, "xyz"[a]).sum() for a in range(3))
        contrast[k] = 2 * proj / n
    meta = {"encoding": encoding, "t_phase_us": t_phase, "moment_ratio": dmu,
            "readout_axis": n0.tolist(),
            "sequence": seq.name, "n_periods": n_periods}
    return TimeSeries(amplitudes_nT, contrast, None, meta, x_label="B_ac_nT")
