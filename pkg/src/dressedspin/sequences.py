"""Pulse sequences, toggling frames and zeroth-order average Hamiltonians.

Pulses are ideal, instantaneous global rotations ``P = exp(-i theta n.s)``.
For the free-evolution window ``k`` the toggling-frame spin operators are
``s~_a = U_k^dag s_a U_k = sum_b R_k[a, b] s_b`` where ``U_k`` is the
product of all earlier pulses; ``R_k`` is stored in :class:`FrameSchedule`.
``R_k`` is also the active rotation accumulated by the pulses, so e.g. a
pi/2 pulse about y gives ``R @ z_hat = x_hat``.

A native two-body Hamiltonian ``sum_a g_a s_a s_a`` becomes the quadratic
form ``R^T diag(g) R`` in window ``k``; a field ``f.s`` becomes ``(R^T f).s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spin import rotation_matrix_su2

AXES = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "-x": np.array([-1.0, 0.0, 0.0]),
    "-y": np.array([0.0, -1.0, 0.0]),
}

ORTHO_TOL = 1e-12
CYCLIC_TOL = 1e-10
XXZ_RESIDUAL_TOL = 1e-9


class SequenceError(ValueError):
    pass


@dataclass(frozen=True)
class Pulse:
    axis: str
    angle: float  # radians

    def __post_init__(self):
        if self.axis not in AXES:
            raise SequenceError(f"unknown pulse axis {self.axis!r}")

    @property
    def vector(self):
        return AXES[self.axis]

    def rotation(self):
        return axis_angle_matrix(self.vector, self.angle)

    def unitary(self):
        return rotation_matrix_su2(self.vector, self.angle)


@dataclass(frozen=True)
class Wait:
    duration: float  # microseconds

    def __post_init__(self):
        if not self.duration >= 0:
            raise SequenceError("wait duration must be non-negative")


@dataclass
class PulseSequence:
    elements: list
    name: str = ""

    @property
    def period(self):
        return float(sum(e.duration for e in self.elements if isinstance(e, Wait)))

    @property
    def pulses(self):
        return [e for e in self.elements if isinstance(e, Pulse)]

    def net_rotation(self):
        R = np.eye(3)
        for e in self.elements:
            if isinstance(e, Pulse):
                R = e.rotation() @ R
        return R

    def is_cyclic(self, tol=CYCLIC_TOL):
        return np.allclose(self.net_rotation(), np.eye(3), atol=tol)

    def scaled(self, period):
        """Copy with all waits rescaled so the period equals ``period``."""
        k = period / self.period
        return PulseSequence([Wait(e.duration * k) if isinstance(e, Wait) else e
                              for e in self.elements], name=self.name)

    def __eq__(self, other):
        if not isinstance(other, PulseSequence) or len(self.elements) != len(other.elements):
            return False
        for a, b in zip(self.elements, other.elements):
            if type(a) is not type(b):
                return False
            if isinstance(a, Pulse) and (a.axis != b.axis or not np.isclose(a.angle, b.angle)):
                return False
            if isinstance(a, Wait) and not np.isclose(a.duration, b.duration):
                return False
        return True


@dataclass
class FrameSchedule:
    rotations: np.ndarray  # (K, 3, 3)
    durations: np.ndarray  # (K,)

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=float).reshape(-1, 3, 3)
        self.durations = np.asarray(self.durations, dtype=float).reshape(-1)
        if self.rotations.shape[0] != self.durations.shape[0]:
            raise SequenceError("rotation and duration counts differ")
        for R in self.rotations:
            if not np.allclose(R.T @ R, np.eye(3), atol=ORTHO_TOL):
                raise SequenceError("frame rotation is not orthogonal")

    def __len__(self):
        return self.durations.size

    @property
    def weights(self):
        return self.durations / self.durations.sum()

    @classmethod
    def from_weights(cls, rotations, weights):
        return cls(np.asarray(rotations), np.asarray(weights, dtype=float))


@dataclass
class CouplingVector:
    g: np.ndarray                      # (g_x, g_y, g_z)
    f: np.ndarray = field(default_factory=lambda: np.zeros(3))  # field, MHz
    offdiag_residual: float = 0.0

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float).reshape(3)
        self.f = np.asarray(self.f, dtype=float).reshape(3)

    @property
    def trace(self):
        return float(self.g.sum())


def axis_angle_matrix(axis, angle):
    """Active SO(3) rotation by ``angle`` about unit ``axis`` (Rodrigues)."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    K = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    R = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
    # snap round-off so signed permutations stay exact
    R[np.abs(R) < 1e-15] = 0.0
    return R


def toggling_frames(seq):
    """Frame rotation and duration for every Wait element, in order."""
    if not seq.elements:
        raise SequenceError("empty pulse sequence")
    R = np.eye(3)
    rots, durs = [], []
    for e in seq.elements:
        if isinstance(e, Pulse):
            R = e.rotation() @ R
        elif isinstance(e, Wait):
            if e.duration > 0:
                rots.append(R.copy())
                durs.append(e.duration)
        else:
            raise SequenceError(f"malformed sequence element {e!r}")
    if not durs:
        raise SequenceError("sequence contains no free evolution")
    return FrameSchedule(np.array(rots), np.array(durs))


def average_hamiltonian(native, frames, require_xxz=False):
    """Duration-weighted zeroth-order average of ``native`` over ``frames``.

    The full quadratic form is transported; the diagonal is returned as the
    averaged coupling vector and the largest off-diagonal element as
    ``offdiag_residual``.
    """
    if len(frames) == 0:
        raise SequenceError("no frames to average over")
    G = np.diag(native.g)
    w = frames.weights
    Q = np.zeros((3, 3))
    f = np.zeros(3)
    for R, wk in zip(frames.rotations, w):
        Q += wk * R.T @ G @ R
        f += wk * R.T @ native.f
    resid = float(np.max(np.abs(Q - np.diag(np.diag(Q)))))
    if require_xxz and resid > XXZ_RESIDUAL_TOL:
        raise SequenceError(f"averaged form has off-diagonal residual {resid:.2e}")
    return CouplingVector(np.diag(Q).copy(), f, offdiag_residual=resid)


def auto_modulation(frames, axis=2):
    """Square-wave target modulation: the sign that keeps the transported field aligned.

    For each frame the field along lab ``axis`` is transported to
    ``R^T e_axis``; the sign of its largest component is returned.
    """
    out = np.empty(len(frames))
    for k, R in enumerate(frames.rotations):
        v = R[axis]  # = R^T e_axis
        out[k] = np.sign(v[np.argmax(np.abs(v))])
    return out


def effective_field(field_vec, frames, modulation=None):
    """Averaged field vector (MHz) for a target modulated by ``+-1`` per frame."""
    field_vec = np.asarray(field_vec, dtype=float)
    if field_vec.ndim == 0:
        field_vec = np.array([0.0, 0.0, float(field_vec)])
    if modulation is None:
        modulation = np.ones(len(frames))
    modulation = np.asarray(modulation, dtype=float)
    if modulation.size != len(frames):
        raise SequenceError(
            f"modulation has {modulation.size} entries for {len(frames)} frames")
    out = np.zeros(3)
    for R, wk, m in zip(frames.rotations, frames.weights, modulation):
        out += wk * m * R.T @ field_vec
    return out


def field_ratio(frames, modulation=None):
    """|effective field| / |native field| for a unit target along z."""
    if modulation is None:
        modulation = auto_modulation(frames)
    return float(np.linalg.norm(effective_field(1.0, frames, modulation)))


# -- built-in sequences -----------------------------------------------------

PI = np.pi
XY8_PATTERN = ("x", "y", "x", "y", "y", "x", "y", "x")


def xy8(tau=1.0):
    """tau/2 - X - tau - Y - ... - X - tau/2 with pi pulses."""
    el = [Wait(tau / 2)]
    for k, ax in enumerate(XY8_PATTERN):
        el.append(Pulse(ax, PI))
        el.append(Wait(tau if k < 7 else tau / 2))
    return PulseSequence(el, name="xy8")


def cxy8(tau=1.0):
    """Second concatenation level: an XY8 block before each outer XY8 pulse."""
    inner = xy8(tau).elements
    el = []
    for ax in XY8_PATTERN:
        el.extend(inner)
        el.append(Pulse(ax, PI))
    return PulseSequence(el, name="cxy8")


def balanced_su2(tau=1.0):
    """pi/2 schedule with equal time in the z, x and y toggling frames."""
    h = PI / 2
    el = [Wait(tau), Pulse("x", h), Wait(tau), Pulse("-y", h), Wait(2 * tau),
          Pulse("y", h), Wait(tau), Pulse("-x", h), Wait(tau)]
    return PulseSequence(el, name="balanced_su2")


BUILTIN = {"xy8": xy8, "cxy8": cxy8, "balanced_su2": balanced_su2}


def builtin_sequence(name, tau=1.0):
    try:
        return BUILTIN[name](tau)
    except KeyError:
        raise SequenceError(f"unknown sequence {name!r}; choose from {sorted(BUILTIN)}") from None


# -- file format ------------------------------------------------------------

def parse_sequence_text(text, source="<string>"):
    """Parse ``PULSE <axis> <angle_deg>`` / ``WAIT <us>`` lines; ``#`` starts a comment."""
    el = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "PULSE" and len(tok) == 3:
                if tok[1] not in AXES:
                    raise SequenceError(f"bad axis token {tok[1]!r}")
                el.append(Pulse(tok[1], np.deg2rad(float(tok[2]))))
            elif tok[0] == "WAIT" and len(tok) == 2:
                el.append(Wait(float(tok[1])))
            else:
                raise SequenceError(f"unrecognized statement {line!r}")
        except (ValueError, SequenceError) as exc:
            raise SequenceError(f"{source}:{lineno}: {exc}") from None
    if not el:
        raise SequenceError(f"{source}: no sequence elements")
    return PulseSequence(el, name=Path(source).stem if source != "<string>" else "")


def parse_sequence_file(path):
    path = Path(path)
    return parse_sequence_text(path.read_text(), source=str(path))


def format_sequence(seq):
    lines = [f"# {seq.name}" if seq.name else "# pulse sequence"]
    for e in seq.elements:
        if isinstance(e, Pulse):
            lines.append(f"PULSE {e.axis} {np.rad2deg(e.angle):.12g}")
        else:
            lines.append(f"WAIT {e.duration:.12g}")
    return "\n".join(lines) + "\n"


def write_sequence_file(seq, path):
    Path(path).write_text(format_sequence(seq))
