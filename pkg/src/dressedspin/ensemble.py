"""Disordered NV ensemble geometry and pair couplings.

Positions are in nm, disorder in MHz.  Orientation groups are the four
<111> axes of the diamond lattice (crystal frame coordinates).
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dressed import NVConstants, effective_couplings, onaxis_couplings

log = logging.getLogger(__name__)

ORIENTATIONS = np.array([
    [1, 1, 1],
    [1, -1, -1],
    [-1, 1, -1],
    [-1, -1, 1],
], dtype=float) / np.sqrt(3)

# carbon atoms per nm^3 in diamond, for ppm <-> nm^-3
DIAMOND_CARBON_DENSITY = 176.0

DEFAULT_EXCLUSION_NM = 2.0
DEFAULT_MAX_SPINS = 14
PERPENDICULAR_TOL = 1e-9

GEOMETRY_COLUMNS = ("x_nm", "y_nm", "z_nm", "group", "h_MHz")


def ppm_to_density(ppm):
    return ppm * 1e-6 * DIAMOND_CARBON_DENSITY


def density_to_ppm(rho):
    return rho / DIAMOND_CARBON_DENSITY * 1e6


@dataclass
class EnsembleGeometry:
    positions: np.ndarray          # (N, 3), nm
    group: np.ndarray              # (N,), orientation index
    B_dir: np.ndarray              # unit vector, crystal frame
    B_mag: float = 0.0             # Gauss
    h: np.ndarray | None = None    # (N,), MHz
    seed: int | None = None
    diameter: float | None = None
    thickness: float | None = None
    exclusion: float = DEFAULT_EXCLUSION_NM

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.group = np.asarray(self.group, dtype=int).reshape(-1)
        self.B_dir = np.asarray(self.B_dir, dtype=float)
        self.B_dir = self.B_dir / np.linalg.norm(self.B_dir)
        if self.h is not None:
            self.h = np.asarray(self.h, dtype=float).reshape(-1)
            if self.h.size != self.n:
                raise ValueError("disorder length does not match spin count")
        if self.group.size != self.n:
            raise ValueError("group labels do not match spin count")

    @property
    def n(self):
        return self.positions.shape[0]


@dataclass
class CouplingMatrix:
    """``J[i, j]`` multiplies ``g_xy (sx sx + sy sy) + g_zz sz sz`` for pair (i, j)."""

    J: np.ndarray
    g_xy: float
    g_zz: float
    encoding: str = "perpendicular"
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.J.shape[0]

    @property
    def J0_rho_scale(self):
        """Trace-normalized coupling magnitude, (2 g_xy + g_zz)/3."""
        return (2 * self.g_xy + self.g_zz) / 3


def perpendicular_direction(groups):
    """Unit field direction perpendicular to one or two orientation groups.

    Two groups: the normalized cross product of their axes.  One group: the
    crystal x axis projected onto the plane normal to the NV axis (a fixed,
    reproducible choice).
    """
    groups = list(groups)
    if len(groups) == 2:
        a, b = groups
        if a == b:
            raise ValueError("orientation groups must be distinct")
        v = np.cross(ORIENTATIONS[a], ORIENTATIONS[b])
        return v / np.linalg.norm(v)
    if len(groups) == 1:
        axis = ORIENTATIONS[groups[0]]
        ref = np.array([1.0, 0.0, 0.0])
        v = ref - np.dot(ref, axis) * axis
        return v / np.linalg.norm(v)
    raise ValueError("expected one or two orientation groups")


def field_direction(configuration, groups=(0, 1)):
    """Field direction for ``onaxis``, ``perp_one_group`` or ``perp_two_group``."""
    if configuration == "onaxis":
        return ORIENTATIONS[groups[0]].copy()
    if configuration == "perp_one_group":
        return perpendicular_direction(groups[:1])
    if configuration == "perp_two_group":
        return perpendicular_direction(groups[:2])
    raise ValueError(f"unknown field configuration {configuration!r}")


def anisotropy(B_dir, r_vec):
    """Dipolar anisotropy ``(3 (B.r)^2 - 1) / 2`` for unit ``B_dir``; in [-1/2, 1]."""
    r_vec = np.asarray(r_vec, dtype=float)
    r = np.linalg.norm(r_vec, axis=-1)
    if np.any(r == 0):
        raise ValueError("zero separation")
    B = np.asarray(B_dir, dtype=float)
    cos = (r_vec @ B) / (r * np.linalg.norm(B))
    return 1.5 * cos**2 - 0.5


def _uniform_in_cylinder(rng, size, diameter, thickness):
    rad = 0.5 * diameter * np.sqrt(rng.random(size))
    phi = 2 * np.pi * rng.random(size)
    z = thickness * (rng.random(size) - 0.5)
    return np.column_stack([rad * np.cos(phi), rad * np.sin(phi), z])


def sample_positions(density, diameter, thickness, exclusion=DEFAULT_EXCLUSION_NM, seed=None,
                     n=None, max_spins=DEFAULT_MAX_SPINS, max_tries=10_000):
    """Poisson positions in a cylinder (axis along z, centred at the origin).

    The spin count is drawn from ``Poisson(density * volume)`` unless ``n``
    fixes it.  Hard-sphere exclusion is enforced by sequential rejection.
    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    volume = np.pi * (diameter / 2) ** 2 * thickness
    count = int(n) if n is not None else int(rng.poisson(density * volume))
    if count > max_spins:
        warnings.warn(f"{count} spins exceed the exact-simulation cap of {max_spins}",
                      stacklevel=2)
    pts = np.empty((count, 3))
    for k in range(count):
        for _ in range(max_tries):
            p = _uniform_in_cylinder(rng, 1, diameter, thickness)[0]
            if k == 0 or exclusion <= 0 or np.min(np.linalg.norm(pts[:k] - p, axis=1)) >= exclusion:
                pts[k] = p
                break
        else:
            raise RuntimeError(
                f"rejection sampling failed after {max_tries} tries; density too high for "
                f"exclusion radius {exclusion} nm")
    return pts


def sample_disorder(n, width, distribution="gaussian", seed=None):
    """i.i.d. on-site fields (MHz); ``width`` is the std (gaussian) or HWHM (lorentzian)."""
    if not width > 0:
        raise ValueError("disorder width must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if distribution == "gaussian":
        return width * rng.standard_normal(n)
    if distribution == "lorentzian":
        return width * rng.standard_cauchy(n)
    raise ValueError(f"unknown disorder distribution {distribution!r}")


def default_disorder_width(density, couplings_trace=8.0, c=NVConstants()):
    """100 x (J0 rho) in MHz, J0 = J_dip * trace / 3."""
    return 100 * abs(c.J_dipole * couplings_trace / 3) * density


def _axes_angle_ok(B_dir, groups, parallel):
    for g in np.unique(groups):
        d = abs(np.dot(B_dir, ORIENTATIONS[g]))
        if parallel and abs(d - 1) > PERPENDICULAR_TOL:
            return False
        if not parallel and d > PERPENDICULAR_TOL:
            return False
    return True


def coupling_matrix(geom, c=NVConstants()):
    """Pair couplings ``J_ij = -J_dip A(r_ij) / r_ij^3`` (MHz) plus shared g's.

    The field must be perpendicular to every participating orientation
    group (dressed encoding, g from the dressed engine at ``B_mag``) or
    parallel to all of them (on-axis encoding, anisotropy about the NV
    axis).  Group labels never enter the pair coupling itself.
    """
    if _axes_angle_ok(geom.B_dir, geom.group, parallel=False):
        g = effective_couplings(geom.B_mag, c)
        encoding = "perpendicular"
    elif _axes_angle_ok(geom.B_dir, geom.group, parallel=True):
        g = onaxis_couplings(c)
        encoding = "onaxis"
    else:
        raise ValueError("field is neither perpendicular nor parallel to the participating groups")
    pos = geom.positions
    n = geom.n
    J = np.zeros((n, n))
    if n > 1:
        iu = np.triu_indices(n, 1)
        d = pos[iu[1]] - pos[iu[0]]
        r = np.linalg.norm(d, axis=1)
        J[iu] = -c.J_dipole * anisotropy(geom.B_dir, d) / r**3
        J = J + J.T
    return CouplingMatrix(J=J, g_xy=g.g_xy, g_zz=g.g_zz, encoding=encoding,
                          meta={"B_mag": geom.B_mag, "trace": g.trace})


def build_geometry(configuration, density, diameter, thickness, B_mag=None, n=None,
                   exclusion=DEFAULT_EXCLUSION_NM, disorder_width=None,
                   disorder_distribution="gaussian", seed=0, c=NVConstants(),
                   max_spins=DEFAULT_MAX_SPINS):
    """Sample a full geometry for one of the three field configurations.

    Spin groups are assigned alternately when two groups participate.  Two
    independent child streams of ``seed`` drive positions and disorder.
    """
    from .dressed import su2_field

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    pos_ss, dis_ss = ss.spawn(2)
    pos = sample_positions(density, diameter, thickness, exclusion, np.random.default_rng(pos_ss),
                           n=n, max_spins=max_spins)
    count = pos.shape[0]
    if configuration == "perp_two_group":
        groups = np.arange(count) % 2
    else:
        groups = np.zeros(count, dtype=int)
    B_dir = field_direction(configuration)
    if B_mag is None:
        B_mag = 0.0 if configuration == "onaxis" else su2_field(c)
    h = None
    if disorder_width is not None:
        h = sample_disorder(count, disorder_width, disorder_distribution,
                            np.random.default_rng(dis_ss))
    return EnsembleGeometry(positions=pos, group=groups, B_dir=B_dir, B_mag=float(B_mag), h=h,
                            seed=None if isinstance(seed, np.random.SeedSequence) else seed,
                            diameter=diameter, thickness=thickness, exclusion=exclusion)


def write_geometry_csv(geom, path):
    """One row per spin: x_nm, y_nm, z_nm, group, h_MHz."""
    h = geom.h if geom.h is not None else np.zeros(geom.n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GEOMETRY_COLUMNS)
        for p, g, hv in zip(geom.positions, geom.group, h):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), int(g),
                        repr(float(hv))])


def read_geometry_csv(path, B_dir, B_mag=0.0):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows:
        missing = [c for c in GEOMETRY_COLUMNS if c not in rows[0]]
        if missing:
            raise ValueError(f"{Path(path).name}: missing column(s) {', '.join(missing)}")
    pos = np.array([[float(r["x_nm"]), float(r["y_nm"]), float(r["z_nm"])] for r in rows])
    return EnsembleGeometry(positions=pos.reshape(-1, 3),
                            group=np.array([int(r["group"]) for r in rows], dtype=int),
                            B_dir=B_dir, B_mag=B_mag,
                            h=np.array([float(r["h_MHz"]) for r in rows]))
