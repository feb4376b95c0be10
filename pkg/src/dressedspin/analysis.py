"""Curve fitting and sensitivity metrics for simulated or measured decays.

Every fitter takes a :class:`~dressedspin.manybody.TimeSeries` and returns
plain dataclasses that serialize to JSON.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .dressed import NVConstants
from .manybody import ENCODINGS, TimeSeries, encoding_setup
from .sequences import field_ratio, toggling_frames

log = logging.getLogger(__name__)

DEFAULT_FLOOR = 0.25
BETA_STARTS = (0.3, 0.5, 0.8, 1.0)
MIN_REFERENCE = 0.05
# confocal spot diameter and NV layer thickness, micrometres
DEFAULT_SPOT_DIAMETER_UM = 0.5
DEFAULT_LAYER_THICKNESS_UM = 0.185


class FitError(RuntimeError):
    pass


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class FitResult:
    model: str
    params: dict
    uncertainties: dict
    fit_range: tuple
    residual_norm: float
    converged: bool
    n_points: int = 0

    def to_dict(self):
        return _to_jsonable(asdict(self))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


# -- normalization ------------------------------------------------------------

def normalize_extrinsic(signal, reference, min_reference=MIN_REFERENCE):
    """Divide out an extrinsic decay measured on the same (or interpolated) grid.

    Standard errors propagate to first order, i.e. relative errors add in
    quadrature.
    """
    t = signal.t
    if reference.t.shape == t.shape and np.array_equal(reference.t, t):
        ref, ref_se = reference.value, reference.stderr
    else:
        if t.min() < reference.t.min() or t.max() > reference.t.max():
            raise ValueError("reference does not cover the signal time range")
        ref = np.interp(t, reference.t, reference.value)
        ref_se = np.interp(t, reference.t, reference.stderr)
    if np.any(np.abs(ref) < min_reference):
        raise ValueError(f"reference drops below {min_reference}; ratio would amplify noise")
    val = signal.value / ref
    se = np.sqrt((signal.stderr / ref) ** 2 + (signal.value * ref_se / ref**2) ** 2)
    meta = dict(signal.metadata, normalized_by_reference=True)
    return TimeSeries(t, val, se, meta, x_label=signal.x_label)


# -- stretched exponential -----------------------------------------------------

def stretched_exponential(t, amplitude, tau, beta):
    return amplitude * np.exp(-(np.asarray(t) / tau) ** beta)


def _covariance(res, n_points):
    dof = n_points - res.x.size
    J = res.jac
    try:
        cov = np.linalg.pinv(J.T @ J)
    except np.linalg.LinAlgError:
        return np.full(res.x.size, np.inf)
    s2 = 2 * res.cost / dof if dof > 0 else np.inf
    return np.sqrt(np.clip(np.diag(cov) * s2, 0, None))


def fit_stretched_exponential(ts, floor=DEFAULT_FLOOR, betas=BETA_STARTS):
    """Least-squares ``C0 exp(-(t/tau)^beta)`` on points with ``value >= floor``.

    Multi-start over ``betas``; the lowest-cost converged fit wins.
    """
    mask = ts.value >= floor
    t, y = ts.t[mask], ts.value[mask]
    if t.size < 5:
        raise FitError(f"only {t.size} points above floor {floor}; need at least 5")
    span = t.max() - t.min()
    positive = t[t > 0]
    t_scale = positive.min() if positive.size else 1.0
    # tau start: where the data would cross 1/e, extrapolated from the last point
    y_last = np.clip(y[-1] / max(y[0], 1e-12), 1e-6, 1 - 1e-6)

    def resid(p):
        return stretched_exponential(t, p[0], p[1], p[2]) - y

    best = None
    for b0 in betas:
        tau0 = t.max() / (-np.log(y_last)) ** (1 / b0) if t.max() > 0 else span
        tau0 = max(tau0, t_scale)
        try:
            res = optimize.least_squares(resid, [max(y[0], 1e-3), tau0, b0],
                                         bounds=([0, 1e-12 * max(t_scale, 1e-12), 0.05],
                                                 [np.inf, np.inf, 5.0]),
                                         x_scale=[1.0, tau0, 1.0], xtol=1e-14, ftol=1e-14,
                                         gtol=1e-14, max_nfev=20000)
        except ValueError as exc:
            log.debug("start beta=%s failed: %s", b0, exc)
            continue
        if res.success and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise FitError("stretched-exponential fit did not converge from any start")
    unc = _covariance(best, t.size)
    names = ("amplitude", "tau", "beta")
    return FitResult(
        model="stretched",
        params=dict(zip(names, map(float, best.x))),
        uncertainties=dict(zip(names, map(float, unc))),
        fit_range=(float(t.min()), float(t.max())),
        residual_norm=float(np.linalg.norm(best.fun)),
        converged=bool(best.success),
        n_points=int(t.size),
    )


# -- power-law tail and loglog-log view --------------------------------------

def _window_mask(t, window):
    if window is None:
        return np.ones(t.size, dtype=bool)
    lo, hi = window
    return (t >= lo) & (t <= hi)


def powerlaw_tail(ts, window=None):
    """Log-log regression slope over ``window``; returns a FitResult with ``exponent``."""
    mask = _window_mask(ts.t, window) & (ts.t > 0)
    t, y = ts.t[mask], ts.value[mask]
    if t.size < 4:
        raise FitError(f"only {t.size} points in window; need at least 4")
    if np.any(y <= 0):
        raise FitError("power-law window contains non-positive values")
    reg = stats.linregress(np.log(t), np.log(y))
    resid = np.log(y) - (reg.intercept + reg.slope * np.log(t))
    return FitResult(
        model="powerlaw",
        params={"exponent": float(reg.slope), "log_prefactor": float(reg.intercept)},
        uncertainties={"exponent": float(reg.stderr), "log_prefactor": float(reg.intercept_stderr)},
        fit_range=(float(t.min()), float(t.max())),
        residual_norm=float(np.linalg.norm(resid)),
        converged=True,
        n_points=int(t.size),
    )


def loglogtransform(ts):
    """``(log t, log(-log C))`` for points with ``t > 0`` and ``0 < C < 1``."""
    ok = (ts.t > 0) & (ts.value > 0) & (ts.value < 1)
    return np.log(ts.t[ok]), np.log(-np.log(ts.value[ok]))


def loglog_slope(ts, window=None):
    """Stretching exponent from a straight-line fit in the loglog-log view."""
    mask = _window_mask(ts.t, window)
    x, y = loglogtransform(TimeSeries(ts.t[mask], ts.value[mask], ts.stderr[mask]))
    if x.size < 4:
        raise FitError(f"only {x.size} usable points in window; need at least 4")
    reg = stats.linregress(x, y)
    return FitResult(
        model="loglog",
        params={"beta": float(reg.slope), "tau": float(np.exp(-reg.intercept / reg.slope))},
        uncertainties={"beta": float(reg.stderr), "tau": float("nan")},
        fit_range=(float(np.exp(x.min())), float(np.exp(x.max()))),
        residual_norm=float(np.linalg.norm(y - reg.intercept - reg.slope * x)),
        converged=True,
        n_points=int(x.size),
    )


def effective_slope(ts, window=None):
    """Log-log slope used to compare early and late decay speed."""
    return powerlaw_tail(ts, window).params["exponent"]


# -- T2 ------------------------------------------------------------------------

@dataclass
class T2Estimate:
    T2: float                 # us
    T2_err: float
    JT2: float | None
    fit: FitResult

    def to_dict(self):
        return _to_jsonable(asdict(self))


def fit_T2(ts, J0_rho=None, floor=DEFAULT_FLOOR):
    """Time at which the fitted stretched exponential reaches 1/e.

    ``J0_rho`` (MHz) turns the result into the dimensionless ``(J0 rho) T2``.
    """
    fit = fit_stretched_exponential(ts, floor=floor)
    a, tau, beta = (fit.params[k] for k in ("amplitude", "tau", "beta"))
    arg = 1 + np.log(a)
    if arg <= 0:
        raise FitError("fitted amplitude below 1/e; T2 undefined")
    T2 = tau * arg ** (1 / beta)
    # propagate only the dominant tau uncertainty
    err = T2 * fit.uncertainties["tau"] / tau if tau > 0 else np.inf
    jt2 = None if J0_rho is None else float(J0_rho * T2)
    return T2Estimate(float(T2), float(err), jt2, fit)


# -- sensitivity -----------------------------------------------------------------

@dataclass
class ReadoutParams:
    contrast_amplitude: float = 1.0    # fringe visibility multiplying the spin contrast
    photons_per_shot: float = 1e4      # detected photons per readout
    overhead_us: float = 1.0           # initialization + readout per cycle

    def __post_init__(self):
        if self.contrast_amplitude <= 0 or self.photons_per_shot <= 0 or self.overhead_us < 0:
            raise ValueError("readout parameters must be positive")


@dataclass
class SensitivityReport:
    encoding: str
    eta: float                   # nT / sqrt(Hz)
    eta_volume: float            # nT um^{3/2} / sqrt(Hz)
    t_phase: float               # us
    detection_volume: float      # um^3
    operating_point_nT: float
    field_ratio: float           # effective-field ratio vs the reference encoding
    moment_ratio: float          # moment ratio vs the reference encoding
    contrast_ratio: float        # hardware factor, user supplied
    core_factor: float           # field_ratio * moment_ratio
    total_factor: float          # core_factor * contrast_ratio
    reference_encoding: str
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return _to_jsonable(asdict(self))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def detection_volume(diameter_um=DEFAULT_SPOT_DIAMETER_UM,
                     thickness_um=DEFAULT_LAYER_THICKNESS_UM):
    """Cylinder volume of the confocal spot in um^3."""
    return np.pi * (diameter_um / 2) ** 2 * thickness_um


def encoding_factors(encoding, c=NVConstants()):
    """(effective-field ratio, moment ratio) of an encoding relative to a bare field."""
    dmu, seq = encoding_setup(encoding, c)
    return field_ratio(toggling_frames(seq)), dmu


def sensitivity_report(contrast_curve, t_phase, readout=ReadoutParams(), encoding="onaxis",
                       reference_encoding="onaxis_droid_like", contrast_ratio=1.0,
                       diameter_um=DEFAULT_SPOT_DIAMETER_UM,
                       thickness_um=DEFAULT_LAYER_THICKNESS_UM, c=NVConstants()):
    """Shot-noise-limited sensitivity at the steepest point of a contrast-vs-field curve.

    ``eta = sigma * sqrt(T_cycle) / |dS/dB|`` with ``sigma = 1/sqrt(photons)``
    and ``S = contrast_amplitude * contrast``; ``T_cycle`` is ``t_phase``
    plus the readout overhead.  The breakdown compares ``encoding`` with
    ``reference_encoding``; the contrast ratio is a hardware input.
    """
    if encoding not in ENCODINGS or reference_encoding not in ENCODINGS:
        raise ValueError("unsupported encoding")
    B, S = contrast_curve.t, readout.contrast_amplitude * contrast_curve.value
    slope = np.gradient(S, B)
    k = int(np.argmax(np.abs(slope)))
    if not np.abs(slope[k]) > 0:
        raise FitError("contrast slope is zero everywhere; no operating point")
    sigma = 1 / np.sqrt(readout.photons_per_shot)
    t_cycle_s = (t_phase + readout.overhead_us) * 1e-6
    eta = sigma * np.sqrt(t_cycle_s) / abs(slope[k])
    vol = detection_volume(diameter_um, thickness_um)
    f_enc, m_enc = encoding_factors(encoding, c)
    f_ref, m_ref = encoding_factors(reference_encoding, c)
    fr, mr = f_enc / f_ref, m_enc / m_ref
    return SensitivityReport(
        encoding=encoding, eta=float(eta), eta_volume=float(eta * np.sqrt(vol)),
        t_phase=float(t_phase), detection_volume=float(vol), operating_point_nT=float(B[k]),
        field_ratio=float(fr), moment_ratio=float(mr), contrast_ratio=float(contrast_ratio),
        core_factor=float(fr * mr), total_factor=float(fr * mr * contrast_ratio),
        reference_encoding=reference_encoding,
        extras={"photons_per_shot": readout.photons_per_shot,
                "overhead_us": readout.overhead_us,
                "contrast_amplitude": readout.contrast_amplitude},
    )


def fit_cosine_period(x, y, period_guess):
    """Period of ``a + b cos(2 pi x / P)`` by least squares (extremum at x = 0)."""
    def model(xx, a, b, P):
        return a + b * np.cos(2 * np.pi * xx / P)
    p, cov = optimize.curve_fit(model, x, y, p0=[0.0, 1.0, period_guess])
    return float(p[2]), float(np.sqrt(max(cov[2, 2], 0.0)))


# -- plots -----------------------------------------------------------------------

def plot_fit_svg(ts, fit, path, view="linear"):
    """Data with fit overlay; ``view`` is linear, loglog or logloglog."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt keeps element ids, and hence the bytes, reproducible
    plt.rcParams["svg.hashsalt"] = "dressedspin"
    fig, ax = plt.subplots(figsize=(5, 3.6))
    if view == "logloglog":
        x, y = loglogtransform(ts)
        ax.plot(x, y, "o", ms=3, label="data")
        if fit is not None and fit.model in ("stretched", "loglog"):
            beta = fit.params["beta"]
            tau = fit.params["tau"]
            ax.plot(x, beta * (x - np.log(tau)), "-", label=f"beta={beta:.3f}")
        ax.set_xlabel("log t")
        ax.set_ylabel("log(-log C)")
    else:
        ax.errorbar(ts.t, ts.value, yerr=ts.stderr, fmt="o", ms=3, label="data")
        if fit is not None:
            tt = np.linspace(max(fit.fit_range[0], 1e-12), fit.fit_range[1], 200)
            if fit.model == "stretched":
                p = fit.params
                ax.plot(tt, stretched_exponential(tt, p["amplitude"], p["tau"], p["beta"]), "-",
                        label="stretched fit")
            elif fit.model == "powerlaw":
                p = fit.params
                ax.plot(tt, np.exp(p["log_prefactor"]) * tt ** p["exponent"], "-",
                        label=f"slope {p['exponent']:.3f}")
        if view == "loglog":
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel(ts.x_label)
        ax.set_ylabel("value")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
