"""Run configuration: a JSON document mapped onto validated dataclasses.

Unknown keys are rejected at every level so typos fail before compute.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from .dressed import NVConstants
from .ensemble import DEFAULT_EXCLUSION_NM, ppm_to_density
from .manybody import ENCODINGS, PROTOCOL_KINDS

CONFIGURATIONS = ("onaxis", "perp_one_group", "perp_two_group")


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    density_ppm: float | None = None
    density_nm3: float | None = 1.6e-3
    diameter_nm: float = 16.0
    thickness_nm: float = 16.0
    n_spins: int | None = 8
    exclusion_nm: float = DEFAULT_EXCLUSION_NM
    max_spins: int = 14

    def density(self):
        if self.density_ppm is not None:
            return ppm_to_density(self.density_ppm)
        return self.density_nm3

    def validate(self):
        rho = self.density()
        if rho is None or not rho > 0:
            raise ConfigError("geometry: density must be positive")
        if self.diameter_nm <= 0 or self.thickness_nm <= 0:
            raise ConfigError("geometry: cylinder dimensions must be positive")
        if self.n_spins is not None and not 1 <= self.n_spins <= self.max_spins:
            raise ConfigError(f"geometry: n_spins must lie in [1, {self.max_spins}]")
        if self.exclusion_nm < 0:
            raise ConfigError("geometry: exclusion_nm must be non-negative")


@dataclass
class FieldConfig:
    configuration: str = "perp_two_group"
    B_gauss: float | None = None  # default: SU(2) field (perpendicular) or 0 (on-axis)

    def validate(self):
        if self.configuration not in CONFIGURATIONS:
            raise ConfigError(f"field: configuration must be one of {CONFIGURATIONS}")
        if self.B_gauss is not None and self.B_gauss < 0:
            raise ConfigError("field: B_gauss must be non-negative")


@dataclass
class ProtocolConfig:
    kind: str = "disorder_order_xx"
    t_max_us: float = 1.0
    n_times: int = 41
    time_grid_us: list | None = None
    disorder_width_MHz: float | None = None  # default: 100 x J0 rho
    disorder_distribution: str = "gaussian"
    disorder_in_hamiltonian: bool = False
    tau_wind_us: float | None = None
    tau_prime_us: float | None = None
    n_realizations: int = 200
    n_typicality_samples: int = 20
    extrinsic_T_us: float | None = None
    axis: str = "x"
    # rabi
    drive_MHz: float = 1.0
    drive_direction: list = dc_field(default_factory=lambda: [0.0, 0.0, 1.0])
    # ac magnetometry
    encoding: str = "onaxis"
    t_phase_us: float = 7.2
    B_ac_max_nT: float = 15000.0
    n_amplitudes: int = 301

    def validate(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ConfigError(f"protocol: kind must be one of {PROTOCOL_KINDS}")
        if self.time_grid_us is None and (self.t_max_us <= 0 or self.n_times < 2):
            raise ConfigError("protocol: need t_max_us > 0 and n_times >= 2")
        if self.time_grid_us is not None and np.any(np.diff(self.time_grid_us) <= 0):
            raise ConfigError("protocol: time_grid_us must be strictly increasing")
        if self.n_realizations < 1 or self.n_typicality_samples < 1:
            raise ConfigError("protocol: sample counts must be positive")
        if self.axis not in ("x", "y", "z"):
            raise ConfigError("protocol: axis must be x, y or z")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"protocol: encoding must be one of {ENCODINGS}")
        if self.disorder_distribution not in ("gaussian", "lorentzian"):
            raise ConfigError("protocol: disorder_distribution must be gaussian or lorentzian")
        if len(self.drive_direction) != 3:
            raise ConfigError("protocol: drive_direction needs three components")

    def time_grid(self):
        if self.time_grid_us is not None:
            return np.asarray(self.time_grid_us, dtype=float)
        return np.linspace(0.0, self.t_max_us, self.n_times)


@dataclass
class AnalysisConfig:
    fit: str | None = None        # stretched, powerlaw or None
    floor: float = 0.25
    window_us: list | None = None

    def validate(self):
        if self.fit not in (None, "stretched", "powerlaw"):
            raise ConfigError("analysis: fit must be stretched, powerlaw or null")
        if self.window_us is not None and len(self.window_us) != 2:
            raise ConfigError("analysis: window_us needs two entries")


@dataclass
class SenseConfig:
    t_phase_us: float = 7.2
    B_ac_max_nT: float = 15000.0
    n_amplitudes: int = 301
    contrast_amplitude: float = 1.0
    photons_per_shot: float = 1e4
    overhead_us: float = 1.0
    contrast_ratio: float = 1.0
    spot_diameter_um: float = 0.5
    layer_thickness_um: float = 0.185

    def validate(self):
        for name in ("t_phase_us", "B_ac_max_nT", "photons_per_shot", "spot_diameter_um",
                     "layer_thickness_um", "contrast_amplitude", "contrast_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"sense: {name} must be positive")
        if self.n_amplitudes < 10:
            raise ConfigError("sense: n_amplitudes must be at least 10")


@dataclass
class RunConfig:
    constants: NVConstants = dc_field(default_factory=NVConstants)
    geometry: GeometryConfig = dc_field(default_factory=GeometryConfig)
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    protocol: ProtocolConfig = dc_field(default_factory=ProtocolConfig)
    sequence: str | None = None   # builtin name or path to a sequence file
    analysis: AnalysisConfig = dc_field(default_factory=AnalysisConfig)
    sense: SenseConfig = dc_field(default_factory=SenseConfig)
    seed: int = 0
    output_dir: str | None = None

    def validate(self):
        for part in (self.geometry, self.field, self.protocol, self.analysis, self.sense):
            part.validate()
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


_SECTIONS = {"constants": NVConstants, "geometry": GeometryConfig, "field": FieldConfig,
             "protocol": ProtocolConfig, "analysis": AnalysisConfig, "sense": SenseConfig}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs).validate()


def load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
