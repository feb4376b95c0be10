"""Dressed-state NV spin ensembles: couplings, Floquet sequences and exact dynamics."""

__version__ = "0.1.0"

from .dressed import NVConstants, effective_couplings, moment_difference, su2_field  # noqa: E402
from .manybody import ProtocolSpec, TimeSeries  # noqa: E402

__all__ = ["NVConstants", "ProtocolSpec", "TimeSeries", "effective_couplings",
           "moment_difference", "su2_field", "__version__"]
