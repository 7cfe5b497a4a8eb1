"""Functional and timing simulator of a programmable ASR accelerator.

The machine model is a pool of processing elements fed by an ASR
controller, a hypothesis unit that merges/sorts/prunes beam-search states,
a shared scratchpad for kernel ring buffers, and a model memory loaded by
DMA.  The package ships a complete streaming speech-recognition workload
for it: an MFCC frontend, a time-depth-separable int8 acoustic model, and
a CTC lexicon/LM beam decoder, all written as setup + kernel routine pairs
against the simulated command set.
"""

from .backend import NUMBA_ENABLED, backend_name
from .config import (
    AcceleratorConfig,
    DecodeParams,
    FrontendParams,
    SystemConfig,
    load_config,
    parse_config,
)
from .engine import Accelerator, StepReport
from .errors import (
    AsrpuError,
    BusyError,
    CapacityError,
    ConfigurationError,
    InputError,
    KernelFault,
    SimulationError,
)
from .runner import RunManifest, RunReport, emit_report, load_wav, run

__version__ = "0.1.0"

__all__ = [
    "Accelerator",
    "AcceleratorConfig",
    "AsrpuError",
    "BusyError",
    "CapacityError",
    "ConfigurationError",
    "DecodeParams",
    "FrontendParams",
    "InputError",
    "KernelFault",
    "NUMBA_ENABLED",
    "RunManifest",
    "RunReport",
    "SimulationError",
    "StepReport",
    "SystemConfig",
    "backend_name",
    "emit_report",
    "load_config",
    "load_wav",
    "parse_config",
    "run",
    "__version__",
]
