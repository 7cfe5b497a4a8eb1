"""Error hierarchy shared by all simulator modules.

The CLI maps these onto distinct process exit codes so that scripts can
tell bad inputs apart from bad configurations and from failures inside a
simulated decoding step.
"""


class AsrpuError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(AsrpuError):
    """Unusable external input: audio file, model file, lexicon, LM, ..."""

    exit_code = 2


class ConfigurationError(AsrpuError):
    """Invalid accelerator configuration or command sequencing."""

    exit_code = 3


class BusyError(ConfigurationError):
    """A configuration command was issued while a decoding step is running."""


class SimulationError(AsrpuError):
    """A failure inside a simulated decoding step."""

    exit_code = 4

    def __init__(self, message, kernel_index=None, thread_id=None):
        prefix = ""
        if kernel_index is not None:
            prefix = f"kernel {kernel_index}"
            if thread_id is not None:
                prefix += f", thread {thread_id}"
            prefix += ": "
        super().__init__(prefix + str(message))
        self.kernel_index = kernel_index
        self.thread_id = thread_id


class KernelFault(SimulationError):
    """A kernel thread hit a fault (domain error, bad token id, NaN score)."""


class CapacityError(SimulationError):
    """A simulated memory ran out of space (shared memory, model memory)."""
