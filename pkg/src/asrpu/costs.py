"""Cost model for the processing elements.

Kernels are written against a small set of costed primitives.  Every
primitive charges an integer number of instructions (one each by default)
and one instruction retires per cycle, so a thread's charged instruction
count is its cycle count.  Loops charge one instruction for the counter
initialization plus, per iteration, two instructions for the compare and
conditional jump and one for the counter update, on top of the body.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import KernelFault

PRIMITIVES = ("mac", "add", "mul", "load", "store", "compare", "branch", "sfu", "move")


@dataclass(frozen=True)
class CostTable:
    """Instructions charged per primitive operation (all >= 1)."""

    mac: int = 1
    add: int = 1
    mul: int = 1
    load: int = 1
    store: int = 1
    compare: int = 1
    branch: int = 1
    sfu: int = 1
    move: int = 1

    def __post_init__(self):
        for name in PRIMITIVES:
            if getattr(self, name) < 1:
                raise ValueError(f"cost.{name} must be >= 1")

    def with_overrides(self, overrides):
        unknown = set(overrides) - set(PRIMITIVES)
        if unknown:
            raise ValueError(f"unknown cost entries: {sorted(unknown)}")
        return replace(self, **overrides)

    @property
    def loop_iter_overhead(self):
        # compare + conditional jump + counter update
        return self.compare + self.branch + self.add

    @property
    def loop_init(self):
        return self.move


DEFAULT_COSTS = CostTable()


def loop_cost(iterations, body_cost, table=DEFAULT_COSTS):
    """Instructions charged by a counted loop with a fixed-cost body."""

    if iterations < 0 or body_cost < 0:
        raise ValueError("iterations and body_cost must be non-negative")
    return table.loop_init + iterations * (body_cost + table.loop_iter_overhead)


def elapsed_time(ctx, config):
    """Seconds consumed by a PE context at the configured clock."""

    return ctx.instruction_count / config.frequency_hz


@dataclass
class PEContext:
    """Per-thread instruction accounting plus the costed primitives.

    A context is owned by exactly one simulated thread.  Functional values
    are modeled at host float precision for the 32-bit float paths and
    exactly for the 8-bit integer paths.
    """

    table: CostTable = field(default_factory=lambda: DEFAULT_COSTS)
    mac_width: int = 8
    instruction_count: int = 0

    def charge(self, op, n=1):
        self.instruction_count += getattr(self.table, op) * n

    def charge_raw(self, instructions):
        """Charge a precomputed instruction count (closed-form kernels)."""

        if instructions < 0:
            raise ValueError("instruction count must be non-negative")
        self.instruction_count += int(instructions)

    def loop_overhead(self, iterations):
        """Charge the bookkeeping of a counted loop; body charges separately."""

        self.instruction_count += (
            self.table.loop_init + iterations * self.table.loop_iter_overhead
        )

    # -- costed primitives -------------------------------------------------

    def load(self, n=1):
        self.charge("load", n)

    def store(self, n=1):
        self.charge("store", n)

    def add(self, n=1):
        self.charge("add", n)

    def mul(self, n=1):
        self.charge("mul", n)

    def compare(self, n=1):
        self.charge("compare", n)

    def branch(self, n=1):
        self.charge("branch", n)

    def move(self, n=1):
        self.charge("move", n)

    def vector_mac(self, acc, a, b):
        """acc + dot(a, b) over one vector register pair; one instruction.

        ``a`` and ``b`` are int8 vectors of at most ``mac_width`` lanes; the
        accumulator is a 32-bit value modeled at host precision.  The lane
        products are summed exactly.
        """

        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if a.shape != b.shape or a.ndim != 1 or a.shape[0] > self.mac_width:
            raise ValueError("vector_mac operands must be equal-length lane vectors")
        self.charge("mac")
        return float(acc) + float(int(np.dot(a, b)))

    def sfu_eval(self, op, x):
        """Special function unit: log, exp or cos; one instruction."""

        self.charge("sfu")
        x = float(x)
        if op == "log":
            if x <= 0.0:
                raise KernelFault(f"log of non-positive value {x!r}")
            return math.log(x)
        if op == "exp":
            return math.exp(x)
        if op == "cos":
            return math.cos(x)
        raise ValueError(f"unknown SFU op {op!r}")
