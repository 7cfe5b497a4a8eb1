"""Accelerator and runtime configuration, plus the ``key = value`` config file.

Every hardware parameter, the decoder runtime knobs and the cost-table
overrides can be set from one plain-text file.  Unknown keys are an error;
the full key list is documented in the README and in ``CONFIG_KEYS`` below.
"""

import math
from dataclasses import dataclass, field, fields

from .costs import CostTable, PRIMITIVES
from .errors import ConfigurationError

KIB = 1024
MIB = 1024 * 1024


@dataclass
class AcceleratorConfig:
    """Hardware parameters; the defaults are the reference configuration."""

    frequency_hz: int = 500_000_000
    num_pes: int = 8
    mac_width: int = 8
    shared_mem_bytes: int = 512 * KIB
    model_mem_bytes: int = 1 * MIB
    hyp_mem_bytes: int = 24 * KIB
    pe_dcache_bytes: int = 24 * KIB
    pe_icache_bytes: int = 4 * KIB
    dma_bytes_per_cycle: int = 8
    cache_line_bytes: int = 64

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigurationError(f"{f.name} must be a positive integer, got {v!r}")
        if self.mac_width & (self.mac_width - 1):
            raise ConfigurationError(f"mac_width must be a power of two, got {self.mac_width}")
        return self


@dataclass
class FrontendParams:
    """Feature-extraction parameters (the usual ASR defaults)."""

    sample_rate: int = 16_000
    frame_len_ms: int = 25
    frame_shift_ms: int = 10
    n_mels: int = 80
    n_fft: int = 512
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    window: str = "hamming"

    @property
    def frame_len(self):
        return self.sample_rate * self.frame_len_ms // 1000

    @property
    def frame_shift(self):
        return self.sample_rate * self.frame_shift_ms // 1000

    def validate(self):
        if self.window not in ("hamming", "hann", "rect"):
            raise ConfigurationError(f"unknown window {self.window!r}")
        if self.n_fft < self.frame_len:
            raise ConfigurationError("n_fft must be at least the frame length in samples")
        if self.n_mels > self.n_fft // 2:
            raise ConfigurationError("n_mels must be at most n_fft/2")
        return self


@dataclass
class DecodeParams:
    """Decoder runtime knobs shared by the hypothesis unit and expansion."""

    beam_width: float = math.inf
    lm_weight: float = 1.0
    word_penalty: float = 0.0
    merge_mode: str = "max"  # or "logsumexp"
    blank_id: int = 0

    def validate(self):
        if not (self.beam_width >= 0):
            raise ValueError(f"beam width must be >= 0, got {self.beam_width}")
        if self.lm_weight < 0:
            raise ConfigurationError("lm_weight must be >= 0")
        if self.merge_mode not in ("max", "logsumexp"):
            raise ConfigurationError(f"unknown merge_mode {self.merge_mode!r}")
        return self


@dataclass
class SystemConfig:
    """Everything the config file can carry, grouped."""

    accelerator: AcceleratorConfig = field(default_factory=AcceleratorConfig)
    frontend: FrontendParams = field(default_factory=FrontendParams)
    decode: DecodeParams = field(default_factory=DecodeParams)
    costs: CostTable = field(default_factory=CostTable)

    def validate(self):
        self.accelerator.validate()
        self.frontend.validate()
        self.decode.validate()
        return self


_INT_FIELDS = {f.name for f in fields(AcceleratorConfig)} | {
    "sample_rate",
    "frame_len_ms",
    "frame_shift_ms",
    "n_mels",
    "n_fft",
}
_FLOAT_FIELDS = {"preemphasis", "log_floor", "beam_width", "lm_weight", "word_penalty"}
_STR_FIELDS = {"window", "merge_mode"}

CONFIG_KEYS = sorted(
    _INT_FIELDS | _FLOAT_FIELDS | _STR_FIELDS | {f"cost.{p}" for p in PRIMITIVES}
)


def _parse_scalar(key, raw):
    if key in _STR_FIELDS:
        return raw
    try:
        if key in _FLOAT_FIELDS:
            if raw in ("inf", "+inf", "infinity"):
                return math.inf
            return float(raw)
        return int(raw, 0)
    except ValueError as e:
        raise ConfigurationError(f"bad value for {key!r}: {raw!r}") from e


def parse_config(text):
    """Parse ``key = value`` lines ('#' comments) into a SystemConfig."""

    cfg = SystemConfig()
    cost_overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key.startswith("cost."):
            prim = key[len("cost."):]
            if prim not in PRIMITIVES:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
            cost_overrides[prim] = _parse_scalar(key, raw)
        elif key in {f.name for f in fields(AcceleratorConfig)}:
            setattr(cfg.accelerator, key, _parse_scalar(key, raw))
        elif key in {f.name for f in fields(FrontendParams)}:
            setattr(cfg.frontend, key, _parse_scalar(key, raw))
        elif key in {f.name for f in fields(DecodeParams)} - {"blank_id"}:
            setattr(cfg.decode, key, _parse_scalar(key, raw))
        else:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
    if cost_overrides:
        try:
            cfg.costs = cfg.costs.with_overrides(cost_overrides)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
    return cfg.validate()


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    """Render a SystemConfig back into config-file text."""

    lines = []
    for section in (cfg.accelerator, cfg.frontend, cfg.decode):
        for f in fields(section):
            if f.name == "blank_id":
                continue
            lines.append(f"{f.name} = {getattr(section, f.name)}")
    default = CostTable()
    for p in PRIMITIVES:
        if getattr(cfg.costs, p) != getattr(default, p):
            lines.append(f"cost.{p} = {getattr(cfg.costs, p)}")
    return "\n".join(lines) + "\n"
