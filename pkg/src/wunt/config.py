"""Run configuration shared by the command-line subcommands.

Every key has a default and a one-line description; the CLI builds its
``--help`` text and its ``--<key>`` flags from :data:`KEYS`.  A JSON file
passed with ``--config`` holds a flat object of the same keys (or the same
keys nested one level, ``{"kernel": {"order": 4}}``).  Unknown keys are
rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .density import BASIS_FAMILIES, KERNEL_ORDERS, ProductKernel, ProjectionBasis, default_basis_count, default_bandwidth
from .errors import ConfigError
from .estimator import ESTIMATOR_KINDS
from .transformer import ALLOCATIONS, TRANSFORMER_KINDS

RATE_N = ("total", "control", "treated")
SMOOTHING = ("quartic", "raised_cosine")


def _choice(options):
    def conv(v):
        v = str(v)
        if v not in options:
            raise ConfigError(f"expected one of {', '.join(map(str, options))}; got {v!r}")
        return v

    return conv


def _int_choice(options):
    def conv(v):
        try:
            i = int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"expected an integer, got {v!r}") from None
        if i not in options or float(v) != i:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return i

    return conv


def _positive_float(v):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}") from None
    if not (x > 0 and math.isfinite(x)):
        raise ConfigError(f"expected a positive finite number, got {v!r}")
    return x


def _margin(v):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}") from None
    if not 0.0 <= x <= 0.1:
        raise ConfigError(f"margin must lie in [0, 0.1], got {v!r}")
    return x


def _auto(conv):
    def wrapped(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("auto", "")):
            return None
        return conv(v)

    return wrapped


def _bandwidth(v):
    # scalar, list, or comma-separated string
    if isinstance(v, str):
        parts = [p for p in v.split(",") if p.strip()]
        vals = [_positive_float(p) for p in parts]
    elif isinstance(v, (list, tuple)):
        vals = [_positive_float(p) for p in v]
    else:
        vals = [_positive_float(v)]
    if not vals:
        raise ConfigError("empty bandwidth")
    return vals[0] if len(vals) == 1 else vals


def _count(v):
    try:
        i = int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a positive integer, got {v!r}") from None
    if i < 1 or float(v) != i:
        raise ConfigError(f"expected a positive integer, got {v!r}")
    return i


@dataclass(frozen=True)
class Key:
    name: str
    default: Any
    convert: Callable[[Any], Any]
    help: str


KEYS: dict[str, Key] = {
    k.name: k
    for k in [
        Key("estimator", "kernel", _choice(ESTIMATOR_KINDS), "estimator family"),
        Key("transformer", "marginal", _choice(TRANSFORMER_KINDS), "uniform transformer"),
        Key("kernel.order", 2, _int_choice(KERNEL_ORDERS), "order of the product kernel"),
        Key("kernel.bandwidth", None, _auto(_bandwidth), "bandwidth h (scalar or per-dimension list); auto = c*n^(-2/(d+2(alpha+beta)))"),
        Key("basis.family", "cosine", _choice(BASIS_FAMILIES), "tensor basis family of the projection estimator"),
        Key("basis.count", None, _auto(_count), "number of basis functions L; auto = round(c*n^(2d/(d+2(alpha+beta))))"),
        Key("smoothness.alpha", 1.0, _positive_float, "assumed smoothness of the control response surface"),
        Key("smoothness.beta", 1.0, _positive_float, "assumed smoothness of the treated density"),
        Key("scale.c", 1.0, _positive_float, "constant multiplying the automatic h and L rules"),
        Key("rate.n", "total", _choice(RATE_N), "which sample size enters the automatic h and L rules"),
        Key("rescale.margin", 0.01, _margin, "covariates are rescaled onto [margin, 1 - margin]"),
        Key("smoothing.kernel", "quartic", _choice(SMOOTHING), "within-cell smoothing density of the adaptive transformer"),
        Key("partition.allocation", "spread", _choice(ALLOCATIONS), "where the larger groups go when a split is uneven"),
    ]
}


def _flatten(obj, prefix=""):
    out = {}
    for k, v in obj.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration values; ``explicit`` lists keys set by the user."""

    values: dict
    explicit: frozenset = frozenset()

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({k: key.default for k, key in KEYS.items()})

    def update(self, overrides: dict) -> "RunConfig":
        vals = dict(self.values)
        flat = _flatten(overrides)
        for k, v in flat.items():
            if k not in KEYS:
                raise ConfigError(f"unknown config key {k!r}; known keys: {', '.join(KEYS)}")
            try:
                vals[k] = KEYS[k].convert(v)
            except ConfigError as exc:
                raise ConfigError(f"{k}: {exc}") from None
        return RunConfig(vals, self.explicit | frozenset(flat))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.defaults().update(raw)

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return dict(self.values)

    # -- derived objects

    def rate_n(self, n: int, n0: int, n1: int) -> int:
        return {"total": n, "control": n0, "treated": n1}[self["rate.n"]]

    def product_kernel(self, n: int, d: int) -> ProductKernel:
        h = self["kernel.bandwidth"]
        if h is None:
            h = default_bandwidth(n, d, self["smoothness.alpha"], self["smoothness.beta"], self["scale.c"])
        return ProductKernel(self["kernel.order"], h)

    def projection_basis(self, n: int, d: int) -> ProjectionBasis:
        count = self["basis.count"]
        if count is None:
            count = default_basis_count(n, d, self["smoothness.alpha"], self["smoothness.beta"], self["scale.c"])
        return ProjectionBasis(count, d, self["basis.family"])

    def spec_overrides(self) -> dict:
        """Explicitly set keys as :class:`wunt.sim.EstimatorSpec` field overrides."""
        mapping = {
            "kernel.order": "order",
            "kernel.bandwidth": "bandwidth",
            "basis.count": "basis_count",
            "basis.family": "basis_family",
            "smoothness.alpha": "alpha",
            "smoothness.beta": "beta",
            "scale.c": "c",
            "rate.n": "rate_n",
            "rescale.margin": "margin",
        }
        out = {mapping[k]: self.values[k] for k in self.explicit if k in mapping}
        if "basis_count" in out:
            out["basis_grid"] = None
        return out


def describe_keys() -> str:
    """One line per key: name, default and description (used by ``--help``)."""
    width = max(map(len, KEYS))
    lines = []
    for k, key in KEYS.items():
        default = "auto" if key.default is None else key.default
        lines.append(f"  {k:<{width}}  (default: {default})  {key.help}")
    return "\n".join(lines)
