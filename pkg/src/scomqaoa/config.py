"""Run configuration for the experiment harness.

A configuration is assembled from defaults, an optional JSON file and
command-line overrides, in increasing order of precedence, and validated
against the model builders before any compute starts.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from scomqaoa.model import Grouping, HamiltonianSpec, build_ising, build_tci, build_xxz
from scomqaoa.operators import SymmetryCharge
from scomqaoa.qng import CostKind, OptimizerConfig
from scomqaoa.statevector import MAX_SITES

MODELS = ("ising", "tci", "xxz")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _int_list(value, name: str) -> list[int]:
    """Accept ``5``, ``[4, 6]``, ``"4,6"`` or an inclusive range ``"1-6"``."""
    if isinstance(value, str):
        out = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            try:
                if sep:
                    out.extend(range(int(lo), int(hi) + 1))
                else:
                    out.append(int(part))
            except ValueError:
                raise ConfigError(f"{name}: cannot parse {value!r}") from None
        value = out
    elif isinstance(value, (int, float)):
        value = [value]
    try:
        out = [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected integers, got {value!r}") from None
    if not out:
        raise ConfigError(f"{name}: empty list")
    return out


def _float_list(value, name: str) -> list[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    elif isinstance(value, (int, float)):
        value = [value]
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected numbers, got {value!r}") from None
    if not out or not all(math.isfinite(v) for v in out):
        raise ConfigError(f"{name}: expected finite numbers, got {value!r}")
    return out


def _sector(value) -> int | None:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("none", "auto", "")):
        return None
    try:
        q = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"sector must be +1, -1 or none, got {value!r}") from None
    if q not in (1, -1):
        raise ConfigError(f"sector must be +1, -1 or none, got {value!r}")
    return q


@dataclass
class RunConfig:
    """Everything needed to reproduce one harness invocation.

    ``size``, ``layers`` and ``lambda_x`` are lists so the same object drives
    single runs (one entry) and sweeps (several entries).  ``sector=None``
    selects ``q=+1`` for models conserving ``prod Z`` and the full space
    otherwise.  ``tied=True`` shares one angle per sublayer (translation-invariant
    variant).  ``restart="auto"`` retries runs targeting excited states
    from random angles when the deterministic start fails.
    """

    model: str = "ising"
    size: list[int] = field(default_factory=lambda: [8])
    lambda_x: list[float] = field(default_factory=lambda: [0.0])
    lambda_z: float = 1.0
    lambda_zxx: float = 0.428
    gamma: float = 0.0
    grouping: str = Grouping.BY_PAULI.value
    sector: int | None = None
    state_index: int = 0
    layers: list[int] = field(default_factory=lambda: [4])
    eta: float = 0.25
    epsilon: float = 0.01
    cutoff: float = 0.99
    max_iters: int = 500
    init_angle: float = 0.01
    cost: str = CostKind.OVERLAP.value
    restart: str = "auto"
    restart_amplitude: float = 0.1
    restarts: int = 3
    trotter_order: int = 2
    tied: bool = False
    seed: int = 0
    k: int = 4
    until_converged: bool = False
    jobs: int = 1
    out: str = "runs"

    def __post_init__(self):
        self.size = _int_list(self.size, "size")
        self.layers = _int_list(self.layers, "layers")
        self.lambda_x = _float_list(self.lambda_x, "lambda_x")
        self.sector = _sector(self.sector)

    @classmethod
    def from_sources(cls, file: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        """Defaults, then the JSON ``file``, then non-``None`` ``overrides``."""
        values: dict[str, Any] = {}
        if file is not None:
            try:
                doc = json.loads(Path(file).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config file {file}: {exc}") from None
            if not isinstance(doc, dict):
                raise ConfigError("config file must hold a JSON object")
            values.update(doc)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            cfg = cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Check every field and build each requested model once.

        Raises:
            ConfigError: on the first inconsistency found.
        """
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if any(not 2 <= L <= MAX_SITES for L in self.size):
            raise ConfigError(f"size must lie in [2, {MAX_SITES}], got {self.size}")
        if any(N < 1 for N in self.layers):
            raise ConfigError(f"layers must be positive, got {self.layers}")
        if self.state_index < 0:
            raise ConfigError("state index must be non-negative")
        if self.restart not in ("auto", "none", "random"):
            raise ConfigError(f"restart must be auto, none or random, got {self.restart!r}")
        if self.restarts < 0 or self.jobs < 1 or self.k < 1:
            raise ConfigError("restarts must be >= 0, jobs and k >= 1")
        if self.trotter_order not in (1, 2):
            raise ConfigError(f"trotter order must be 1 or 2, got {self.trotter_order}")
        try:
            Grouping(self.grouping)
            CostKind(self.cost)
            self.optimizer(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for L in self.size:
            for lx in self.lambda_x:
                spec = self.build(L, lx)
                if self.sector is not None and not spec.conserves(SymmetryCharge.PRODUCT_Z):
                    raise ConfigError(f"{spec.name} does not conserve prod Z; use sector none")

    def build(self, L: int | None = None, lambda_x: float | None = None) -> HamiltonianSpec:
        L = self.size[0] if L is None else L
        lambda_x = self.lambda_x[0] if lambda_x is None else lambda_x
        try:
            if self.model == "ising":
                return build_ising(L, lambda_x, self.lambda_z)
            if self.model == "tci":
                return build_tci(L, self.lambda_z, self.lambda_zxx)
            return build_xxz(L, self.gamma, self.grouping)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sector_for(self, spec: HamiltonianSpec) -> int | None:
        if self.sector is not None:
            return self.sector
        return 1 if spec.conserves(SymmetryCharge.PRODUCT_Z) else None

    def optimizer(self, attempt: int = 0) -> OptimizerConfig:
        """Optimizer settings; attempt ``a > 0`` is a random restart seeded with ``seed + a``."""
        random = self.restart == "random" or attempt > 0
        return OptimizerConfig(
            eta=self.eta,
            epsilon=self.epsilon,
            fidelity_cutoff=self.cutoff,
            max_iters=self.max_iters,
            init_angle=self.init_angle,
            restart="random" if random else "none",
            seed=self.seed + attempt,
            restart_amplitude=self.restart_amplitude,
            cost=self.cost,
        )

    def attempts(self) -> int:
        """Optimizer runs allowed per preparation."""
        if self.restart == "auto" and self.state_index > 0:
            return 1 + self.restarts
        return 1

    def single(self, name: str, values: list):
        if len(values) != 1:
            raise ConfigError(f"this command takes a single {name}, got {values}")
        return values[0]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
