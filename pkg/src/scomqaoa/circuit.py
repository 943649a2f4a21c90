"""Layered symmetry-conserving circuit ansatz.

Every layer applies one sublayer per Hamiltonian term group (nn, then ons, then
nnn).  A sublayer exponentiates each generator of its group with its own angle;
groups whose terms do not commute are Trotterized.  The circuit is compiled
once into a flat gate program consumed by the amplitude kernels.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from scomqaoa import _kernels
from scomqaoa.model import HamiltonianSpec, TermGroup, ordered_groups
from scomqaoa.operators import PauliString, generator_preserves
from scomqaoa.statevector import PauliSum, State, charge_expectation, half_chain_entropy

DEFAULT_MEMORY_CAP = 1 << 30  # bytes of cached intermediate states
ANGLES_SCHEMA = "scomqaoa.angles/1"


class MemoryBudgetExceeded(MemoryError):
    """Caching every intermediate state would exceed the configured cap."""


class Sublayer(NamedTuple):
    layer: int
    label: str
    gate_start: int
    gate_stop: int


def _schedule(group: TermGroup, order: int) -> list[tuple[int, float]]:
    """(generator index, angle weight) pairs in application order."""
    n = group.n_generators
    if group.intra_commuting or order == 1:
        return [(j, 1.0) for j in range(n)]
    if order != 2:
        raise ValueError(f"Trotter order must be 1 or 2, got {order}")
    return [(j, 0.5) for j in range(n)] + [(j, 0.5) for j in reversed(range(n))]


def trotter_sublayer(group: TermGroup, thetas: Sequence[float], order: int = 2) -> list[tuple[PauliString, float]]:
    """Gate sequence ``[(string, angle), ...]`` realising one sublayer.

    Order 1 applies generators in ascending order at full angle; order 2
    applies them ascending at half angle, then descending at half angle.
    Commuting groups always get the plain product.
    """
    if len(thetas) != group.n_generators:
        raise ValueError(f"group {group.label} needs {group.n_generators} angles, got {len(thetas)}")
    return [(k, w * thetas[j]) for j, w in _schedule(group, order) for k in group.generator_terms(j)]


@dataclass(frozen=True, eq=False)
class GateProgram:
    xm: np.ndarray
    zm: np.ndarray
    ny: np.ndarray
    coef: np.ndarray
    param: np.ndarray
    weight: np.ndarray
    # CSR map parameter -> its gates, ascending
    pptr: np.ndarray
    pidx: np.ndarray

    def __len__(self) -> int:
        return len(self.xm)

    @property
    def first_gate(self) -> np.ndarray:
        return self.pidx[self.pptr[:-1]]


class Ansatz:
    """``N``-layer circuit built from the term groups of ``spec``.

    Args:
        spec: Hamiltonian whose groups generate the sublayers.
        layers: Number of layers ``N``.
        trotter_order: Order used for groups with non-commuting terms.
        tied: Share one angle across all generators of a sublayer
            (translation-invariant variant).
    """

    def __init__(self, spec: HamiltonianSpec, layers: int, trotter_order: int = 2, tied: bool = False):
        if layers < 1:
            raise ValueError(f"need at least one layer, got {layers}")
        if not spec.groups:
            raise ValueError("empty Hamiltonian spec")
        if trotter_order not in (1, 2):
            raise ValueError(f"Trotter order must be 1 or 2, got {trotter_order}")
        self.spec = spec
        self.N = layers
        self.tied = tied
        self.groups = ordered_groups(spec)
        self.sublayer_order = tuple(g.label for g in self.groups)
        self.trotter = {g.label: (trotter_order if not g.intra_commuting else 1) for g in self.groups}
        for Q in spec.declared_symmetries:
            for g in self.groups:
                for j in range(g.n_generators):
                    if not generator_preserves(Q, g.generator_terms(j)):
                        raise ValueError(f"group {g.label} breaks declared symmetry {Q.value}")
        self.layout: list[tuple[int, str, int | None]] = []
        for l in range(1, layers + 1):
            for g in self.groups:
                if tied:
                    self.layout.append((l, g.label, None))
                else:
                    self.layout.extend((l, g.label, j) for j in range(g.n_generators))
        self._index = {key: p for p, key in enumerate(self.layout)}
        self.program, self.sublayers = self._compile()
        self._hamiltonian = PauliSum.from_spec(spec)

    @property
    def P(self) -> int:
        return len(self.layout)

    @property
    def L(self) -> int:
        return self.spec.L

    def index(self, layer: int, label: str, j: int | None = None) -> int:
        return self._index[(layer, label, None if self.tied else j)]

    def key(self, p: int) -> tuple[int, str, int | None]:
        return self.layout[p]

    def _compile(self):
        xm, zm, ny, coef, param, weight = [], [], [], [], [], []
        sublayers = []
        for l in range(1, self.N + 1):
            for g in self.groups:
                start = len(xm)
                for j, w in _schedule(g, self.trotter[g.label]):
                    p = self.index(l, g.label, j)
                    for k in g.generator_terms(j):
                        xm.append(k.xmask)
                        zm.append(k.zmask)
                        ny.append(k.ny)
                        coef.append(k.coefficient)
                        param.append(p)
                        weight.append(w)
                sublayers.append(Sublayer(l, g.label, start, len(xm)))
        param = np.array(param, dtype=np.int64)
        order = np.argsort(param, kind="stable")
        counts = np.bincount(param, minlength=self.P)
        pptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        program = GateProgram(
            np.array(xm, dtype=np.int64),
            np.array(zm, dtype=np.int64),
            np.array(ny, dtype=np.int64),
            np.array(coef, dtype=np.float64),
            param,
            np.array(weight, dtype=np.float64),
            pptr,
            order.astype(np.int64),
        )
        return program, sublayers

    def check_theta(self, theta) -> np.ndarray:
        theta = np.ascontiguousarray(getattr(theta, "values", theta), dtype=np.float64)
        if theta.shape != (self.P,):
            raise ValueError(f"expected {self.P} angles, got shape {theta.shape}")
        return theta

    def check_state(self, psi0: State) -> np.ndarray:
        if psi0.L != self.L:
            raise ValueError(f"state has L={psi0.L}, ansatz has L={self.L}")
        return psi0.amplitudes

    def run(self, amps: np.ndarray, theta: np.ndarray, g0: int = 0, g1: int | None = None) -> np.ndarray:
        """Apply gates ``g0..g1-1`` in place to raw amplitudes."""
        pr = self.program
        _kernels.run_gates(amps, pr.xm, pr.zm, pr.ny, pr.coef, pr.param, pr.weight, theta, g0,
                           len(pr) if g1 is None else g1)
        return amps

    def hamiltonian(self) -> PauliSum:
        return self._hamiltonian

    def __repr__(self) -> str:
        return f"Ansatz({self.spec.name}, L={self.L}, N={self.N}, P={self.P}, gates={len(self.program)})"


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Flat angle vector together with the layout of its ansatz."""

    ansatz: Ansatz
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", self.ansatz.check_theta(self.values).copy())

    @classmethod
    def constant(cls, ansatz: Ansatz, value: float) -> "ParameterVector":
        return cls(ansatz, np.full(ansatz.P, float(value)))

    @classmethod
    def random(cls, ansatz: Ansatz, rng: np.random.Generator, amplitude: float) -> "ParameterVector":
        return cls(ansatz, rng.uniform(-amplitude, amplitude, ansatz.P))

    def __getitem__(self, key: tuple[int, str, int | None]) -> float:
        return float(self.values[self.ansatz.index(*key)])

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def build_ansatz(spec: HamiltonianSpec, layers: int, trotter_order: int = 2, tied: bool = False) -> Ansatz:
    return Ansatz(spec, layers, trotter_order, tied)


def apply_circuit(ansatz: Ansatz, theta, psi0: State) -> State:
    """``U(theta) psi0`` with layer 1 acting first."""
    theta = ansatz.check_theta(theta)
    amps = ansatz.check_state(psi0).copy()
    return State(ansatz.L, ansatz.run(amps, theta))


@dataclass(frozen=True, eq=False)
class ForwardStates:
    """Intermediate states of one forward pass.

    ``gate_states[g]`` is the state just before gate ``g``; ``before(p)`` is
    the state just before the first gate of parameter ``p``.
    """

    ansatz: Ansatz
    gate_states: np.ndarray
    final: np.ndarray

    def before(self, p: int) -> np.ndarray:
        if p == self.ansatz.P:
            return self.final
        return self.gate_states[self.ansatz.program.first_gate[p]]

    def states(self) -> list[State]:
        """``|psi_p>`` for p = 0..P-1 followed by the final state."""
        L = self.ansatz.L
        return [State(L, self.before(p)) for p in range(self.ansatz.P + 1)]


def forward_states(ansatz: Ansatz, theta, psi0: State, memory_cap: int = DEFAULT_MEMORY_CAP) -> ForwardStates:
    """Forward evolution caching the state before every gate.

    Raises:
        MemoryBudgetExceeded: if the cache would exceed ``memory_cap`` bytes.
    """
    theta = ansatz.check_theta(theta)
    amps = ansatz.check_state(psi0)
    G = len(ansatz.program)
    need = (G + 1) * amps.nbytes
    if need > memory_cap:
        raise MemoryBudgetExceeded(f"forward cache needs {need} bytes, cap is {memory_cap}")
    pr = ansatz.program
    cache = np.empty((G, amps.shape[0]), dtype=np.complex128)
    final = _kernels.forward_cache(amps, pr.xm, pr.zm, pr.ny, pr.coef, pr.param, pr.weight, theta, cache)
    return ForwardStates(ansatz, cache, final)


class ProfileRow(NamedTuple):
    layer: int
    fidelity: float
    energy: float
    entropy: float


def fidelity(amps: np.ndarray, target: np.ndarray) -> float:
    """``|<target|psi>|``, or the norm of the projection onto a block of target rows."""
    if target.ndim == 1:
        return float(abs(np.vdot(target, amps)))
    return float(np.linalg.norm(target.conj() @ amps))


def layer_profile(ansatz: Ansatz, theta, psi0: State, target) -> list[ProfileRow]:
    """Fidelity, energy and half-chain entropy after each full layer ``l = 1..N``."""
    theta = ansatz.check_theta(theta)
    target = np.asarray(getattr(target, "amplitudes", target))
    amps = ansatz.check_state(psi0).copy()
    H = ansatz.hamiltonian()
    rows = []
    for l in range(1, ansatz.N + 1):
        subs = [s for s in ansatz.sublayers if s.layer == l]
        ansatz.run(amps, theta, subs[0].gate_start, subs[-1].gate_stop)
        S = half_chain_entropy(amps, ansatz.L) if ansatz.L % 2 == 0 else float("nan")
        rows.append(ProfileRow(l, fidelity(amps, target), H.expectation(amps), S))
    return rows


class SublayerCheck(NamedTuple):
    layer: int
    label: str
    norm: float
    charges: dict


def sublayer_diagnostics(ansatz: Ansatz, theta, psi0: State) -> list[SublayerCheck]:
    """Norm and declared-charge expectations after every sublayer."""
    theta = ansatz.check_theta(theta)
    amps = ansatz.check_state(psi0).copy()
    out = []
    for s in ansatz.sublayers:
        ansatz.run(amps, theta, s.gate_start, s.gate_stop)
        charges = {Q.value: charge_expectation(amps, Q, ansatz.L) for Q in ansatz.spec.declared_symmetries}
        out.append(SublayerCheck(s.layer, s.label, float(np.linalg.norm(amps)), charges))
    return out


def invariant_drift(ansatz: Ansatz, theta, psi0: State) -> tuple[float, float]:
    """Largest deviation of the norm from 1 and of any declared charge from its initial value."""
    start = {Q.value: charge_expectation(psi0, Q) for Q in ansatz.spec.declared_symmetries}
    norm_drift = charge_drift = 0.0
    for row in sublayer_diagnostics(ansatz, theta, psi0):
        norm_drift = max(norm_drift, abs(row.norm - 1.0))
        for name, value in row.charges.items():
            charge_drift = max(charge_drift, abs(value - start[name]))
    return norm_drift, charge_drift


def save_angles(path: str | os.PathLike, ansatz: Ansatz, theta) -> None:
    """Write angles keyed by (layer, group, generator) plus layout metadata as JSON."""
    theta = ansatz.check_theta(theta)
    doc = {
        "schema": ANGLES_SCHEMA,
        "model": ansatz.spec.name,
        "L": ansatz.L,
        "layers": ansatz.N,
        "tied": ansatz.tied,
        "sublayer_order": list(ansatz.sublayer_order),
        "trotter": ansatz.trotter,
        "P": ansatz.P,
        "angles": [
            {"p": p, "layer": l, "group": label, "term": j, "angle": float(theta[p])}
            for p, (l, label, j) in enumerate(ansatz.layout)
        ],
    }
    _atomic_write(Path(path), json.dumps(doc, indent=1))


def load_angles(path: str | os.PathLike, ansatz: Ansatz) -> np.ndarray:
    """Read angles written by :func:`save_angles` into the layout of ``ansatz``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != ANGLES_SCHEMA:
        raise ValueError(f"unknown angles schema {doc.get('schema')!r}")
    if doc["L"] != ansatz.L or doc["layers"] != ansatz.N or doc["P"] != ansatz.P:
        raise ValueError("angles file does not match the ansatz layout")
    theta = np.empty(ansatz.P)
    seen = set()
    for row in doc["angles"]:
        p = ansatz.index(row["layer"], row["group"], row["term"])
        theta[p] = row["angle"]
        seen.add(p)
    if len(seen) != ansatz.P:
        raise ValueError("angles file is missing parameters")
    return theta


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
