"""Spin-chain Hamiltonians decomposed into term groups.

Each group collects same-pattern terms of one locality class; each group later
becomes one sublayer of the circuit, with one angle per generator.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

from scomqaoa.operators import (
    PauliString,
    SymmetryCharge,
    generator_preserves,
    terms_commute,
)


class Locality(enum.IntEnum):
    """Locality classes, valued by their sublayer application order."""

    NN = 0
    ONS = 1
    NNN = 2


class Grouping(enum.Enum):
    BY_PAULI = "ByPauli"
    U1 = "U1"


@dataclass(frozen=True)
class TermGroup:
    """One group ``s_alpha`` of Hamiltonian terms.

    ``generators`` partitions the term indices into the units that share one
    angle; by default every term is its own generator.  Strings within one
    generator must commute (e.g. ``XX`` and ``YY`` on the same bond).
    """

    label: str
    locality: Locality
    terms: tuple[PauliString, ...]
    generators: tuple[tuple[int, ...], ...] = ()
    intra_commuting: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError(f"group {self.label!r} has no terms")
        gens = tuple(tuple(g) for g in self.generators) or tuple((i,) for i in range(len(self.terms)))
        flat = sorted(i for g in gens for i in g)
        if flat != list(range(len(self.terms))):
            raise ValueError(f"generators of {self.label!r} must partition its terms")
        for g in gens:
            for a, b in itertools.combinations(g, 2):
                if not terms_commute(self.terms[a], self.terms[b]):
                    raise ValueError(f"strings inside one generator of {self.label!r} must commute")
        object.__setattr__(self, "generators", gens)
        commuting = all(terms_commute(a, b) for a, b in itertools.combinations(self.terms, 2))
        if self.intra_commuting is None:
            object.__setattr__(self, "intra_commuting", commuting)
        elif self.intra_commuting != commuting:
            raise ValueError(f"intra_commuting={self.intra_commuting} contradicts the terms of {self.label!r}")

    def generator_terms(self, j: int) -> tuple[PauliString, ...]:
        return tuple(self.terms[i] for i in self.generators[j])

    @property
    def n_generators(self) -> int:
        return len(self.generators)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Open-boundary chain Hamiltonian as an ordered list of term groups."""

    L: int
    groups: tuple[TermGroup, ...]
    declared_symmetries: tuple[SymmetryCharge, ...] = ()
    name: str = "custom"
    boundary: str = "open"

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "declared_symmetries", tuple(self.declared_symmetries))
        labels = [g.label for g in self.groups]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate group labels {labels}")

    @property
    def terms(self) -> list[PauliString]:
        return [k for g in self.groups for k in g.terms]

    def group(self, label: str) -> TermGroup:
        for g in self.groups:
            if g.label == label:
                return g
        raise KeyError(label)

    def conserves(self, Q: SymmetryCharge) -> bool:
        return Q in self.declared_symmetries


def _check_size(L: int, minimum: int, model: str):
    if int(L) != L or L < minimum:
        raise ValueError(f"{model} needs L >= {minimum}, got {L}")


def build_ising(L: int, lambda_x: float, lambda_z: float) -> HamiltonianSpec:
    """``H = -sum X_j X_{j+1} - lambda_z sum Z_j - lambda_x sum X_j`` (open chain).

    Groups with zero coupling are dropped so the circuit has no dead angles.
    """
    _check_size(L, 2, "ising")
    groups = [TermGroup("XX", Locality.NN, [PauliString.from_letters("XX", j, -1.0) for j in range(L - 1)])]
    if lambda_z != 0.0:
        groups.append(TermGroup("Z", Locality.ONS, [PauliString.from_letters("Z", j, -lambda_z) for j in range(L)]))
    if lambda_x != 0.0:
        groups.append(TermGroup("X", Locality.ONS, [PauliString.from_letters("X", j, -lambda_x) for j in range(L)]))
    symmetries = (SymmetryCharge.PRODUCT_Z,) if lambda_x == 0.0 else ()
    return HamiltonianSpec(L, tuple(groups), symmetries, name="ising")


def build_tci(L: int, lambda_z: float, lambda_zxx: float) -> HamiltonianSpec:
    """Ising chain plus the three-body ``lambda_zxx (X X Z + Z X X)`` perturbation."""
    _check_size(L, 3, "tci")
    groups = [
        TermGroup("XX", Locality.NN, [PauliString.from_letters("XX", j, -1.0) for j in range(L - 1)]),
    ]
    if lambda_z != 0.0:
        groups.append(TermGroup("Z", Locality.ONS, [PauliString.from_letters("Z", j, -lambda_z) for j in range(L)]))
    if lambda_zxx != 0.0:
        three = []
        for j in range(L - 2):
            three.append(PauliString.from_letters("XXZ", j, lambda_zxx))
            three.append(PauliString.from_letters("ZXX", j, lambda_zxx))
        groups.append(TermGroup("ZXX", Locality.NNN, three))
    return HamiltonianSpec(L, tuple(groups), (SymmetryCharge.PRODUCT_Z,), name="tci")


def build_xxz(L: int, gamma: float, grouping: Grouping | str = Grouping.BY_PAULI) -> HamiltonianSpec:
    """``H = -sum (XX + YY + cos(gamma) ZZ)`` with either Pauli-wise or U(1)-conserving groups."""
    _check_size(L, 2, "xxz")
    grouping = Grouping(grouping)
    bonds = range(L - 1)
    zz = TermGroup("ZZ", Locality.NN, [PauliString.from_letters("ZZ", j, -_cos(gamma)) for j in bonds])
    if grouping is Grouping.BY_PAULI:
        groups = [
            TermGroup("XX", Locality.NN, [PauliString.from_letters("XX", j, -1.0) for j in bonds]),
            TermGroup("YY", Locality.NN, [PauliString.from_letters("YY", j, -1.0) for j in bonds]),
            zz,
        ]
        symmetries = (SymmetryCharge.PRODUCT_Z,)
    else:
        terms = []
        for j in bonds:
            terms += [PauliString.from_letters("XX", j, -1.0), PauliString.from_letters("YY", j, -1.0)]
        hop = TermGroup("XX+YY", Locality.NN, terms, tuple((2 * j, 2 * j + 1) for j in bonds))
        groups = [hop, zz]
        symmetries = (SymmetryCharge.SUM_Z, SymmetryCharge.PRODUCT_Z)
    return HamiltonianSpec(L, tuple(groups), symmetries, name="xxz")


def _cos(gamma: float) -> float:
    c = math.cos(gamma)
    if abs(c) < 1e-12:
        raise ValueError("cos(gamma) = 0 leaves an empty ZZ group")
    return c


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_spec`; ``violations`` is empty for a valid spec."""

    term_count: int
    intra_commuting: dict[str, bool]
    conservation: dict[str, dict[str, bool]]
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def needs_trotter(self) -> list[str]:
        return [label for label, ok in self.intra_commuting.items() if not ok]


def validate_spec(spec: HamiltonianSpec) -> ValidationReport:
    """Check grouping properties and declared symmetries, collecting violations."""
    violations: list[str] = []
    commuting: dict[str, bool] = {}
    conservation: dict[str, dict[str, bool]] = {}
    for g in spec.groups:
        commuting[g.label] = all(terms_commute(a, b) for a, b in itertools.combinations(g.terms, 2))
        for k in g.terms:
            if k.window[1] >= spec.L:
                violations.append(f"group {g.label}: term {k} outside the chain")
    for Q in spec.declared_symmetries:
        status = {}
        for g in spec.groups:
            status[g.label] = all(generator_preserves(Q, g.generator_terms(j)) for j in range(g.n_generators))
            if not status[g.label]:
                violations.append(f"group {g.label} breaks declared symmetry {Q.value}")
        conservation[Q.value] = status
    return ValidationReport(len(spec.terms), commuting, conservation, violations)


def ordered_groups(spec: HamiltonianSpec) -> list[TermGroup]:
    """Groups in sublayer application order: nn, then ons, then nnn; builder order within a class."""
    return sorted(spec.groups, key=lambda g: int(g.locality))
