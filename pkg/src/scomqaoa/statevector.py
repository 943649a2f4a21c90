"""Dense amplitude-vector engine.

States are plain ``complex128`` vectors of length ``2**L`` wrapped in
:class:`State`; operations return new states and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from scomqaoa import _kernels
from scomqaoa.model import HamiltonianSpec
from scomqaoa.operators import PauliString, SymmetryCharge

MAX_SITES = 16
IMAG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class State:
    L: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.L,):
            raise ValueError(f"expected {2**self.L} amplitudes for L={self.L}, got shape {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "State":
        return State(self.L, self.amplitudes.copy())


def _sites_for(L: int):
    if not 1 <= L <= MAX_SITES:
        raise ValueError(f"L must be in [1, {MAX_SITES}], got {L}")


def product_state(L: int, flips: Iterable[int] = ()) -> State:
    """``prod_{j in flips} X_j |up...up>``."""
    _sites_for(L)
    flips = list(flips)
    if len(set(flips)) != len(flips):
        raise ValueError(f"flip sites must be distinct, got {flips}")
    index = 0
    for j in flips:
        if not 0 <= j < L:
            raise ValueError(f"flip site {j} outside [0, {L})")
        index |= 1 << j
    amps = np.zeros(2**L, dtype=np.complex128)
    amps[index] = 1.0
    return State(L, amps)


def _check_fits(psi: State, k: PauliString):
    if k.window[1] >= psi.L:
        raise ValueError(f"term {k} does not fit in {psi.L} sites")


def apply_generator_exp(psi: State, k: PauliString, theta: float) -> State:
    """``exp(-i theta k) psi``; the coefficient of ``k`` is part of the rotation angle."""
    _check_fits(psi, k)
    out = psi.amplitudes.copy()
    a = theta * k.coefficient
    _kernels.rotate(out, k.xmask, k.zmask, k.ny, np.cos(a), np.sin(a))
    return State(psi.L, out)


def apply_pauli(psi: State, k: PauliString) -> State:
    """``k psi`` including the real coefficient."""
    _check_fits(psi, k)
    out = np.empty_like(psi.amplitudes)
    _kernels.apply_pauli(psi.amplitudes, out, k.xmask, k.zmask, k.ny, k.coefficient)
    return State(psi.L, out)


def overlap(psi: State, phi: State) -> complex:
    """``<phi|psi>``; the fidelity is its modulus."""
    if psi.L != phi.L:
        raise ValueError(f"size mismatch: L={psi.L} vs L={phi.L}")
    return complex(np.vdot(phi.amplitudes, psi.amplitudes))


class PauliSum:
    """Packed Pauli-string list for fast ``H psi`` products."""

    def __init__(self, terms: Sequence[PauliString], L: int):
        for k in terms:
            if k.window[1] >= L:
                raise ValueError(f"term {k} does not fit in {L} sites")
        self.L = L
        self.xm = np.array([k.xmask for k in terms], dtype=np.int64)
        self.zm = np.array([k.zmask for k in terms], dtype=np.int64)
        self.ny = np.array([k.ny for k in terms], dtype=np.int64)
        self.coef = np.array([k.coefficient for k in terms], dtype=np.float64)

    @classmethod
    def from_spec(cls, spec: HamiltonianSpec) -> "PauliSum":
        return cls(spec.terms, spec.L)

    def apply(self, amps: np.ndarray) -> np.ndarray:
        out = np.empty_like(amps)
        _kernels.pauli_sum_apply(amps, out, self.xm, self.zm, self.ny, self.coef)
        return out

    def expectation(self, amps: np.ndarray) -> float:
        value = np.vdot(amps, self.apply(amps))
        if abs(value.imag) > IMAG_TOL:
            raise ArithmeticError(f"expectation has imaginary residue {value.imag:.3e}")
        return float(value.real)


def expectation(psi: State, spec: HamiltonianSpec | PauliSum) -> float:
    """``<psi|H|psi>`` summed term by term."""
    H = spec if isinstance(spec, PauliSum) else PauliSum.from_spec(spec)
    if H.L != psi.L:
        raise ValueError(f"size mismatch: spec L={H.L}, state L={psi.L}")
    return H.expectation(psi.amplitudes)


def charge_expectation(psi: State | np.ndarray, Q: SymmetryCharge, L: int | None = None) -> float:
    amps = psi.amplitudes if isinstance(psi, State) else psi
    L = psi.L if isinstance(psi, State) else L
    if Q is SymmetryCharge.PRODUCT_Z:
        diag = _kernels.parity_weights(2**L)
    else:
        diag = Q.diagonal(L)
    return float(np.dot(diag, np.abs(amps) ** 2))


def schmidt_values(amps: np.ndarray, L: int, cut: int | None = None) -> np.ndarray:
    """Schmidt values across the bond after site ``cut - 1`` (default: the half-chain cut)."""
    cut = L // 2 if cut is None else cut
    # bit j <-> site j, so C-order rows index the right block (sites cut..L-1)
    m = amps.reshape(2 ** (L - cut), 2**cut)
    return np.linalg.svd(m, compute_uv=False)


def half_chain_entropy(psi: State | np.ndarray, L: int | None = None) -> float:
    """Von Neumann entropy (nats) of the left half of an even-length chain."""
    amps = psi.amplitudes if isinstance(psi, State) else psi
    L = psi.L if isinstance(psi, State) else L
    if L % 2:
        raise ValueError(f"half-chain entropy needs even L, got {L}")
    p = schmidt_values(amps, L) ** 2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))
