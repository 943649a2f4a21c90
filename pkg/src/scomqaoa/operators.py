"""Pauli-string algebra for the spin-chain generators.

Qubit-ordering convention used throughout the package: site 0 is the leftmost
spin, basis index ``b`` stores site ``j`` in bit ``j``, and bit value 0 is
``|up>`` with ``Z|up> = +|up>``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

LETTERS = ("X", "Y", "Z")
DENSE_SITE_LIMIT = 12

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Real-weighted product of single-site Pauli letters.

    Attributes:
        support: ``((site, letter), ...)`` with strictly increasing sites.
        coefficient: Signed, nonzero real weight.
    """

    support: tuple[tuple[int, str], ...]
    coefficient: float = 1.0

    def __post_init__(self):
        support = tuple((int(s), str(a)) for s, a in self.support)
        if not support:
            raise ValueError("a PauliString needs at least one non-identity letter")
        sites = [s for s, _ in support]
        if any(s < 0 for s in sites):
            raise ValueError(f"negative site in {support}")
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError(f"sites must be strictly increasing, got {sites}")
        if any(a not in LETTERS for _, a in support):
            raise ValueError(f"letters must be X, Y or Z, got {support}")
        c = float(self.coefficient)
        if c == 0.0 or not math.isfinite(c):
            raise ValueError(f"coefficient must be finite and nonzero, got {self.coefficient}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "coefficient", c)

    @classmethod
    def from_letters(cls, letters: str, start: int, coefficient: float = 1.0) -> "PauliString":
        """Build a string on consecutive sites, e.g. ``from_letters("XXZ", 2)``."""
        return cls(tuple((start + i, a) for i, a in enumerate(letters)), coefficient)

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.support)

    @property
    def letters(self) -> str:
        return "".join(a for _, a in self.support)

    @property
    def window(self) -> tuple[int, int]:
        return self.support[0][0], self.support[-1][0]

    @property
    def xmask(self) -> int:
        return sum(1 << s for s, a in self.support if a in "XY")

    @property
    def zmask(self) -> int:
        return sum(1 << s for s, a in self.support if a in "ZY")

    @property
    def ny(self) -> int:
        return sum(1 for _, a in self.support if a == "Y")

    def scaled(self, factor: float) -> "PauliString":
        return PauliString(self.support, self.coefficient * factor)

    def label(self) -> str:
        return " ".join(f"{a}{s}" for s, a in self.support)

    def __str__(self) -> str:
        return f"{self.coefficient:+g}*{self.label()}"


class SymmetryCharge(enum.Enum):
    """Conserved charges: ``PRODUCT_Z = prod_j Z_j`` and ``SUM_Z = sum_j Z_j``."""

    PRODUCT_Z = "ProductZ"
    SUM_Z = "SumZ"

    def eigenvalues(self, L: int) -> list[int]:
        if self is SymmetryCharge.PRODUCT_Z:
            return [1, -1]
        return list(range(L, -L - 1, -2))

    def diagonal(self, L: int) -> np.ndarray:
        """Charge eigenvalue of every computational basis state."""
        b = np.arange(2**L)
        ones = np.zeros(2**L, dtype=np.int64)
        for j in range(L):
            ones += (b >> j) & 1
        if self is SymmetryCharge.PRODUCT_Z:
            return 1.0 - 2.0 * (ones & 1)
        return (L - 2 * ones).astype(float)


def terms_commute(a: PauliString, b: PauliString) -> bool:
    """True iff the strings commute: an even number of overlapping sites differ."""
    letters_b = dict(b.support)
    clashes = sum(1 for s, x in a.support if s in letters_b and letters_b[s] != x)
    return clashes % 2 == 0


def _window_matrix(strings: Sequence[PauliString], lo: int, hi: int) -> np.ndarray:
    """Dense matrix of sum(strings) restricted to sites lo..hi (site lo leftmost factor last)."""
    dim = 2 ** (hi - lo + 1)
    out = np.zeros((dim, dim), dtype=complex)
    for k in strings:
        letters = dict(k.support)
        # kron order: highest site first so that bit j of the index is site lo + j
        factors = [_PAULI[letters.get(s, "I")] for s in range(hi, lo - 1, -1)]
        out += k.coefficient * reduce(np.kron, factors)
    return out


def _charge_window(Q: SymmetryCharge, lo: int, hi: int) -> np.ndarray:
    n = hi - lo + 1
    b = np.arange(2**n)
    ones = sum((b >> j) & 1 for j in range(n))
    if Q is SymmetryCharge.PRODUCT_Z:
        return np.diag(1.0 - 2.0 * (ones & 1)).astype(complex)
    return np.diag(n - 2.0 * ones).astype(complex)


def generator_preserves(Q: SymmetryCharge, strings: Sequence[PauliString]) -> bool:
    """True iff ``[Q, sum(strings)] = 0``, checked by a dense commutator on the support window.

    Sites outside the window commute with the generator, so restricting the
    charge to the window is exact for both charge kinds.
    """
    lo = min(k.window[0] for k in strings)
    hi = max(k.window[1] for k in strings)
    K = _window_matrix(strings, lo, hi)
    Qw = _charge_window(Q, lo, hi)
    return bool(np.allclose(Qw @ K, K @ Qw, atol=1e-12, rtol=0.0))


def charge_preserved(Q: SymmetryCharge, k: PauliString) -> bool:
    """True iff ``[Q, k] = 0``."""
    if Q is SymmetryCharge.PRODUCT_Z:
        return sum(1 for _, a in k.support if a in "XY") % 2 == 0
    return generator_preserves(Q, [k])


def _check_sites(terms: Iterable[PauliString], L: int) -> list[PauliString]:
    terms = list(terms)
    for k in terms:
        if k.window[1] >= L:
            raise ValueError(f"term {k} does not fit in {L} sites")
    return terms


def _coo(terms: Sequence[PauliString], L: int):
    n = 2**L
    b = np.arange(n, dtype=np.int64)
    rows, cols, vals = [], [], []
    for k in terms:
        z = k.zmask
        par = np.zeros(n, dtype=np.int64)
        for s in k.sites:
            if (z >> s) & 1:
                par ^= (b >> s) & 1
        phase = k.coefficient * (1j**k.ny)
        rows.append(b ^ k.xmask)
        cols.append(b)
        vals.append(phase * (1.0 - 2.0 * par))
    if not terms:
        return b[:0], b[:0], np.zeros(0, dtype=complex)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def dense_matrix(terms: Iterable[PauliString], L: int, max_sites: int = DENSE_SITE_LIMIT) -> np.ndarray:
    """Dense ``2**L x 2**L`` matrix of the sum of ``terms``.

    Raises:
        ValueError: if ``L`` exceeds ``max_sites`` or a term falls outside the chain.
    """
    if L > max_sites:
        raise ValueError(f"dense embedding limited to {max_sites} sites, got L={L}")
    terms = _check_sites(terms, L)
    rows, cols, vals = _coo(terms, L)
    out = np.zeros((2**L, 2**L), dtype=complex)
    np.add.at(out, (rows, cols), vals)
    return out


def sparse_matrix(terms: Iterable[PauliString], L: int) -> sp.csr_matrix:
    """Sparse CSR matrix of the sum of ``terms``; real dtype when no odd Y-count appears."""
    terms = _check_sites(terms, L)
    rows, cols, vals = _coo(terms, L)
    if np.all(np.abs(vals.imag) == 0.0):
        vals = vals.real
    m = sp.coo_matrix((vals, (rows, cols)), shape=(2**L, 2**L))
    m.sum_duplicates()
    return m.tocsr()
