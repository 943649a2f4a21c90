"""Exact diagonalization of the chain Hamiltonians.

Provides target eigenstates resolved by the ``prod_j Z_j`` sector, full
spectra, and a ground-state correlation-length estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from scomqaoa import _kernels
from scomqaoa.model import HamiltonianSpec, build_ising
from scomqaoa.operators import PauliString, SymmetryCharge, sparse_matrix
from scomqaoa.statevector import MAX_SITES, State

log = logging.getLogger(__name__)

DENSE_DIM_LIMIT = 1024
DEGENERACY_TOL = 1e-10
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TargetState:
    """An eigenstate embedded in the full ``2**L`` space.

    ``sector_charge`` is the ``prod Z`` eigenvalue, or ``None`` when the
    Hamiltonian does not conserve it.  ``block`` lists the in-sector indices
    sharing this energy (length 1 unless degenerate).
    """

    state: State
    energy: float
    sector_charge: int | None
    index: int
    block: tuple[int, ...] = ()

    @property
    def degenerate(self) -> bool:
        return len(self.block) > 1


def sector_indices(L: int, q: int) -> np.ndarray:
    """Basis indices with even (``q=+1``) or odd (``q=-1``) number of flipped spins."""
    if q not in (1, -1):
        raise ValueError(f"sector charge must be +1 or -1, got {q}")
    parity = _kernels.parity_weights(2**L)
    return np.flatnonzero(parity == q)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def _lowest(H, k: int):
    dim = H.shape[0]
    if dim <= DENSE_DIM_LIMIT:
        w, V = scipy.linalg.eigh(H.toarray())
        return w[:k], V[:, :k]
    v0 = np.full(dim, 1.0 / np.sqrt(dim), dtype=H.dtype)
    w, V = scipy.sparse.linalg.eigsh(H, k=k, which="SA", tol=0.0, v0=v0)
    order = np.argsort(w)
    return w[order], V[:, order]


def eigenstates(spec: HamiltonianSpec, q: int | None, k: int) -> list[TargetState]:
    """The ``k`` lowest eigenstates in sector ``q`` (``None``: full space), ascending in energy.

    Raises:
        ValueError: if ``q`` is given for a spec not conserving ``prod Z``, or
            ``k`` exceeds the sector dimension.
    """
    L = spec.L
    if L > MAX_SITES:
        raise ValueError(f"exact diagonalization limited to L <= {MAX_SITES}")
    H = sparse_matrix(spec.terms, L)
    if q is None:
        idx = np.arange(2**L)
    else:
        if not spec.conserves(SymmetryCharge.PRODUCT_Z):
            raise ValueError("sector-resolved eigenstates need a spec conserving prod Z")
        idx = sector_indices(L, q)
    dim = len(idx)
    if not 1 <= k <= dim:
        raise ValueError(f"k={k} outside [1, {dim}]")
    Hs = H[idx][:, idx]
    # extra pairs to detect a degenerate block straddling the k-th state
    kk = min(dim, k + 2) if dim > DENSE_DIM_LIMIT else dim
    if dim > DENSE_DIM_LIMIT and kk >= dim - 1:
        kk = dim - 2
    w, V = _lowest(Hs, kk)
    out = []
    for i in range(k):
        vec = np.zeros(2**L, dtype=np.complex128)
        vec[idx] = _fix_phase(V[:, i].astype(np.complex128))
        vec /= np.linalg.norm(vec)
        resid = np.linalg.norm(H @ vec - w[i] * vec)
        if resid > RESIDUAL_TOL:
            raise ArithmeticError(f"eigen-residual {resid:.2e} above {RESIDUAL_TOL}")
        block = tuple(j for j in range(len(w)) if abs(w[j] - w[i]) < DEGENERACY_TOL)
        if len(block) > 1:
            log.warning("degenerate level at index %d in sector %s: block %s", i, q, block)
        out.append(TargetState(State(L, vec), float(w[i]), q, i, block))
    return out


def degenerate_block(spec: HamiltonianSpec, target: TargetState) -> np.ndarray:
    """Orthonormal rows spanning the degenerate block of ``target`` (one row if non-degenerate)."""
    if not target.degenerate:
        return target.state.amplitudes[None, :]
    states = eigenstates(spec, target.sector_charge, max(target.block) + 1)
    return np.array([states[j].state.amplitudes for j in target.block])


def spectrum(spec: HamiltonianSpec, q: int | None, k: int) -> np.ndarray:
    """The ``k`` lowest energies in a sector."""
    return np.array([t.energy for t in eigenstates(spec, q, k)])


def _x_correlations(amps: np.ndarray, L: int):
    def x_on(sites):
        return PauliString(tuple((s, "X") for s in sites))

    def ev(k):
        out = np.empty_like(amps)
        _kernels.apply_pauli(amps, out, k.xmask, k.zmask, k.ny, 1.0)
        return float(np.vdot(amps, out).real)

    single = np.array([ev(x_on([j])) for j in range(L)])

    def connected(a, b):
        return ev(x_on([a, b])) - single[a] * single[b]

    return connected


def correlation_length(lambda_x: float, lambda_z: float, L: int, min_points: int = 3) -> float:
    """Decay length of the connected ``<X_a X_b>`` correlator in the ED ground state.

    Pairs ``(a, a + r)`` are centred on the middle of the chain and kept one
    site away from either edge.  ``xi = -1 / slope`` of a least-squares fit
    of ``ln C(r)`` against ``r``; the window is cut at the first
    non-positive (or noise-level) value.

    Raises:
        ValueError: for ``lambda_x <= 0`` or too few usable points.
    """
    if lambda_x <= 0:
        raise ValueError("correlation length needs a gapped chain (lambda_x > 0)")
    spec = build_ising(L, lambda_x, lambda_z)
    gs = eigenstates(spec, None, 1)[0]
    connected = _x_correlations(gs.state.amplitudes, L)
    rs, cs = [], []
    for r in range(1, L):
        a = (L - r) // 2
        b = a + r
        if a < 1 or b > L - 2:
            break
        c = connected(a, b)
        if c <= 1e-12:
            break
        rs.append(r)
        cs.append(c)
    if len(rs) < min_points:
        raise ValueError(f"only {len(rs)} usable correlator points for L={L}, lambda_x={lambda_x}")
    slope = np.polyfit(np.array(rs, dtype=float), np.log(cs), 1)[0]
    if slope >= 0:
        raise ValueError("correlator does not decay")
    return float(-1.0 / slope)
