"""Quantum natural gradient optimization of circuit angles.

The tangent vector of parameter ``p`` is ``|phi_p> = i d|psi>/d theta_p``; for
a parameter generating a single gate this is ``U_p^> K_p |psi_p>``.  The
Fubini-Study metric is ``g = Re(<phi_p|phi_q> - <phi_p|psi><psi|phi_q>)`` and
each step solves ``(g + eps I) dtheta = -eta grad``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.linalg import blas

from scomqaoa import _kernels
from scomqaoa.circuit import (
    DEFAULT_MEMORY_CAP,
    Ansatz,
    MemoryBudgetExceeded,
    forward_states,
)
from scomqaoa.statevector import PauliSum, State, charge_expectation, half_chain_entropy

log = logging.getLogger(__name__)


class CostKind(enum.Enum):
    OVERLAP = "Overlap"
    ENERGY = "Energy"


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STALLED = "stalled"


class NumericalFailure(ArithmeticError):
    """The regularized metric could not be factorized."""


class SectorMismatch(ValueError):
    """Initial and target states lie in different conserved-charge sectors."""


@dataclass
class OptimizerConfig:
    eta: float = 0.25
    epsilon: float = 0.01
    fidelity_cutoff: float = 0.99
    max_iters: int = 500
    init_angle: float = 0.01
    restart: str = "none"  # "none" | "random"
    seed: int = 0
    restart_amplitude: float = 0.1
    cost: CostKind = CostKind.OVERLAP
    stall_tol: float = 1e-10
    stall_patience: int = 5
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        self.cost = CostKind(self.cost)
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.fidelity_cutoff < 1.0:
            raise ValueError(f"fidelity cutoff must lie in (0, 1), got {self.fidelity_cutoff}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.restart not in ("none", "random"):
            raise ValueError(f"restart must be 'none' or 'random', got {self.restart!r}")

    def initial_angles(self, P: int) -> np.ndarray:
        if self.restart == "random":
            rng = np.random.default_rng(self.seed)
            return rng.uniform(-self.restart_amplitude, self.restart_amplitude, P)
        return np.full(P, self.init_angle)


class TraceRow(NamedTuple):
    t: int
    cost: float
    fidelity: float
    energy: float
    entropy: float
    grad_norm: float
    step_norm: float


TRACE_COLUMNS = TraceRow._fields


@dataclass
class OptimizationTrace:
    rows: list[TraceRow] = field(default_factory=list)
    status: Status = Status.MAX_ITERS
    theta: np.ndarray | None = None
    epsilon_escalations: int = 0
    max_norm_drift: float = 0.0
    max_charge_drift: float = 0.0
    min_metric_eigenvalue: float = math.inf

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def iterations(self) -> int:
        """Number of angle updates performed."""
        return sum(1 for r in self.rows if not math.isnan(r.step_norm))

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]


class Tangents(NamedTuple):
    phi: np.ndarray  # (P, 2**L), row p is |phi_p>
    psi: np.ndarray  # final state
    forward: object  # ForwardStates or None when streamed


def tangent_states(ansatz: Ansatz, theta, psi0: State, memory_cap: int = DEFAULT_MEMORY_CAP) -> Tangents:
    """All tangent vectors ``|phi_p> = i d|psi>/d theta_p`` and the final state.

    Uses the forward cache when it fits in ``memory_cap``; otherwise
    intermediate states are recomputed on the fly.
    """
    theta = ansatz.check_theta(theta)
    amps = ansatz.check_state(psi0)
    pr = ansatz.program
    phi = np.empty((ansatz.P, amps.shape[0]), dtype=np.complex128)
    try:
        fwd = forward_states(ansatz, theta, psi0, memory_cap)
    except MemoryBudgetExceeded:
        log.debug("forward cache over budget, streaming tangents")
        _kernels.tangents_streamed(amps, pr.xm, pr.zm, pr.ny, pr.coef, pr.param, pr.weight, theta,
                                   pr.pptr, pr.pidx, phi)
        psi = ansatz.run(amps.copy(), theta)
        return Tangents(phi, psi, None)
    _kernels.tangents_cached(fwd.gate_states, pr.xm, pr.zm, pr.ny, pr.coef, pr.param, pr.weight, theta,
                             pr.pptr, pr.pidx, phi)
    return Tangents(phi, fwd.final, fwd)


@dataclass(frozen=True, eq=False)
class MetricTensor:
    g: np.ndarray

    @property
    def P(self) -> int:
        return self.g.shape[0]

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.g - self.g.T))) if self.g.size else 0.0

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.g)[0]) if self.g.size else 0.0


def metric(phi: np.ndarray, psi: np.ndarray, full: bool = False) -> MetricTensor:
    """Fubini-Study metric from tangent vectors.

    By default only the upper triangle of ``Re <phi_p|phi_q>`` is formed (BLAS
    ``syrk`` on the real view) and mirrored.  ``full=True`` evaluates every
    entry independently, which is useful for checking symmetry.
    """
    v = phi.conj() @ psi  # <phi_p|psi>
    if full:
        G = phi.conj() @ phi.T - np.outer(v, v.conj())
        return MetricTensor(np.ascontiguousarray(G.real))
    P = phi.shape[0]
    real = phi.view(np.float64).reshape(P, -1)
    upper = blas.dsyrk(1.0, real.T, trans=1, lower=0)
    g = np.triu(upper) + np.triu(upper, 1).T
    g -= np.outer(v.real, v.real) + np.outer(v.imag, v.imag)
    return MetricTensor(g)


def _target_rows(target) -> np.ndarray:
    t = np.asarray(getattr(target, "amplitudes", target))
    return t[None, :] if t.ndim == 1 else t


def grad_cost(kind: CostKind | str, phi: np.ndarray, psi: np.ndarray, target=None,
              hamiltonian: PauliSum | None = None, h_psi: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the overlap cost ``-|<T|psi>|^2`` or the energy cost ``<psi|H|psi>``.

    ``target`` may be one state or a block of orthonormal rows (degenerate
    level), in which case the overlap cost is minus the squared projection.
    """
    kind = CostKind(kind)
    if kind is CostKind.ENERGY:
        if h_psi is None:
            if hamiltonian is None:
                raise ValueError("energy gradient needs the Hamiltonian")
            h_psi = hamiltonian.apply(psi)
        return -2.0 * (phi.conj() @ h_psi).imag
    if target is None:
        raise ValueError("overlap gradient needs a target state")
    T = _target_rows(target)
    a = phi @ T.conj().T  # <T_k|phi_p>, shape (P, K)
    b = psi.conj() @ T.T  # <psi|T_k>
    return -2.0 * (a @ b).imag


def qng_step(theta: np.ndarray, g: MetricTensor | np.ndarray, grad: np.ndarray, eta: float,
             epsilon: float) -> tuple[np.ndarray, float]:
    """``theta - eta (g + eps I)^-1 grad`` via a Cholesky solve.

    Returns the new angles and the regularization actually used: on a failed
    factorization ``eps`` is raised tenfold once before giving up.

    Raises:
        NumericalFailure: if the escalated system is still not positive definite.
    """
    g = g.g if isinstance(g, MetricTensor) else np.asarray(g)
    theta = np.asarray(theta, dtype=float)
    if g.shape != (theta.size, theta.size) or grad.shape != theta.shape:
        raise ValueError("dimension mismatch between angles, metric and gradient")
    eye = np.eye(theta.size)
    for eps in (epsilon, 10.0 * epsilon):
        try:
            factor = scipy.linalg.cho_factor(g + eps * eye, lower=False, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            log.warning("regularized metric not positive definite at eps=%g", eps)
            continue
        return theta - eta * scipy.linalg.cho_solve(factor, grad), eps
    raise NumericalFailure(f"metric + {10 * epsilon:g} I is not positive definite")


def _fidelity(psi: np.ndarray, T: np.ndarray) -> float:
    return float(min(1.0, np.linalg.norm(T.conj() @ psi)))


def check_sectors(ansatz: Ansatz, psi0: State, target) -> None:
    """Reject targets whose conserved charges differ from those of ``psi0``.

    Only charges the circuit conserves are checked; a mismatch means the
    fidelity is identically zero.
    """
    if target is None:
        return
    for Q in ansatz.spec.declared_symmetries:
        q0 = charge_expectation(psi0, Q)
        for row in _target_rows(target):
            qt = charge_expectation(row, Q, ansatz.L)
            if abs(q0 - qt) > 1e-8:
                raise SectorMismatch(f"initial state has <{Q.value}> = {q0:+.3f}, target has {qt:+.3f}")


def _drift(ansatz: Ansatz, fwd, psi: np.ndarray, start: dict) -> tuple[float, float]:
    # without the forward cache only the final state is available
    L = ansatz.L
    norm_drift = charge_drift = 0.0
    snapshots = [psi] if fwd is None else [fwd.gate_states[s.gate_stop] for s in ansatz.sublayers[:-1]] + [psi]
    for amps in snapshots:
        norm_drift = max(norm_drift, abs(np.linalg.norm(amps) - 1.0))
        for Q, q0 in start.items():
            charge_drift = max(charge_drift, abs(charge_expectation(amps, Q, L) - q0))
    return norm_drift, charge_drift


def optimize(ansatz: Ansatz, psi0: State, cfg: OptimizerConfig, target=None,
             theta0: np.ndarray | None = None) -> OptimizationTrace:
    """Run QNG iterations until the fidelity cutoff, ``max_iters`` or a stall.

    Args:
        ansatz: The circuit.
        psi0: Initial product state.
        cfg: Hyperparameters and stopping rules.
        target: Target state (or block of states); required for the overlap
            cost and for fidelity-based convergence.
        theta0: Optional starting angles overriding ``cfg``'s initialization.

    Raises:
        SectorMismatch: if ``psi0`` and ``target`` carry different charges.
        NumericalFailure: if the metric solve fails even after escalation.
    """
    if cfg.cost is CostKind.OVERLAP and target is None:
        raise ValueError("the overlap cost needs a target state")
    check_sectors(ansatz, psi0, target)
    T = _target_rows(target) if target is not None else None
    H = ansatz.hamiltonian()
    theta = ansatz.check_theta(cfg.initial_angles(ansatz.P) if theta0 is None else theta0).copy()
    even = ansatz.L % 2 == 0
    start = {Q: charge_expectation(psi0, Q) for Q in ansatz.spec.declared_symmetries}
    trace = OptimizationTrace()
    small_steps = 0
    for t in range(cfg.max_iters + 1):
        tan = tangent_states(ansatz, theta, psi0, cfg.memory_cap)
        psi = tan.psi
        nd, cd = _drift(ansatz, tan.forward, psi, start)
        trace.max_norm_drift = max(trace.max_norm_drift, nd)
        trace.max_charge_drift = max(trace.max_charge_drift, cd)
        h_psi = H.apply(psi)
        energy = float(np.vdot(psi, h_psi).real)
        fid = _fidelity(psi, T) if T is not None else float("nan")
        cost = -fid**2 if cfg.cost is CostKind.OVERLAP else energy
        entropy = half_chain_entropy(psi, ansatz.L) if even else float("nan")
        if T is not None and fid >= cfg.fidelity_cutoff:
            trace.rows.append(TraceRow(t, cost, fid, energy, entropy, float("nan"), float("nan")))
            trace.status = Status.CONVERGED
            break
        if t == cfg.max_iters:
            trace.rows.append(TraceRow(t, cost, fid, energy, entropy, float("nan"), float("nan")))
            trace.status = Status.MAX_ITERS
            break
        grad = grad_cost(cfg.cost, tan.phi, psi, T, h_psi=h_psi)
        g = metric(tan.phi, psi)
        trace.min_metric_eigenvalue = min(trace.min_metric_eigenvalue, g.min_eigenvalue())
        new, eps_used = qng_step(theta, g, grad, cfg.eta, cfg.epsilon)
        if eps_used != cfg.epsilon:
            trace.epsilon_escalations += 1
        step = float(np.linalg.norm(new - theta))
        trace.rows.append(TraceRow(t, cost, fid, energy, entropy, float(np.linalg.norm(grad)), step))
        theta = new
        small_steps = small_steps + 1 if step < cfg.stall_tol else 0
        if small_steps >= cfg.stall_patience:
            trace.status = Status.STALLED
            break
    trace.theta = theta
    return trace
