"""Z-Bus fixed-point load flow.

The constant-impedance part of the loads is folded into the matrix, so each
iteration only re-evaluates the constant-power and constant-current
injections and applies one solve with the factorization computed up front.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import EPSILON_MODES, RegulatorSpec, TransformerSpec, regulator_internal_voltage
from .errors import DivergenceError, FeederError, SingularMatrixError
from .loads import V_MIN, LoadAdmittance, assemble_YL, bus_injections
from .topology import Feeder, PhaseIndexMap, build_index
from .ybus import YBusPartition, assemble

log = logging.getLogger(__name__)

V_MAX = 10.0
PIVOT_RTOL = 1e-14


def regularize(feeder: Feeder, relative: float, mode: str = "resistive") -> Feeder:
    """Copy of ``feeder`` with every transformer regularised at ``relative * |y_t|``."""
    if mode not in EPSILON_MODES:
        raise FeederError(f"epsilon mode must be one of {EPSILON_MODES}, got {mode!r}")
    edges = []
    for edge in feeder.edges:
        if isinstance(edge.element, TransformerSpec):
            edge = replace(edge, element=edge.element.regularized(relative, mode))
        edges.append(edge)
    return replace(feeder, edges=tuple(edges))


class Factorization:
    """Sparse LU of ``Y + Y_L`` reused for every iteration.

    ``pivot_ratio`` is the smallest over the largest absolute pivot of U; a
    value below ``PIVOT_RTOL`` is treated as numerical singularity.
    """

    def __init__(self, matrix, hint: str = "") -> None:
        csc = sp.csc_matrix(matrix, dtype=complex)
        if csc.shape[0] != csc.shape[1]:
            raise SingularMatrixError("matrix is not square")
        self.size = csc.shape[0]
        cause = hint or "an unregularized delta winding or a phase disconnected from the slack"
        try:
            self._lu = spla.splu(csc)
        except RuntimeError as exc:
            raise SingularMatrixError(f"matrix is exactly singular ({exc}); likely cause: {cause}") from exc
        pivots = np.abs(self._lu.U.diagonal())
        self.pivot_ratio = float(pivots.min() / pivots.max()) if pivots.size else 1.0
        # Growth of U relative to the input entries.
        self.pivot_growth = float(np.abs(self._lu.U.data).max() / max(np.abs(csc.data).max(), 1e-300)) if csc.nnz else 1.0
        if not np.isfinite(self.pivot_ratio) or self.pivot_ratio < PIVOT_RTOL:
            raise SingularMatrixError(
                f"matrix is numerically singular (pivot ratio {self.pivot_ratio:.3g}); likely cause: {cause}"
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=complex))


def factorize(matrix, hint: str = "") -> Factorization:
    """LU-factor a square complex matrix, raising ``SingularMatrixError`` when singular."""
    return Factorization(matrix, hint)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls. ``epsilon`` is relative to each transformer's ``|y_t|``;
    ``None`` keeps whatever regularisation the feeder already carries."""

    tol: float = 1e-9
    max_iter: int = 100
    epsilon: float | None = 1e-6
    epsilon_mode: str = "resistive"
    v_slack: np.ndarray | None = None
    start: np.ndarray | None = None
    residual_tol: float = 1e-8

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise FeederError("tol must be positive")
        if self.max_iter < 1:
            raise FeederError("max_iter must be at least 1")
        if self.epsilon_mode not in EPSILON_MODES:
            raise FeederError(f"epsilon mode must be one of {EPSILON_MODES}")


@dataclass(frozen=True, eq=False)
class Network:
    """A feeder assembled for solving: index, Y partition, load admittance and slack voltage."""

    feeder: Feeder
    index: PhaseIndexMap
    ybus: YBusPartition
    loads: LoadAdmittance
    v_slack: np.ndarray
    epsilon: float | None = None
    epsilon_mode: str = "resistive"

    @property
    def matrix(self) -> sp.csc_matrix:
        return (self.ybus.Y + self.loads.matrix).tocsc()

    def flat_start(self) -> np.ndarray:
        v = np.empty(self.index.size, dtype=complex)
        for k, (_, phase) in enumerate(self.index.inverse):
            v[k] = self.v_slack["abc".index(phase)]
        return v

    def residual(self, v: np.ndarray) -> float:
        mismatch = bus_injections(self.feeder, self.index, v) - self.matrix @ v - self.ybus.Y_NS @ self.v_slack
        return float(np.abs(mismatch).max()) if mismatch.size else 0.0

    def slack_injection(self, v: np.ndarray) -> np.ndarray:
        return self.ybus.Y_SN @ v + self.ybus.Y_SS @ self.v_slack


def build_network(feeder: Feeder, config: SolverConfig | None = None) -> Network:
    """Regularise (per ``config``), index and assemble ``feeder``."""
    config = config or SolverConfig()
    if config.epsilon is not None:
        feeder = regularize(feeder, config.epsilon, config.epsilon_mode)
    index = build_index(feeder)
    v_s = feeder.slack_voltage if config.v_slack is None else np.asarray(config.v_slack, dtype=complex)
    return Network(
        feeder=feeder,
        index=index,
        ybus=assemble(feeder, index),
        loads=assemble_YL(feeder, index),
        v_slack=v_s,
        epsilon=config.epsilon,
        epsilon_mode=config.epsilon_mode,
    )


@dataclass(frozen=True, eq=False)
class SolverResult:
    """Voltages over the J network slots plus convergence facts."""

    v: np.ndarray
    iterations: int
    residual_inf: float
    converged: bool
    i_S: np.ndarray
    network: Network
    tol: float
    last_step: float
    history: tuple[float, ...] = field(default_factory=tuple)

    @property
    def index(self) -> PhaseIndexMap:
        return self.network.index

    def bus_voltage(self, bus_id: str) -> np.ndarray:
        if bus_id == self.index.slack_id:
            return self.network.v_slack.copy()
        return self.v[self.index.bus_slices[bus_id]]


def _check_band(v: np.ndarray, iteration: int) -> None:
    mags = np.abs(v)
    if not np.all(np.isfinite(mags)):
        raise DivergenceError(f"non-finite voltage at iteration {iteration}")
    if mags.size and (mags.min() < V_MIN or mags.max() > V_MAX):
        raise DivergenceError(
            f"voltage magnitude left [{V_MIN:g}, {V_MAX:g}] pu at iteration {iteration} "
            f"(min {mags.min():.3g}, max {mags.max():.3g})"
        )


def run_iteration(network: Network, factor: Factorization, config: SolverConfig) -> SolverResult:
    """Fixed-point loop ``v <- Z (i_PQ(v) + i_I(v)) + w`` from the configured start."""
    w = -factor.solve(network.ybus.Y_NS @ network.v_slack)
    v = network.flat_start() if config.start is None else np.asarray(config.start, dtype=complex).copy()
    if v.shape != (network.index.size,):
        raise FeederError(f"start vector must have {network.index.size} entries")
    step = np.inf
    history = []
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        v_next = factor.solve(bus_injections(network.feeder, network.index, v)) + w
        _check_band(v_next, iterations)
        step = float(np.abs(v_next - v).max()) if v.size else 0.0
        history.append(step)
        v = v_next
        if step < config.tol:
            break
    res = network.residual(v)
    converged = step < config.tol and res < config.residual_tol
    if not converged:
        log.warning("Z-Bus iteration stopped after %d iterations (step %.3g, residual %.3g)", iterations, step, res)
    return SolverResult(
        v=v,
        iterations=iterations,
        residual_inf=res,
        converged=converged,
        i_S=network.slack_injection(v),
        network=network,
        tol=config.tol,
        last_step=step,
        history=tuple(history),
    )


def solve(feeder: Feeder | Network, config: SolverConfig | None = None) -> SolverResult:
    """Assemble, factor once and iterate to convergence."""
    config = config or SolverConfig()
    network = feeder if isinstance(feeder, Network) else build_network(feeder, config)
    factor = factorize(network.matrix)
    return run_iteration(network, factor, config)


def residual(model: Feeder | Network, v: np.ndarray, config: SolverConfig | None = None) -> float:
    """Infinity norm of the KCL mismatch ``i_PQ + i_I - (Y + Y_L) v - Y_NS v_S``."""
    network = model if isinstance(model, Network) else build_network(model, config)
    return network.residual(np.asarray(v, dtype=complex))


@dataclass(frozen=True)
class SweepPoint:
    epsilon: float
    max_change: float | None
    iterations: int
    residual_inf: float
    converged: bool


def epsilon_sweep(
    feeder: Feeder, epsilons, config: SolverConfig | None = None
) -> list[SweepPoint]:
    """Solve once per relative epsilon (descending) and report successive max ||v|| changes."""
    eps = [float(e) for e in epsilons]
    if any(b > a for a, b in zip(eps, eps[1:])):
        raise FeederError("epsilon list must be sorted in descending order")
    base = config or SolverConfig()
    points: list[SweepPoint] = []
    previous = None
    for e in eps:
        result = solve(feeder, replace(base, epsilon=e))
        mags = np.abs(result.v)
        change = None if previous is None else float(np.abs(mags - previous).max())
        points.append(SweepPoint(e, change, result.iterations, result.residual_inf, result.converged))
        previous = mags
    return points


def recover_regulator_internal_voltages(result: SolverResult | Network, v: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Internal-node voltage of every regulator, keyed by edge id."""
    network = result.network if isinstance(result, SolverResult) else result
    if v is None:
        if not isinstance(result, SolverResult):
            raise FeederError("a voltage vector is required")
        v = result.v
    index = network.index
    v_s = network.v_slack

    def at(bus_id: str, phases) -> np.ndarray:
        bus_phases = index.bus_phases[bus_id]
        full = v_s if bus_id == index.slack_id else v[index.bus_slices[bus_id]]
        return full[[bus_phases.index(p) for p in phases]]

    out: dict[str, np.ndarray] = {}
    for edge in network.feeder.edges:
        if isinstance(edge.element, RegulatorSpec):
            spec = edge.element
            out[edge.id] = regulator_internal_voltage(
                spec, at(edge.from_bus, spec.phases), at(edge.to_bus, spec.line.phases)
            )
    return out
