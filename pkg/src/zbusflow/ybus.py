"""Network admittance assembly, slack partition and invertibility diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .elements import (
    MUTUAL_REGULARIZED,
    REGULARIZED,
    LineSpec,
    RegulatorSpec,
    TransformerSpec,
    edge_blocks,
    svr_feedback,
)
from .errors import FeederError, SingularMatrixError
from .loads import LoadAdmittance
from .topology import PHASES, Feeder, PhaseIndexMap, build_index, check_phase_connectivity, is_connected

SYMMETRY_TOL = 1e-12
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class YBusPartition:
    """Network admittance split into the non-slack block and its slack couplings.

    ``blocks`` maps ordered (row bus, column bus) pairs of non-slack buses to
    dense blocks over the two buses' phase sets.
    """

    feeder: Feeder
    index: PhaseIndexMap
    blocks: dict[tuple[str, str], np.ndarray]
    Y_NS: np.ndarray
    Y_SN: np.ndarray
    Y_SS: np.ndarray

    @cached_property
    def Y(self) -> sp.csc_matrix:
        rows, cols, vals = [], [], []
        for (bn, bm), block in self.blocks.items():
            ri = self.index.indices(bn)
            ci = self.index.indices(bm)
            r, c = np.meshgrid(ri, ci, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(block.ravel())
        J = self.index.size
        if not rows:
            return sp.csc_matrix((J, J), dtype=complex)
        m = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(J, J)
        ).tocsc()
        m.eliminate_zeros()
        return m

    def dense(self) -> np.ndarray:
        return self.Y.toarray()

    def network_matrix(self) -> np.ndarray:
        """The full matrix with the slack block appended after the J network rows."""
        top = np.hstack([self.dense(), self.Y_NS])
        bottom = np.hstack([self.Y_SN, self.Y_SS])
        return np.vstack([top, bottom])


def assemble(feeder: Feeder, index: PhaseIndexMap | None = None) -> YBusPartition:
    """Sum edge self blocks on the diagonal and subtract mutual blocks off it."""
    if index is None:
        index = build_index(feeder)
    slack = index.slack_id
    acc: dict[tuple[str, str], np.ndarray] = {}

    def add(key: tuple[str, str], block: np.ndarray) -> None:
        if key in acc:
            acc[key] = acc[key] + block
        else:
            acc[key] = block.astype(complex, copy=True)

    for edge in feeder.edges:
        try:
            local = edge_blocks(edge.element, edge.phases)
        except (FeederError, SingularMatrixError) as exc:
            raise type(exc)(f"edge {edge.id!r}: {exc}") from exc
        n, m = edge.from_bus, edge.to_bus
        full = local.embedded(index.bus_phases[n], index.bus_phases[m])
        add((n, n), full.self_n)
        add((n, m), -full.mutual_nm)
        add((m, m), full.self_m)
        add((m, n), -full.mutual_mn)

    J = index.size
    y_ns = np.zeros((J, 3), dtype=complex)
    y_sn = np.zeros((3, J), dtype=complex)
    y_ss = acc.pop((slack, slack), np.zeros((3, 3), dtype=complex))
    for key in [k for k in acc if slack in k]:
        block = acc.pop(key)
        if key[0] == slack:
            y_sn[:, index.bus_slices[key[1]]] += block
        else:
            y_ns[index.bus_slices[key[0]], :] += block
    return YBusPartition(feeder=feeder, index=index, blocks=acc, Y_NS=y_ns, Y_SN=y_sn, Y_SS=y_ss)


# ------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class AssumptionCheck:
    """One entry of the assumption ledger."""

    name: str
    holds: bool
    required: bool
    detail: str

    @property
    def status(self) -> str:
        if self.holds:
            return "pass"
        return "FAIL" if self.required else "n/a"


@dataclass(frozen=True)
class Diagnostics:
    """Structural facts about an assembled Y and about Y + Y_L."""

    mode: str
    symmetry_defect: float
    symmetry_defect_real: float
    symmetry_defect_imag: float
    definiteness: float
    sigma_min: float
    sigma_max: float
    sigma_min_total: float
    sigma_max_total: float
    rank: int
    rank_total: int
    size: int
    assumptions: tuple[AssumptionCheck, ...] = field(default_factory=tuple)

    @property
    def condition_ratio(self) -> float:
        return self.sigma_min / self.sigma_max if self.sigma_max > 0 else 0.0

    @property
    def condition_ratio_total(self) -> float:
        return self.sigma_min_total / self.sigma_max_total if self.sigma_max_total > 0 else 0.0

    @property
    def definite(self) -> bool:
        """Re[Y] positive definite (resistive) or Im[Y] negative definite (reactive)."""
        return self.definiteness > 0 if self.mode == "resistive" else self.definiteness < 0

    @property
    def passed(self) -> bool:
        return (
            self.symmetry_defect < SYMMETRY_TOL
            and self.definite
            and self.rank_total == self.size
            and all(a.holds or not a.required for a in self.assumptions)
        )

    def report(self) -> str:
        label = "min eig Re[Y]" if self.mode == "resistive" else "max eig Im[Y]"
        lines = [
            f"size J                 {self.size}",
            f"symmetry defect        {self.symmetry_defect:.3e}",
            f"{label:<22} {self.definiteness:.6e}",
            f"sigma ratio Y          {self.condition_ratio:.3e}  (rank {self.rank}/{self.size})",
            f"sigma ratio Y+Y_L      {self.condition_ratio_total:.3e}  (rank {self.rank_total}/{self.size})",
            "assumptions:",
        ]
        for a in self.assumptions:
            lines.append(f"  {a.name:<5} {a.status:<5} {a.detail}")
        lines.append(f"structural invariants: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _numeric_rank(sigma: np.ndarray) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma > sigma[0] * RANK_RTOL))


def _min_eig_psd(matrix: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T)).min())


def _summary(items: list[str], ok: str) -> str:
    if not items:
        return ok
    more = f" (+{len(items) - 3} more)" if len(items) > 3 else ""
    return "; ".join(items[:3]) + more


def assumption_ledger(feeder: Feeder, mode: str = "resistive") -> tuple[AssumptionCheck, ...]:
    """Evaluate the element, connectivity, transformer and phase assumptions.

    Resistive mode checks the real-part conditions; reactive mode checks the
    imaginary-part variants (negative definite line admittances, no line
    shunts, reactive regularisation, inductive leakage).
    """
    reactive = mode == "reactive"
    elements: list[str] = []
    leakage: list[str] = []

    def check_line(label: str, line: LineSpec) -> None:
        zinv = line.series_admittance()
        if reactive:
            if -_min_eig_psd(-zinv.imag) >= 0:
                elements.append(f"{label}: Im[Z^-1] not negative definite")
            if np.any(line.y_shunt):
                elements.append(f"{label}: nonzero line shunt")
        else:
            if _min_eig_psd(zinv.real) <= 0:
                elements.append(f"{label}: Re[Z^-1] not positive definite")
            if np.any(line.y_shunt) and _min_eig_psd(line.y_shunt.real) < -1e-12:
                elements.append(f"{label}: Re[Ys] not positive semidefinite")

    for edge in feeder.edges:
        el = edge.element
        if isinstance(el, LineSpec):
            check_line(edge.id, el)
        elif isinstance(el, RegulatorSpec):
            check_line(edge.id, el.line)
            if not el.is_ideal:
                f = svr_feedback(el)[0]
                if np.linalg.cond(f) > 1e12:
                    elements.append(f"{edge.id}: regulator feedback matrix singular")
        elif isinstance(el, TransformerSpec):
            eps_self = -el.eps_self.imag if reactive else el.eps_self.real
            eps_mutual = -el.eps_mutual.imag if reactive else el.eps_mutual.real
            if el.connection in REGULARIZED and eps_self <= 0:
                elements.append(f"{edge.id}: isolated side not regularized")
            if el.connection in MUTUAL_REGULARIZED and not (0 <= eps_mutual < eps_self):
                elements.append(f"{edge.id}: mutual regularization outside [0, self)")
            if reactive and el.y_t.imag >= 0:
                leakage.append(f"{edge.id}: Im[y_t] >= 0")
            if not reactive and el.y_t.real <= 0:
                leakage.append(f"{edge.id}: Re[y_t] <= 0")

    connectivity = check_phase_connectivity(feeder)
    stranded = [f"{b}.{p}" for (b, p), ok in connectivity.items() if not ok]
    three_phase = all(len(b.phases) == 3 for b in feeder.buses) and all(
        e.terminal_phases == (PHASES, PHASES) for e in feeder.edges
    )
    connected = is_connected(feeder)
    suffix = "''" if reactive else ""
    return (
        AssumptionCheck("A1" + suffix, not elements, True, _summary(elements, f"edge data admissible ({mode})")),
        AssumptionCheck("A2", connected, True, "feeder graph connected" if connected else "feeder graph disconnected"),
        AssumptionCheck("A3" + suffix, not leakage, True, _summary(leakage, "transformer leakage admissible")),
        AssumptionCheck(
            "A4", three_phase, False, "all buses and edges three-phase" if three_phase else "missing phases present"
        ),
        AssumptionCheck("A4'", not stranded, True, _summary(stranded, "every bus phase reaches the slack")),
    )


def check_invertibility(
    partition: YBusPartition, Y_L: LoadAdmittance | np.ndarray | None = None, mode: str = "resistive"
) -> Diagnostics:
    """Symmetry, definiteness and singular-value diagnostics; never raises on bad matrices."""
    y = partition.dense()
    J = y.shape[0]
    if Y_L is None:
        y_l = np.zeros_like(y)
    elif isinstance(Y_L, LoadAdmittance):
        y_l = Y_L.dense()
    else:
        y_l = np.asarray(Y_L, dtype=complex)
    total = y + y_l
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_l))):
        nan = float("nan")
        return Diagnostics(mode, nan, nan, nan, nan, nan, nan, nan, nan, 0, 0, J,
                           assumption_ledger(partition.feeder, mode))
    asym = y - y.T
    if mode == "resistive":
        definiteness = float(np.linalg.eigvalsh(0.5 * (y.real + y.real.T)).min())
    else:
        definiteness = float(np.linalg.eigvalsh(0.5 * (y.imag + y.imag.T)).max())
    sigma = np.linalg.svd(y, compute_uv=False)
    sigma_total = np.linalg.svd(total, compute_uv=False)
    return Diagnostics(
        mode=mode,
        symmetry_defect=float(np.abs(asym).max()) if J else 0.0,
        symmetry_defect_real=float(np.abs(asym.real).max()) if J else 0.0,
        symmetry_defect_imag=float(np.abs(asym.imag).max()) if J else 0.0,
        definiteness=definiteness,
        sigma_min=float(sigma[-1]),
        sigma_max=float(sigma[0]),
        sigma_min_total=float(sigma_total[-1]),
        sigma_max_total=float(sigma_total[0]),
        rank=_numeric_rank(sigma),
        rank_total=_numeric_rank(sigma_total),
        size=J,
        assumptions=assumption_ledger(partition.feeder, mode),
    )
