"""Nodal admittance blocks of the series elements.

Every element between buses n and m is described by four blocks:

    i_nm = self_n @ v_n - mutual_nm @ v_m
    i_mn = self_m @ v_m - mutual_mn @ v_n

Lines use the pi model. Transformers use the standard connection matrices
with an optional regularisation admittance on delta-type self and mutual
blocks. Step-voltage regulators are merged with the line leaving their
internal node, which removes that node from the network.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FeederError, SingularMatrixError
from .topology import PHASES, PhaseSet, embed_block, phase_set

SYMMETRY_RTOL = 1e-9
CONDITION_LIMIT = 1e12
TAP_STEP = 0.00625
TAP_RANGE = 16

SQRT3 = np.sqrt(3.0)


def _complex_matrix(values, size: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.shape != (size, size):
        raise FeederError(f"{what}: expected a {size}x{size} matrix, got shape {arr.shape}")
    return arr


def symmetrized(matrix: np.ndarray, what: str, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Average ``matrix`` with its transpose after checking it is symmetric to ``rtol``."""
    scale = max(np.abs(matrix).max(), np.finfo(float).tiny)
    defect = np.abs(matrix - matrix.T).max()
    if defect > rtol * scale:
        raise FeederError(f"{what} is not symmetric (relative defect {defect / scale:.3g})")
    return 0.5 * (matrix + matrix.T)


def checked_inverse(matrix: np.ndarray, what: str, limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Inverse of a small dense matrix, refusing condition numbers above ``limit``."""
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > limit:
        raise SingularMatrixError(f"{what} is numerically singular (condition number {cond:.3g})")
    return np.linalg.inv(matrix)


@dataclass(frozen=True, eq=False)
class SeriesBlocks:
    """The four admittance blocks of one edge, over local phase sets.

    ``self_n`` is ``phases_n x phases_n``, ``mutual_nm`` is ``phases_n x phases_m``,
    ``self_m`` is ``phases_m x phases_m`` and ``mutual_mn`` is ``phases_m x phases_n``.
    """

    self_n: np.ndarray
    mutual_nm: np.ndarray
    self_m: np.ndarray
    mutual_mn: np.ndarray
    phases_n: PhaseSet
    phases_m: PhaseSet

    def embedded(self, bus_n: PhaseSet, bus_m: PhaseSet) -> "SeriesBlocks":
        """Zero-pad the blocks to the full phase sets of the two endpoint buses."""
        pn, pm = self.phases_n, self.phases_m
        return SeriesBlocks(
            self_n=embed_block(self.self_n, bus_n, bus_n, pn),
            mutual_nm=embed_block(self.mutual_nm, bus_n, bus_m, pn, pm),
            self_m=embed_block(self.self_m, bus_m, bus_m, pm),
            mutual_mn=embed_block(self.mutual_mn, bus_m, bus_n, pm, pn),
            phases_n=bus_n,
            phases_m=bus_m,
        )

    def as_tuple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.self_n, self.mutual_nm, self.self_m, self.mutual_mn


# ---------------------------------------------------------------- lines


@dataclass(frozen=True, eq=False)
class LineSpec:
    """Pi-model line: total series impedance ``z`` and total shunt admittance ``y_shunt`` (pu)."""

    phases: PhaseSet
    z: np.ndarray
    y_shunt: np.ndarray | None = None

    kind = "line"

    def __post_init__(self) -> None:
        phases = phase_set(self.phases)
        size = len(phases)
        z = symmetrized(_complex_matrix(self.z, size, "line impedance"), "line impedance")
        ys = np.zeros((size, size), dtype=complex) if self.y_shunt is None else self.y_shunt
        ys = _complex_matrix(ys, size, "line shunt admittance")
        if np.any(ys):
            ys = symmetrized(ys, "line shunt admittance")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y_shunt", ys)

    def terminal_phases(self, phases: PhaseSet) -> tuple[PhaseSet, PhaseSet]:
        return phases, phases

    def series_admittance(self) -> np.ndarray:
        zinv = checked_inverse(self.z, "line impedance")
        return 0.5 * (zinv + zinv.T)


def line_blocks(spec: LineSpec, phases_n: PhaseSet | None = None, phases_m: PhaseSet | None = None) -> SeriesBlocks:
    """Pi-model blocks ``self = Ys/2 + Z^-1`` and ``mutual = Z^-1``, embedded into the bus phases."""
    zinv = spec.series_admittance()
    self_block = 0.5 * spec.y_shunt + zinv
    blocks = SeriesBlocks(self_block, zinv, self_block.copy(), zinv.copy(), spec.phases, spec.phases)
    if phases_n is None and phases_m is None:
        return blocks
    return blocks.embedded(phases_n or spec.phases, phases_m or spec.phases)


# ---------------------------------------------------------- transformers

CONNECTIONS: tuple[str, ...] = ("yg-yg", "yg-y", "yg-d", "y-y", "y-d", "d-d", "od-od", "oy-od")
EPSILON_MODES = ("resistive", "reactive")

# Connections whose isolated sides receive the regularisation admittance.
REGULARIZED = {"yg-y", "yg-d", "y-y", "y-d", "d-d", "od-od", "oy-od"}
# Connections whose mutual blocks also receive the smaller admittance.
MUTUAL_REGULARIZED = {"yg-y", "y-y", "d-d", "od-od"}


def transformer_matrices(y_t: complex) -> dict[str, np.ndarray]:
    """The six connection matrices scaled by the leakage admittance ``y_t``."""
    y_t = complex(y_t)
    if y_t == 0:
        raise FeederError("transformer leakage admittance must be nonzero")
    return {
        "Y1": y_t * np.eye(3, dtype=complex),
        "Y2": y_t / 3 * np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]], dtype=complex),
        "Y3": y_t / SQRT3 * np.array([[-1, 1, 0], [0, -1, 1], [1, 0, -1]], dtype=complex),
        "Y4": y_t / 3 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=complex),
        "Y5": y_t * np.eye(2, dtype=complex),
        "Y6": y_t / SQRT3 * np.array([[-1, 1, 0], [0, -1, 1]], dtype=complex),
    }


def regularization(y_t: complex, relative: float, mode: str = "resistive") -> tuple[complex, complex]:
    """Self and mutual regularisation admittances for ``epsilon = relative * |y_t|``.

    Resistive mode returns ``(eps, eps/2)``; reactive mode ``(-j eps, -j eps/2)``.
    """
    if mode not in EPSILON_MODES:
        raise FeederError(f"epsilon mode must be one of {EPSILON_MODES}, got {mode!r}")
    if relative < 0:
        raise FeederError("epsilon must be non-negative")
    eps = relative * abs(complex(y_t))
    unit = 1.0 if mode == "resistive" else -1j
    return complex(unit * eps), complex(unit * eps / 2)


@dataclass(frozen=True, eq=False)
class TransformerSpec:
    """Three-phase transformer: connection name, leakage admittance and regularisation.

    ``eps_self`` is added to the isolated-side self blocks and ``eps_mutual``
    to the mutual blocks of connections whose matrices all carry ``Y2``/``Y4``.
    """

    connection: str
    y_t: complex
    eps_self: complex = 0j
    eps_mutual: complex = 0j

    kind = "transformer"

    def __post_init__(self) -> None:
        conn = self.connection.lower()
        if conn not in CONNECTIONS:
            raise FeederError(f"unknown transformer connection {self.connection!r}; expected one of {CONNECTIONS}")
        object.__setattr__(self, "connection", conn)
        object.__setattr__(self, "y_t", complex(self.y_t))
        object.__setattr__(self, "eps_self", complex(self.eps_self))
        object.__setattr__(self, "eps_mutual", complex(self.eps_mutual))
        if self.y_t == 0:
            raise FeederError("transformer leakage admittance must be nonzero")

    def terminal_phases(self, phases: PhaseSet) -> tuple[PhaseSet, PhaseSet]:
        if self.connection == "oy-od":
            if len(phases) != 2:
                raise FeederError("an open-wye primary uses exactly two phases")
            return phases, PHASES
        if phases != PHASES:
            raise FeederError(f"a {self.connection} transformer needs phases abc")
        return phases, phases

    def regularized(self, relative: float, mode: str = "resistive") -> "TransformerSpec":
        eps_self, eps_mutual = regularization(self.y_t, relative, mode)
        return replace(self, eps_self=eps_self, eps_mutual=eps_mutual)


def transformer_blocks(spec: TransformerSpec, primary_phases: PhaseSet = ("a", "b")) -> SeriesBlocks:
    """Blocks of one transformer connection with the regularisation applied.

    ``primary_phases`` only matters for the open-wye primary of ``oy-od``.
    """
    m = transformer_matrices(spec.y_t)
    eye3 = np.eye(3)
    d_self = spec.eps_self * eye3
    d_mutual = spec.eps_mutual * eye3
    conn = spec.connection
    if conn == "yg-yg":
        blocks = (m["Y1"], m["Y1"], m["Y1"], m["Y1"])
    elif conn in ("yg-y", "y-y", "d-d"):
        blocks = (m["Y2"] + d_self, m["Y2"] + d_mutual, m["Y2"] + d_self, m["Y2"] + d_mutual)
    elif conn == "yg-d":
        blocks = (m["Y1"], -m["Y3"], m["Y2"] + d_self, -m["Y3"].T)
    elif conn == "y-d":
        blocks = (m["Y2"] + d_self, -m["Y3"], m["Y2"] + d_self, -m["Y3"].T)
    elif conn == "od-od":
        blocks = (m["Y4"] + d_self, m["Y4"] + d_mutual, m["Y4"] + d_self, m["Y4"] + d_mutual)
    else:  # oy-od
        blocks = (m["Y5"], -m["Y6"], m["Y4"] + d_self, -m["Y6"].T)
        pn = phase_set(primary_phases)
        return SeriesBlocks(*[b.copy() for b in blocks], phases_n=pn, phases_m=PHASES)
    return SeriesBlocks(*[b.copy() for b in blocks], phases_n=PHASES, phases_m=PHASES)


# ------------------------------------------------------------ regulators

SVR_CONFIGURATIONS = ("wye", "closed-delta", "open-delta")
SVR_TYPES = ("A", "B")


def regulator_ratio(tap: int, svr_type: str = "B") -> float:
    """Effective ratio of one regulator arm: ``1 - 0.00625 tap`` (type B) or ``1 + 0.00625 tap`` (type A)."""
    if int(tap) != tap or abs(tap) > TAP_RANGE:
        raise FeederError(f"tap {tap!r} outside the integer range [-{TAP_RANGE}, {TAP_RANGE}]")
    if svr_type not in SVR_TYPES:
        raise FeederError(f"regulator type must be 'A' or 'B', got {svr_type!r}")
    sign = -1.0 if svr_type == "B" else 1.0
    return 1.0 + sign * TAP_STEP * int(tap)


def regulator_arms(configuration: str, phases: PhaseSet) -> tuple[str, ...]:
    """Names of the regulated arms: the phases for wye, phase pairs for delta banks."""
    if configuration == "wye":
        return tuple(phases)
    if configuration == "closed-delta":
        return ("ab", "bc", "ca")
    if configuration == "open-delta":
        return ("ab", "cb")
    raise FeederError(f"unknown regulator configuration {configuration!r}; expected one of {SVR_CONFIGURATIONS}")


@dataclass(frozen=True, eq=False)
class RegulatorSpec:
    """Step-voltage regulator bank plus the line leaving its internal node.

    ``taps`` and ``z_r`` map arm names (see ``regulator_arms``) to integer tap
    positions and series impedances in pu. ``line`` runs from the internal
    node to the downstream bus.
    """

    configuration: str
    phases: PhaseSet
    taps: dict[str, int]
    line: LineSpec
    z_r: dict[str, complex] = field(default_factory=dict)
    svr_type: str = "B"

    kind = "regulator"

    def __post_init__(self) -> None:
        phases = phase_set(self.phases)
        object.__setattr__(self, "phases", phases)
        arms = regulator_arms(self.configuration, phases)
        if self.configuration != "wye" and phases != PHASES:
            raise FeederError(f"a {self.configuration} regulator needs phases abc")
        if set(self.taps) != set(arms):
            raise FeederError(f"regulator taps must be given for arms {arms}, got {sorted(self.taps)}")
        extra = set(self.z_r) - set(arms)
        if extra:
            raise FeederError(f"regulator impedance given for unknown arms {sorted(extra)}")
        taps = {arm: int(self.taps[arm]) for arm in arms}
        for arm, tap in taps.items():
            regulator_ratio(tap, self.svr_type)
            if tap != self.taps[arm]:
                raise FeederError(f"regulator tap for arm {arm!r} must be an integer")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "z_r", {arm: complex(self.z_r.get(arm, 0)) for arm in arms})
        if not set(self.line.phases) <= set(phases):
            raise FeederError("the regulator's line must use a subset of the regulator phases")

    @property
    def arms(self) -> tuple[str, ...]:
        return regulator_arms(self.configuration, self.phases)

    @property
    def is_ideal(self) -> bool:
        return not any(self.z_r.values())

    def terminal_phases(self, phases: PhaseSet) -> tuple[PhaseSet, PhaseSet]:
        if phases != self.phases:
            raise FeederError("edge phases must equal the regulator phases")
        return self.phases, self.line.phases

    def ratios(self) -> dict[str, float]:
        return {arm: regulator_ratio(tap, self.svr_type) for arm, tap in self.taps.items()}


def _table_matrices(spec: RegulatorSpec, a: dict[str, float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Voltage gain, current gain and impedance matrices for type-B ratios ``a``."""
    z = spec.z_r
    if spec.configuration == "wye":
        ratios = np.array([a[p] for p in spec.phases])
        return (
            np.diag(ratios).astype(complex),
            np.diag(1.0 / ratios).astype(complex),
            np.diag([z[p] for p in spec.phases]).astype(complex),
        )
    if spec.configuration == "closed-delta":
        ab, bc, ca = a["ab"], a["bc"], a["ca"]
        a_v = np.array([[ab, 1 - ab, 0], [0, bc, 1 - bc], [1 - ca, 0, ca]], dtype=complex)
        pre = np.array([[ab, 0, 1 - ca], [1 - ab, bc, 0], [0, 1 - bc, ca]], dtype=complex)
        a_i = checked_inverse(pre, "closed-delta current gain")
        return a_v, a_i, np.diag([z["ab"], z["bc"], z["ca"]]).astype(complex)
    ab, cb = a["ab"], a["cb"]
    a_v = np.array([[ab, 1 - ab, 0], [0, 1, 0], [0, 1 - cb, cb]], dtype=complex)
    a_i = np.array(
        [[1 / ab, 0, 0], [1 - 1 / ab, 1, 1 - 1 / cb], [0, 0, 1 / cb]], dtype=complex
    )
    return a_v, a_i, np.diag([z["ab"], 0, z["cb"]]).astype(complex)


def svr_gain_matrices(spec: RegulatorSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(A_v, A_i, Z_R)`` with ``v_n = A_v v_n' + Z_R i_nn'`` and ``i_nn' = A_i i_n'm``.

    Type A banks use the tabulated matrices evaluated at the type-A ratios and
    then inverted, which keeps ``A_v A_i^T = I``.
    """
    a_v, a_i, z_r = _table_matrices(spec, spec.ratios())
    if spec.svr_type == "A":
        a_v = checked_inverse(a_v, "type-A voltage gain")
        a_i = checked_inverse(a_i, "type-A current gain")
    return a_v, a_i, z_r


def svr_feedback(spec: RegulatorSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(F, T, Y_self, A_i)`` with ``T = A_i^T Z_R A_i`` and ``F = I + Y_self T``.

    ``Y_self`` is the internal-node self block of the regulator's line.
    """
    _, a_i, z_r = svr_gain_matrices(spec)
    line = line_blocks(spec.line, spec.phases, spec.line.phases)
    t = a_i.T @ z_r @ a_i
    f = np.eye(len(spec.phases)) + line.self_n @ t
    return f, t, line.self_n, a_i


def svr_blocks(spec: RegulatorSpec) -> SeriesBlocks:
    """Blocks of the virtual edge left after eliminating the regulator's internal node."""
    _, a_i, _ = svr_gain_matrices(spec)
    line = line_blocks(spec.line, spec.phases, spec.line.phases)
    y_self, y_nm, y_mm, y_mn = line.as_tuple()
    if spec.is_ideal:
        gain = a_i
        self_m = y_mm
        mutual_mn = y_mn @ a_i.T
    else:
        f, t, _, _ = svr_feedback(spec)
        f_inv = checked_inverse(f, "regulator feedback matrix")
        gain = a_i @ f_inv
        self_m = y_mm - y_mn @ t @ f_inv @ y_nm
        mutual_mn = y_mn @ f_inv.T @ a_i.T
    return SeriesBlocks(
        self_n=gain @ y_self @ a_i.T,
        mutual_nm=gain @ y_nm,
        self_m=self_m,
        mutual_mn=mutual_mn,
        phases_n=spec.phases,
        phases_m=spec.line.phases,
    )


def regulator_internal_voltage(spec: RegulatorSpec, v_n: np.ndarray, v_m: np.ndarray) -> np.ndarray:
    """Voltage at the eliminated internal node from the two endpoint voltages.

    ``v_n`` is over the regulator phases and ``v_m`` over the line phases.
    """
    _, a_i, z_r = svr_gain_matrices(spec)
    line = line_blocks(spec.line, spec.phases, spec.line.phases)
    f, _, _, _ = svr_feedback(spec)
    drive = line.self_n @ a_i.T @ v_n - line.mutual_nm @ v_m
    i_line = np.linalg.solve(f, drive)
    return a_i.T @ (v_n - z_r @ a_i @ i_line)


def edge_blocks(element, phases: PhaseSet) -> SeriesBlocks:
    """Dispatch to the block builder of ``element`` over its local phase sets."""
    if isinstance(element, LineSpec):
        if element.phases != phases:
            raise FeederError("edge phases must equal the line phases")
        return line_blocks(element)
    if isinstance(element, TransformerSpec):
        element.terminal_phases(phases)
        return transformer_blocks(element, phases)
    if isinstance(element, RegulatorSpec):
        element.terminal_phases(phases)
        return svr_blocks(element)
    raise FeederError(f"unsupported element {type(element).__name__}")
