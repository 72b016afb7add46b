"""Wye and delta ZIP loads: injection currents and constant-impedance blocks.

Currents are injections, so a consuming load yields currents with a leading
minus sign. A delta load is described per phase pair (ab, bc, ca); its pair
currents enter the bus through the incidence matrix that maps pair values to
the two phases they connect, which makes the bus currents sum to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import FeederError, VoltageCollapseError
from .topology import Feeder, PhaseIndexMap, PhaseSet, phase_set

V_MIN = 1e-4
DELTA_PAIRS: tuple[str, ...] = ("ab", "bc", "ca")


def _as_vector(values, size: int, what: str) -> np.ndarray:
    if values is None:
        return np.zeros(size, dtype=complex)
    arr = np.asarray(values, dtype=complex).reshape(-1)
    if arr.shape != (size,):
        raise FeederError(f"{what}: expected {size} entries, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True, eq=False)
class ZipWyeLoad:
    """Per-phase constant-power ``s``, constant-current ``i`` and admittance ``y`` (pu).

    Vectors are aligned with ``phases``, which must equal the bus phase set.
    ``i`` is complex: its phase is taken relative to the local voltage, so a
    real value draws unity-power-factor current. With ``fixed_current_phase``
    the current is a fixed phasor ``-i`` instead.
    """

    phases: PhaseSet
    s: np.ndarray | None = None
    i: np.ndarray | None = None
    y: np.ndarray | None = None
    fixed_current_phase: bool = False

    connection = "wye"

    def __post_init__(self) -> None:
        phases = phase_set(self.phases)
        object.__setattr__(self, "phases", phases)
        for name in ("s", "i", "y"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), len(phases), f"wye load {name}"))
        if np.any(self.y.real < 0):
            raise FeederError("wye load admittance must have a non-negative real part")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.phases


def _pair_incidence(phases: PhaseSet) -> tuple[tuple[str, ...], np.ndarray]:
    """Pairs available on ``phases`` and the (pairs x phases) incidence matrix."""
    pairs = tuple(p for p in DELTA_PAIRS if p[0] in phases and p[1] in phases)
    incidence = np.zeros((len(pairs), len(phases)))
    for k, pair in enumerate(pairs):
        incidence[k, phases.index(pair[0])] = 1.0
        incidence[k, phases.index(pair[1])] = -1.0
    return pairs, incidence


@dataclass(frozen=True, eq=False)
class ZipDeltaLoad:
    """Per-pair ZIP parameters for a delta load, vectors ordered (ab, bc, ca).

    Entries for pairs that are not available on ``phases`` must be zero.
    """

    phases: PhaseSet
    s: np.ndarray | None = None
    i: np.ndarray | None = None
    y: np.ndarray | None = None
    fixed_current_phase: bool = False

    connection = "delta"

    def __post_init__(self) -> None:
        phases = phase_set(self.phases)
        if len(phases) < 2:
            raise FeederError("a delta load needs at least two phases")
        object.__setattr__(self, "phases", phases)
        for name in ("s", "i", "y"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), 3, f"delta load {name}"))
        available = [p[0] in phases and p[1] in phases for p in DELTA_PAIRS]
        for name in ("s", "i", "y"):
            vec = getattr(self, name)
            for pair, ok, val in zip(DELTA_PAIRS, available, vec):
                if not ok and val != 0:
                    raise FeederError(
                        f"delta load {name}: pair {pair!r} is not available on "
                        f"phases {''.join(phases)!r}"
                    )
        if np.any(self.y.real < 0):
            raise FeederError("delta load admittance must have a non-negative real part")

    @property
    def labels(self) -> tuple[str, ...]:
        return DELTA_PAIRS

    def pair_values(self, name: str) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
        """Available pairs, their incidence matrix and the matching entries of ``name``."""
        pairs, incidence = _pair_incidence(self.phases)
        vec = getattr(self, name)
        return pairs, incidence, np.array([vec[DELTA_PAIRS.index(p)] for p in pairs])


ZipLoad = ZipWyeLoad | ZipDeltaLoad


def _guarded(values: np.ndarray, active: np.ndarray, what: str) -> np.ndarray:
    mags = np.abs(values)
    if np.any(active & (mags <= V_MIN)):
        raise VoltageCollapseError(
            f"{what} magnitude {mags[active].min():.3g} pu is below the guard {V_MIN:g} pu"
        )
    return np.where(mags > 0, mags, 1.0)


def _element_currents(
    d: np.ndarray, s: np.ndarray, i_nom: np.ndarray, y: np.ndarray, fixed: bool, what: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Constant-power, constant-current and constant-impedance currents across elements."""
    mags = _guarded(d, (s != 0) | ((i_nom != 0) & (not fixed)), what)
    safe = np.where(np.abs(d) > 0, d, 1.0)
    i_pq = np.where(s != 0, -np.conj(s / safe), 0.0)
    if fixed:
        i_i = -i_nom
    else:
        i_i = np.where(i_nom != 0, -(d / mags) * i_nom, 0.0)
    i_z = -y * d
    return i_pq, i_i, i_z


def injection_components(load: ZipLoad, v_n: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The constant-power, constant-current and constant-impedance injections at the bus."""
    v_n = np.asarray(v_n, dtype=complex)
    if v_n.shape != (len(load.phases),):
        raise FeederError(f"voltage vector has {v_n.shape[0]} entries, load has {len(load.phases)} phases")
    if isinstance(load, ZipWyeLoad):
        return _element_currents(v_n, load.s, load.i, load.y, load.fixed_current_phase, "phase voltage")
    _, incidence, s = load.pair_values("s")
    i_nom = load.pair_values("i")[2]
    y = load.pair_values("y")[2]
    d = incidence @ v_n
    parts = _element_currents(d, s, i_nom, y, load.fixed_current_phase, "line-to-line voltage")
    return tuple(incidence.T @ part for part in parts)


def injection_current(load: ZipLoad, v_n: np.ndarray) -> np.ndarray:
    """Total ZIP injection current over the bus phases."""
    i_pq, i_i, i_z = injection_components(load, v_n)
    return i_pq + i_i + i_z


def load_admittance_block(load: ZipLoad, phases: PhaseSet | None = None) -> np.ndarray:
    """Constant-impedance admittance block over the bus phases.

    A wye load gives ``diag(y)``. A delta load gives the pair Laplacian, whose
    rows sum to zero.
    """
    if phases is not None and phase_set(phases) != load.phases:
        raise FeederError("requested phases differ from the load phases")
    if isinstance(load, ZipWyeLoad):
        return np.diag(load.y)
    _, incidence, y = load.pair_values("y")
    return incidence.T @ np.diag(y) @ incidence


@dataclass(frozen=True, eq=False)
class LoadAdmittance:
    """Per-bus constant-impedance blocks and the assembled block-diagonal matrix."""

    blocks: dict[str, np.ndarray]
    matrix: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_YL(feeder: Feeder, index: PhaseIndexMap) -> LoadAdmittance:
    """Place every bus's summed load admittance block on the diagonal."""
    blocks: dict[str, np.ndarray] = {}
    rows, cols, vals = [], [], []
    for bus in feeder.network_buses:
        block = np.zeros((len(bus.phases),) * 2, dtype=complex)
        for load in bus.loads:
            block += load_admittance_block(load)
        blocks[bus.id] = block
        idx = index.indices(bus.id)
        r, c = np.nonzero(block)
        rows.extend(idx[r])
        cols.extend(idx[c])
        vals.extend(block[r, c])
    J = index.size
    matrix = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(J, J))
    return LoadAdmittance(blocks=blocks, matrix=matrix)


def bus_injections(feeder: Feeder, index: PhaseIndexMap, v: np.ndarray) -> np.ndarray:
    """Constant-power plus constant-current injections for the whole network vector."""
    out = np.zeros(index.size, dtype=complex)
    for bus in feeder.network_buses:
        if not bus.loads:
            continue
        sl = index.bus_slices[bus.id]
        for load in bus.loads:
            i_pq, i_i, _ = injection_components(load, v[sl])
            out[sl] += i_pq + i_i
    return out
