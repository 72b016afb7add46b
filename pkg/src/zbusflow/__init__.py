"""Three-phase Y-Bus assembly with regularised transformers and a Z-Bus load flow."""

from .elements import (
    LineSpec,
    RegulatorSpec,
    SeriesBlocks,
    TransformerSpec,
    line_blocks,
    regulator_ratio,
    svr_blocks,
    svr_gain_matrices,
    transformer_blocks,
    transformer_matrices,
)
from .errors import (
    DivergenceError,
    FeederError,
    NumericalError,
    ParseError,
    SingularMatrixError,
    VoltageCollapseError,
)
from .feeder_io import emit_results, load_benchmark, load_fixture, parse_feeder
from .loads import ZipDeltaLoad, ZipWyeLoad, assemble_YL, injection_current, load_admittance_block
from .solver import (
    SolverConfig,
    SolverResult,
    build_network,
    epsilon_sweep,
    factorize,
    recover_regulator_internal_voltages,
    regularize,
    residual,
    solve,
)
from .topology import Bus, Edge, Feeder, PhaseIndexMap, build_index, check_phase_connectivity, embed_block
from .ybus import Diagnostics, YBusPartition, assemble, check_invertibility

__version__ = "0.1.0"
