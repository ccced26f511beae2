"""Tyler's M-estimator of a shape matrix via Frank-Wolfe variants.

Public surface: dataset construction and generators, the solver state and
its O(np + p^2) primitives, the three direction oracles, the FW/FPI solvers,
and the benchmark harness.
"""

from .dataset import (
    ConditionReport,
    Dataset,
    GeneratorConfig,
    ShapeMatrixSpec,
    check_necessary_conditions,
    generate,
    load_points,
    normalize,
    save_points,
)
from .linalg import (
    SolverState,
    gradient_dense,
    gradient_matvec,
    objective_value,
    rank_one_inverse_update,
    refresh_state,
    spd_sqrt,
    update_cached_y,
)
from .oracle import (
    Direction,
    EigConfig,
    afw_direction,
    fw_direction,
    gafw_direction,
    power_method,
)
from .solver import (
    SolveConfig,
    SolveResult,
    TraceRow,
    fpi_solve,
    iterate_once,
    solve,
    step_size,
    tme_residual_min_eig,
    tme_residual_spectral,
)
from .bench import (
    CostModel,
    ExperimentConfig,
    default_methods,
    emit_csv,
    read_csv,
    run_experiment,
)
from . import errors

__version__ = "0.1.0"
