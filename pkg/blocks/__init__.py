from .kinetics import (
    BlockKind,
    BlockState,
    CellBlockConfig,
    ThresholdScheme,
    bimolecular_update,
    block_step,
    constant_threshold,
    coupled_reaction_step,
    exchange_impulse,
    hill_activation,
    hill_repression,
    id_block_step,
    not_block_step,
    run_block,
    stream_block,
    threshold_block_step,
    threshold_input_step,
    threshold_rate,
    threshold_repressor_step,
)
from .propagation import (
    KernelCache,
    PropagationKernel,
    build_kernel,
    eigen_residuals,
    propagate,
    solve_eigen_phases,
    solve_eigenvalues,
)
