from .cascade import (
    Cascade,
    CascadeResult,
    CellConstants,
    bits_to_symbols,
    check_horizon,
    compose_bcsk,
    evaluate,
    pulse_train,
    sample_and_decide,
    sample_counts,
    symbols_to_bits,
)
from .stochastic import (
    CellAgent,
    Channel,
    ParticleState,
    StochasticModel,
    StochasticResult,
    calibrate_absorption,
    impulse_response,
    run_realization,
    run_realizations,
    step_agents,
    step_particles,
)
