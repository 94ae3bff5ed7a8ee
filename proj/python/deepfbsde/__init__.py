"""Deep FBSDE solver: coupled forward-backward SDEs via control reformulation.

Thin wrapper over the C++ core. The three algorithms differ in what the
per-timestep networks see: (x, y) feedback with a trainable initial value,
double (value, integrand) controls on x alone, or a Picard-style pass fed by
the previous iteration's trajectories.
"""

from ._core import (
    GradCheckResult,
    IterRecord,
    Problem,
    ResidualRow,
    RunReport,
    TrainConfig,
    __version__,
    gradient_check,
    problem,
    problem_names,
    residual_check,
    sample_paths,
    terminal_consistency_gap,
    train,
)

__all__ = [
    "GradCheckResult",
    "IterRecord",
    "Problem",
    "ResidualRow",
    "RunReport",
    "TrainConfig",
    "__version__",
    "gradient_check",
    "problem",
    "problem_names",
    "residual_check",
    "run",
    "sample_paths",
    "terminal_consistency_gap",
    "train",
]


def run(name, algorithm=1, d=None, T=None, x0=None, **config_kwargs):
    """Build a named problem and train it in one call.

    Extra keyword arguments go to TrainConfig (max_steps, seed, lr, ...).
    """
    prob = problem(name, d=d, T=T, x0=x0)
    cfg = TrainConfig(algorithm=algorithm, **config_kwargs)
    return train(prob, cfg)
