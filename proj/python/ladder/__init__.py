"""Python access to the LADDER pipeline."""

from ._ladder import (
    LadderError,
    __version__,
    average_rank,
    load_idx,
    perturb_along,
    run_command,
    sweep_epsilons,
)


def run(*args):
    """Run a CLI subcommand and return its stdout; raises on a nonzero exit."""
    code, out, err = run_command([str(a) for a in args])
    if code != 0:
        raise LadderError(err.strip() or f"exit code {code}")
    return out


__all__ = [
    "LadderError",
    "__version__",
    "average_rank",
    "load_idx",
    "perturb_along",
    "run",
    "run_command",
    "sweep_epsilons",
]
