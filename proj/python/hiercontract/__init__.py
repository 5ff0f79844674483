"""Aggregate contracts for hierarchical principal-agent chains."""

from ._core import (
    Contract,
    HcError,
    RunConfig,
    ValueFunction,
    __version__,
    check_ic,
    check_touching,
    concave_envelope,
    quadratic_closed_form,
    simulate,
    solve,
)


def load(path):
    """Parse a run configuration and build its contract."""
    config = RunConfig.load(str(path))
    return config, Contract.build(config)


__all__ = [
    "Contract",
    "HcError",
    "RunConfig",
    "ValueFunction",
    "__version__",
    "check_ic",
    "check_touching",
    "concave_envelope",
    "load",
    "quadratic_closed_form",
    "simulate",
    "solve",
]
