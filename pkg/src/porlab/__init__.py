"""Stateful partial-order-reduction model checking for bounded concurrent programs."""

from porlab.program import (
    Action,
    OutcomeSpec,
    Program,
    ProgramFault,
    ProgramFormatError,
    State,
    Statement,
    Thread,
    dependent,
    enabled,
    initial_state,
    load_program,
    next_transition,
    parse_program,
    step,
)
from porlab.lts import ReducedLts, fingerprint

__version__ = "0.1.0"
