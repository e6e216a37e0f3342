"""Byzantine strategies and the three-execution lower-bound construction."""

from .apa import APA_ADVERSARIES, ApaConsistentLiar, ApaEquivocator, ApaSilent
from .lower_bound import (
    ConstructionError,
    ExecutionTriple,
    IndistinguishabilityError,
    LowerBoundReport,
    build_execution_triple,
    cps_behavior,
    free_running,
    never_sends,
    pulse_round_bound,
    verify_lower_bound,
)
from .strategies import (
    DES_STRATEGIES,
    make_strategy,
    strategy_consistent_liar,
    strategy_echo_rusher,
    strategy_equivocator,
    strategy_silent,
)
