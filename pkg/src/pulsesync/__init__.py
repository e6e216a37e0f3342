"""Byzantine-tolerant pulse synchronization with exact-time simulation.

Signed crusader broadcast and approximate agreement in lock-step rounds, a
timed variant driving a pulse synchronization protocol over drifting
clocks, adversaries (including a three-execution lower-bound construction)
and exact checkers for every bound the protocol promises.
"""

from .analysis import (
    ConformanceReport,
    ParameterSolution,
    check_lemma_suite,
    check_pulse_sync,
    params_from_solution,
    solve_parameters,
)
from .core import (
    ClockSchedule,
    DomainError,
    InvalidParameters,
    SystemParams,
    as_rational,
    clock_inverse,
    clock_local_time,
    compute_delta,
    validate_params,
)
from .cps import CpsNode, TcbInstance, cps_compute_correction
from .des import ExecutionTrace, local_view, run_simulation
from .signatures import ForgeryError, ObservationLedger, adversary_may_send, sign, verify
from .sync import BOT, ModelViolation, run_apa, run_apa_iteration, run_cb

__version__ = "0.1.0"
