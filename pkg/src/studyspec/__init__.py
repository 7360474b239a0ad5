"""Compile declarative study configurations into participant sequences,
simulate cohorts against them and analyze provenance logs."""

from .config import StudyConfig, ValidationReport, canonicalize, parse_study_config, resolve_inheritance
from .errors import ConfigError, StudyError
from .latin import LatinPool, LatinSquare, build_latin_square
from .lint import LintReport, lint
from .provenance import dwell_per_item, exclude_by_dwell, parse_log, reconstruct_timeline, validate_log
from .ranksum import rank_sum_test
from .runtime import Session, TrialRecord, start_session
from .sequencer import RealizedSequence, insert_interruptions, realize_sequence
from .simulator import ParticipantPolicy, coverage_stats, simulate_cohort, weber_observer_respond
from .staircase import (
    StaircaseParams,
    StaircaseState,
    check_convergence,
    estimate_jnd,
    should_exclude,
    staircase_init,
    staircase_next,
)
from .validate import check_study, compile_study, validate_config

__version__ = "0.1.0"
