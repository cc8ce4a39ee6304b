"""Text-based Blicket Test: environment, exact hypothesis engine, agents and analysis."""

from .env import Action, Rule, apply_action, init_env, machine_output, parse_command
from .hypotheses import (Belief, Hypothesis, ObservationPair, candidate_next_states,
                         entropy, enumerate_space, expected_info_gain, filter_consistent,
                         info_gain, predict)

__all__ = [
    "Action", "Rule", "apply_action", "init_env", "machine_output", "parse_command",
    "Belief", "Hypothesis", "ObservationPair", "candidate_next_states", "entropy",
    "enumerate_space", "expected_info_gain", "filter_consistent", "info_gain", "predict",
]
