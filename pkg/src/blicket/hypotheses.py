"""Exact hypothesis space, belief filtering and information-gain scoring.

A hypothesis is a (blicket mask, rule) pair. For ``n`` objects the space has
``2 ** (n + 1)`` members ordered by mask (lexicographic over the 0/1 vector,
so object 0 is the most significant bit) and then DISJUNCTIVE before
CONJUNCTIVE. Index ``k`` therefore decodes as ``mask_rank = k >> 1`` and
``rule = k & 1``.

Beliefs are uniform over a support stored as one membership flag per
hypothesis index; all scoring reduces to counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .env import MAX_OBJECTS, BlicketError, InvalidConfigError, Rule

_RULES = (Rule.DISJUNCTIVE, Rule.CONJUNCTIVE)


class InconsistentHistoryError(BlicketError):
    """Observations eliminated every hypothesis in the support."""


def vector_to_int(bits) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(bool(b))
    return value


def int_to_vector(value: int, n: int) -> tuple[bool, ...]:
    return tuple(bool((value >> (n - 1 - i)) & 1) for i in range(n))


@dataclass(frozen=True)
class Hypothesis:
    mask: tuple[bool, ...]
    rule: Rule

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))

    @classmethod
    def from_blickets(cls, n: int, blickets, rule: Rule) -> "Hypothesis":
        chosen = set(blickets)
        return cls(tuple(i in chosen for i in range(n)), rule)

    @property
    def num_objects(self) -> int:
        return len(self.mask)

    @property
    def blickets(self) -> tuple[int, ...]:
        return tuple(i for i, m in enumerate(self.mask) if m)

    def function_key(self) -> tuple:
        """Key equal for exactly the hypotheses with identical truth tables.

        With a single blicket "any" and "all" coincide; every other
        (mask, rule) pair computes a distinct function.
        """
        if sum(self.mask) == 1:
            return (self.mask, None)
        return (self.mask, self.rule)

    def __str__(self) -> str:
        return f"({set(self.blickets) or '{}'}, {self.rule.name[:4]})"


def predict(h: Hypothesis, placement) -> bool:
    if len(placement) != len(h.mask):
        raise ValueError(f"hypothesis over {len(h.mask)} objects, placement has {len(placement)}")
    on = [bool(p) for m, p in zip(h.mask, placement) if m]
    return any(on) if h.rule is Rule.DISJUNCTIVE else all(on)


@dataclass(frozen=True)
class ObservationPair:
    placement: tuple[bool, ...]
    light_on: bool

    def __post_init__(self):
        object.__setattr__(self, "placement", tuple(bool(p) for p in self.placement))
        object.__setattr__(self, "light_on", bool(self.light_on))


class HypothesisSpace:
    """All ``2 ** (n + 1)`` hypotheses over ``n`` objects, in canonical order."""

    def __init__(self, num_objects: int):
        if not 1 <= num_objects <= MAX_OBJECTS:
            raise InvalidConfigError(f"object count must be in 1..{MAX_OBJECTS}, got {num_objects}")
        self.num_objects = num_objects
        size = 1 << (num_objects + 1)
        idx = np.arange(size, dtype=np.uint32)
        self.mask_bits = idx >> 1
        self.conjunctive = (idx & 1).astype(bool)
        self.mask_bits.setflags(write=False)
        self.conjunctive.setflags(write=False)

    def __len__(self) -> int:
        return len(self.mask_bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, HypothesisSpace) and other.num_objects == self.num_objects

    def __hash__(self) -> int:
        return hash(("HypothesisSpace", self.num_objects))

    def __getitem__(self, k: int) -> Hypothesis:
        return Hypothesis(int_to_vector(int(self.mask_bits[k]), self.num_objects),
                          _RULES[int(self.conjunctive[k])])

    @cached_property
    def hypotheses(self) -> list[Hypothesis]:
        return [self[k] for k in range(len(self))]

    def index(self, h: Hypothesis) -> int:
        if h.num_objects != self.num_objects:
            raise ValueError("hypothesis arity does not match the space")
        return (vector_to_int(h.mask) << 1) | int(h.rule is Rule.CONJUNCTIVE)

    def predictions(self, placement, idx: np.ndarray | None = None) -> np.ndarray:
        """Vectorised ``predict`` for every hypothesis (or the subset ``idx``)."""
        if len(placement) != self.num_objects:
            raise ValueError("placement arity does not match the space")
        x = np.uint32(vector_to_int(placement))
        masks = self.mask_bits if idx is None else self.mask_bits[idx]
        conj = self.conjunctive if idx is None else self.conjunctive[idx]
        hit = masks & x
        return np.where(conj, hit == masks, hit != 0)

    def full_belief(self) -> "Belief":
        support = np.ones(len(self), dtype=bool)
        support.setflags(write=False)
        return Belief(self, support)

    def belief_from(self, hypotheses) -> "Belief":
        support = np.zeros(len(self), dtype=bool)
        for h in hypotheses:
            support[self.index(h)] = True
        support.setflags(write=False)
        return Belief(self, support)


_SPACES: dict[int, HypothesisSpace] = {}


def enumerate_space(num_objects: int) -> HypothesisSpace:
    # spaces are immutable, so share one per size
    if num_objects not in _SPACES:
        _SPACES[num_objects] = HypothesisSpace(num_objects)
    return _SPACES[num_objects]


@dataclass(frozen=True, eq=False)
class Belief:
    space: HypothesisSpace
    consistent: np.ndarray

    @cached_property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.consistent)

    @property
    def size(self) -> int:
        return len(self.support_indices)

    def members(self) -> list[Hypothesis]:
        return [self.space[int(k)] for k in self.support_indices]

    def __contains__(self, h: Hypothesis) -> bool:
        return bool(self.consistent[self.space.index(h)])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Belief) and self.space == other.space
                and np.array_equal(self.consistent, other.consistent))

    def is_resolved(self) -> bool:
        """True when every member of the support computes the same function."""
        # functional duplicates only come in single-blicket any/all pairs
        if not 1 <= self.size <= 2:
            return False
        return len({h.function_key() for h in self.members()}) == 1

    def split(self, placement) -> tuple[int, int]:
        """Support counts predicting (light off, light on) at ``placement``."""
        idx = self.support_indices
        on = int(np.count_nonzero(self.space.predictions(placement, idx)))
        return len(idx) - on, on


def filter_consistent(belief: Belief, obs: ObservationPair) -> Belief:
    idx = belief.support_indices
    keep = idx[belief.space.predictions(obs.placement, idx) == obs.light_on]
    if len(keep) == 0:
        raise InconsistentHistoryError(
            f"observation {obs} contradicts every hypothesis in the support")
    support = np.zeros(len(belief.space), dtype=bool)
    support[keep] = True
    support.setflags(write=False)
    return Belief(belief.space, support)


def filter_all(belief: Belief, observations) -> Belief:
    for obs in observations:
        belief = filter_consistent(belief, obs)
    return belief


def entropy(belief: Belief) -> float:
    """Shannon entropy in bits of the uniform distribution over the support."""
    if belief.size == 0:
        raise InconsistentHistoryError("empty support has no entropy")
    return math.log2(belief.size)


def info_gain(belief: Belief, obs: ObservationPair) -> float:
    return entropy(belief) - entropy(filter_consistent(belief, obs))


def candidate_next_states(placement) -> list[tuple[bool, ...]]:
    """Placements one object-move away, in object-index order."""
    placement = tuple(bool(p) for p in placement)
    out = []
    for i in range(len(placement)):
        p = list(placement)
        p[i] = not p[i]
        out.append(tuple(p))
    return out


def expected_info_gain(belief: Belief, candidate) -> float:
    """One-step expected entropy reduction from observing the light at ``candidate``."""
    if belief.size == 0:
        raise InconsistentHistoryError("empty support")
    k0, k1 = belief.split(candidate)
    return split_gain(k0, k1)


def split_gain(k0: int, k1: int) -> float:
    k = k0 + k1
    if k0 == 0 or k1 == 0:
        return 0.0
    return math.log2(k) - (k0 / k) * math.log2(k0) - (k1 / k) * math.log2(k1)
