import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from blicket.env import InvalidConfigError, Rule, machine_output
from blicket.hypotheses import (Hypothesis, InconsistentHistoryError, ObservationPair,
                                candidate_next_states, entropy, enumerate_space,
                                expected_info_gain, filter_all, filter_consistent, info_gain,
                                predict)

import brute

D, C = Rule.DISJUNCTIVE, Rule.CONJUNCTIVE


def H(n, blickets, rule):
    return Hypothesis.from_blickets(n, blickets, rule)


def as_brute(h):
    return tuple(int(b) for b in h.mask), "D" if h.rule is D else "C"


def test_space_sizes_and_order():
    assert len(enumerate_space(3)) == 16
    assert len(enumerate_space(8)) == 512
    assert enumerate_space(1).hypotheses == [H(1, [], D), H(1, [], C), H(1, [0], D), H(1, [0], C)]
    for n in range(1, 5):
        assert [as_brute(h) for h in enumerate_space(n).hypotheses] == list(brute.all_hypotheses(n))


def test_space_bounds():
    with pytest.raises(InvalidConfigError):
        enumerate_space(0)
    with pytest.raises(InvalidConfigError):
        enumerate_space(25)


def test_hypothesis_identity():
    assert H(3, [1], D) == H(3, [1], D)
    assert H(3, [1], D) != H(3, [1], C)
    assert H(3, [1], D).function_key() == H(3, [1], C).function_key()


def test_predict_examples():
    assert predict(H(3, [1, 2], C), [0, 1, 1]) is True
    assert predict(H(3, [1, 2], D), [0, 1, 0]) is True
    assert predict(H(3, [], C), [0, 0, 0]) is True
    with pytest.raises(ValueError):
        predict(H(3, [1], D), [0, 1])


@pytest.mark.parametrize("n", range(1, 7))
def test_predict_equals_machine_output_exhaustive(n):
    space = enumerate_space(n)
    for p in itertools.product((0, 1), repeat=n):
        vec = space.predictions(p)
        for k, h in enumerate(space.hypotheses):
            expect = machine_output(h.rule, h.mask, p)
            assert predict(h, p) == expect == bool(vec[k])


def test_filter_examples():
    full = enumerate_space(1).full_belief()
    b = filter_consistent(full, ObservationPair([1], True))
    assert set(b.members()) == {H(1, [], C), H(1, [0], D), H(1, [0], C)}
    assert full.size == 4  # original untouched
    # consistent with every member: no-op
    assert filter_consistent(b, ObservationPair([1], True)) == b


def test_filter_example_unique_survivor():
    b = filter_all(enumerate_space(3).full_belief(),
                   [ObservationPair(x, y) for x, y in brute.EXAMPLE_OBSERVATIONS])
    assert b.members() == [H(3, [1, 2], C)]


def test_filter_to_empty_raises():
    b = enumerate_space(1).belief_from([H(1, [0], D)])
    with pytest.raises(InconsistentHistoryError):
        filter_consistent(b, ObservationPair([0], True))


def test_entropy_examples():
    assert entropy(enumerate_space(8).full_belief()) == 9.0
    sp = enumerate_space(3)
    assert entropy(sp.belief_from([sp[0]])) == 0.0
    assert entropy(sp.belief_from(sp.hypotheses[:3])) == pytest.approx(math.log2(3))


def test_info_gain_examples():
    full = enumerate_space(1).full_belief()
    assert info_gain(full, ObservationPair([1], True)) == pytest.approx(2 - math.log2(3))
    b = filter_consistent(full, ObservationPair([1], True))
    assert info_gain(b, ObservationPair([1], True)) == 0.0
    sp = enumerate_space(3)
    # 16 -> 8: everything with object 0 in its mask predicts on under OR
    halving = sp.belief_from(sp.hypotheses)
    obs = ObservationPair([0, 0, 0], False)
    left = filter_consistent(halving, obs).size
    assert info_gain(halving, obs) == pytest.approx(math.log2(16 / left))


def test_candidates():
    assert candidate_next_states([0, 1, 1]) == [(1, 1, 1), (0, 0, 1), (0, 1, 0)]
    assert candidate_next_states([0]) == [(1,)]


@given(st.lists(st.booleans(), min_size=1, max_size=12))
def test_candidates_hamming_one(p):
    cands = candidate_next_states(p)
    assert len(cands) == len(p)
    for i, c in enumerate(cands):
        diff = [j for j in range(len(p)) if bool(c[j]) != bool(p[j])]
        assert diff == [i]


def test_eig_examples():
    sp = enumerate_space(1)
    assert expected_info_gain(sp.full_belief(), [1]) == pytest.approx(2 - 0.75 * math.log2(3))
    assert expected_info_gain(sp.full_belief(), [1]) == pytest.approx(0.811, abs=5e-4)
    sp2 = enumerate_space(2)
    two_two = sp2.belief_from([H(2, [0], D), H(2, [0], C), H(2, [], D), H(2, [1], D)])
    assert expected_info_gain(two_two, [1, 0]) == 1.0
    four_zero = sp2.belief_from([H(2, [0], D), H(2, [0], C), H(2, [0, 1], D), H(2, [], C)])
    assert expected_info_gain(four_zero, [1, 0]) == 0.0


def _random_support(rng, n, max_size):
    space = enumerate_space(n)
    k = rng.randint(1, min(max_size, len(space)))
    return space, space.belief_from(rng.sample(space.hypotheses, k))


def test_eig_equals_expected_info_gain_identity():
    rng = random.Random(7)
    for _ in range(1000):
        n = rng.randint(1, 6)
        space, b = _random_support(rng, n, 64)
        x = tuple(rng.randint(0, 1) for _ in range(n))
        k1 = sum(predict(h, x) for h in b.members())
        k = b.size
        total = 0.0
        for y, ky in ((True, k1), (False, k - k1)):
            if ky:
                total += ky / k * info_gain(b, ObservationPair(x, y))
        got = expected_info_gain(b, x)
        assert abs(got - total) <= 1e-12
        assert abs(got - brute.eig([as_brute(h) for h in b.members()], x)) <= 1e-12
        assert got >= 0
        assert (got == 0) == (k1 in (0, k))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 10**6), data=st.data())
def test_filter_order_independent_and_truth_kept(n, seed, data):
    rng = random.Random(seed)
    truth = enumerate_space(n)[rng.randrange(2 ** (n + 1))]
    xs = data.draw(st.lists(st.lists(st.booleans(), min_size=n, max_size=n), max_size=8))
    obs = [ObservationPair(x, predict(truth, x)) for x in xs]
    full = enumerate_space(n).full_belief()
    b = filter_all(full, obs)
    shuffled = obs[:]
    rng.shuffle(shuffled)
    assert filter_all(full, shuffled) == b
    assert truth in b
    expect = brute.survivors(n, [(tuple(o.placement), o.light_on) for o in obs])
    assert sorted(as_brute(h) for h in b.members()) == sorted(expect)
    # entropy never increases
    prev = entropy(full)
    cur = full
    for o in obs:
        cur = filter_consistent(cur, o)
        assert entropy(cur) <= prev
        prev = entropy(cur)
        assert entropy(cur) == math.log2(cur.size)
