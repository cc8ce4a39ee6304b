import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blicket.agents import (PerturbationCounts, PromptSet, SamplingAgentState, View,
                            answer_question, chat_agent_step, count_based_step, eliminate,
                            oracle_step, parse_answer, random_step, sample_hypotheses,
                            sampling_agent_step)
from blicket.backend import ChatMessage, ScriptEntry, scripted_backend
from blicket.dsl import render_hypothesis
from blicket.env import Action, ActionKind, Rule, apply_action, init_env
from blicket.hypotheses import (Hypothesis, ObservationPair, candidate_next_states,
                                enumerate_space, filter_consistent)

import brute

D, C = Rule.DISJUNCTIVE, Rule.CONJUNCTIVE


def H(n, blickets, rule):
    return Hypothesis.from_blickets(n, blickets, rule)


# ------------------------------------------------------------------ oracle

def test_oracle_examples():
    sp = enumerate_space(3)
    assert oracle_step(sp.belief_from([H(3, [1, 2], C)]), (0, 0, 0)).action == Action.exit()
    # D and C with a single blicket are the same function
    assert oracle_step(sp.belief_from([H(3, [1], D), H(3, [1], C)]), (0, 0, 0)).action.kind \
        is ActionKind.EXIT
    assert oracle_step(enumerate_space(1).full_belief(), (False,)).action == Action.put(0)


def _as_brute(b):
    return [(tuple(int(x) for x in h.mask), "D" if h.rule is D else "C") for h in b.members()]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 5), k=st.integers(0, 5),
       rule=st.sampled_from(list(Rule)))
def test_oracle_one_step_optimal_and_resolves(seed, n, k, rule):
    k = min(k, n)
    s = init_env(n, k, rule, 32, seed)
    belief = enumerate_space(n).full_belief()
    while not s.done:
        dec = oracle_step(belief, s.placement)
        if dec.action.kind is ActionKind.EXIT:
            break
        support = _as_brute(belief)
        gains = [brute.eig(support, c) for c in candidate_next_states(s.placement)]
        chosen = dec.action.obj
        if max(gains) > 1e-12:
            assert gains[chosen] == pytest.approx(max(gains), abs=1e-12)
            assert chosen == min(i for i, g in enumerate(gains) if g >= max(gains) - 1e-12)
        s, ev = apply_action(s, dec.action)
        belief = filter_consistent(belief, ObservationPair(ev.placement, ev.resulting_light))
    assert belief.is_resolved()
    assert s.step < 32
    assert [answer_question("oracle", i, belief=belief) for i in range(n)] == list(s.blicket_mask)


def test_oracle_answer_examples():
    b = enumerate_space(3).belief_from([H(3, [1, 2], C)])
    assert answer_question("oracle", 2, belief=b) is True
    assert answer_question("oracle", 0, belief=b) is False


# ------------------------------------------------------------------ baselines

def test_random_step_uniform_over_objects():
    rng = np.random.default_rng(0)
    counts = np.zeros(4)
    kinds = {ActionKind.PUT: 0, ActionKind.TAKE: 0}
    for _ in range(10_000):
        a = random_step(rng, (False,) * 4).action
        assert a.kind is not ActionKind.EXIT
        counts[a.obj] += 1
        kinds[a.kind] += 1
    assert np.all(np.abs(counts - 2500) <= 150)
    assert abs(kinds[ActionKind.PUT] - 5000) <= 250


def test_random_step_deterministic():
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [random_step(r1, (0,) * 5).action for _ in range(50)] == \
           [random_step(r2, (0,) * 5).action for _ in range(50)]


def test_count_based_weights():
    w = PerturbationCounts((5, 0, 0)).weights()
    assert w[0] == pytest.approx((1 / 6) / (1 / 6 + 2), abs=1e-12)
    assert w[0] == pytest.approx(0.077, abs=5e-4)
    assert np.allclose(PerturbationCounts((2, 2, 2, 2)).weights(), 0.25)


def test_count_based_step_toggles_and_counts():
    rng = np.random.default_rng(1)
    counts = PerturbationCounts.zeros(3)
    placement = (True, False, False)
    freq = np.zeros(3)
    for _ in range(3000):
        dec, new = count_based_step(PerturbationCounts((5, 0, 0)), placement, rng)
        freq[dec.action.obj] += 1
    assert abs(freq[0] / 3000 - 0.077) < 0.015
    dec, counts = count_based_step(counts, placement, rng)
    assert sum(counts.counts) == 1
    obj = dec.action.obj
    assert dec.action.kind is (ActionKind.TAKE if placement[obj] else ActionKind.PUT)


def test_count_based_deterministic_switch():
    dec, _ = count_based_step(PerturbationCounts((3, 1, 0, 2)), (0, 0, 0, 0), None,
                              deterministic=True)
    assert dec.action == Action.put(2)


# ------------------------------------------------------------------ chat agent

def test_chat_agent_step_examples():
    assert chat_agent_step("T", PromptSet(), scripted_backend(["> exit"]), 3).action == Action.exit()
    dec = chat_agent_step("T", PromptSet(),
                          scripted_backend(["Let me test.\n> put object 2 on machine"]), 3)
    assert dec.action == Action.put(2)
    assert dec.rationale_text.startswith("Let me test.")


def test_chat_agent_falls_back_to_look():
    be = scripted_backend(["uh", "hmm", "what"])
    dec = chat_agent_step("T", PromptSet(), be, 3, retries=2)
    assert dec.action == Action.look()
    assert dec.parse_failures == 3 and be.remaining == 0


def test_chat_agent_prompt_shape():
    be = scripted_backend(["> look"])
    chat_agent_step("TRANSCRIPT", PromptSet(), be, 3)
    msgs = be.calls[0]
    assert [m.role for m in msgs] == ["system", "user"]
    assert msgs[1].content.startswith("TRANSCRIPT\n\n")


def test_parse_answer():
    assert parse_answer("> True") is True
    assert parse_answer("thinking > false ... final:\n> TRUE") is True
    assert parse_answer("maybe") is None


def test_chat_answer_retry_then_none():
    view = View(3, (0, 0, 0), None, [], "T")
    be = scripted_backend(["dunno", "still dunno"])
    assert answer_question("chat", 0, view=view, backend=be) is None
    assert answer_question("chat", 0, view=view, backend=scripted_backend(["> True"])) is True


# ------------------------------------------------------------------ sampling agent

def _gen(lines):
    return ScriptEntry("\n".join(lines), "Come up with some hypothesis")


def test_sample_rejects_duplicates():
    h = render_hypothesis(H(3, [1], D))
    be = scripted_backend([_gen([h, h]), _gen([h])])
    st_ = sample_hypotheses(SamplingAgentState(target_sample_count=4), "ctx", be, 4, 3,
                            call_budget=2)
    assert st_.active == (H(3, [1], D),)
    assert st_.growth == (1,)
    assert st_.q_entropy() == 0.0


def test_sample_entropy_is_log_of_unique_count():
    hs = [H(3, [i], r) for i in range(3) for r in (D, C)]
    be = scripted_backend([_gen([render_hypothesis(h) for h in hs])])
    st_ = sample_hypotheses(SamplingAgentState(target_sample_count=6), "ctx", be, 6, 3)
    assert st_.growth == (1, 2, 3, 4, 5, 6)
    assert st_.q_entropy() == math.log2(6)


def test_sample_screens_inconsistent():
    obs = [ObservationPair((0, 1, 0), False)]
    bad, good = H(3, [1], D), H(3, [1, 2], C)
    be = scripted_backend([_gen([render_hypothesis(bad), render_hypothesis(good)])])
    st_ = sample_hypotheses(SamplingAgentState(target_sample_count=2), "ctx", be, 2, 3, obs,
                            call_budget=1)
    assert st_.active == (good,) and st_.eliminated == (bad,)
    assert not set(st_.active) & set(st_.eliminated)


def test_sample_prompt_lists_eliminated_and_active():
    be = scripted_backend([_gen(["nothing"])])
    state = SamplingAgentState((H(2, [0], D),), (H(2, [1], C),), target_sample_count=3)
    sample_hypotheses(state, "OBS", be, 3, 2, call_budget=1)
    prompt = be.calls[0][-1].content
    assert "HYP mask=[0,1] rule=ALL" in prompt.split("already eliminated")[1]
    assert "HYP mask=[1,0] rule=ANY" in prompt.split("already generated")[1]
    assert "length 2" in prompt and "OBS" in prompt


def test_eliminate_example():
    state = SamplingAgentState((H(3, [1, 2], C), H(3, [1], D)))
    out = eliminate(state, [ObservationPair((0, 1, 0), False)])
    assert out.active == (H(3, [1, 2], C),) and out.eliminated == (H(3, [1], D),)


def test_sampling_step_probes_resolved_singleton_then_exits():
    truth = H(3, [1, 2], C)
    obs = [ObservationPair((0, 1, 1), True)]
    be = scripted_backend([ScriptEntry("> take object 1 off machine", repeat=True)])
    dec, state = sampling_agent_step(SamplingAgentState((truth,)), "T", be, 3, obs)
    # first it asks for a move that could refute the lone survivor
    assert dec.action == Action.take(1) and len(be.calls) == 1
    assert state.probe == (truth.function_key(), 1)
    for placement, light in (((0, 0, 1), False), ((0, 1, 1), True)):
        obs.append(ObservationPair(placement, light))
        dec, state = sampling_agent_step(state, "T", be, 3, obs)
        assert dec.action != Action.exit()
    obs.append(ObservationPair((0, 1, 0), False))
    dec, state = sampling_agent_step(state, "T", be, 3, obs)
    assert dec.action == Action.exit() and len(be.calls) == 3


def test_sampling_step_refuted_singleton_does_not_exit():
    wrong = H(3, [2], D)
    obs = [ObservationPair((0, 0, 1), True)]
    be = scripted_backend([ScriptEntry("> look", "disprove", repeat=True),
                           ScriptEntry("(none)", "Come up with", repeat=True)])
    dec, state = sampling_agent_step(SamplingAgentState((wrong,)), "T", be, 3, obs)
    assert dec.action != Action.exit()
    obs.append(ObservationPair((0, 1, 1), False))
    dec, state = sampling_agent_step(state, "T", be, 3, obs)
    assert state.active == () and wrong in state.eliminated
    assert dec.action != Action.exit()


def test_sampling_step_asks_for_action_with_active_list():
    state = SamplingAgentState((H(3, [1, 2], C), H(3, [0], D)))
    be = scripted_backend(["> put object 0 on machine"])
    dec, new = sampling_agent_step(state, "T", be, 3, [])
    assert dec.action == Action.put(0)
    assert "HYP mask=[1,0,0] rule=ANY" in be.calls[0][-1].content
    assert new.active == state.active


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), data=st.data())
def test_elimination_never_drops_consistent(seed, data):
    rng = np.random.default_rng(seed)
    space = enumerate_space(3)
    active = tuple(space[int(i)] for i in rng.choice(16, 8, replace=False))
    truth = space[int(rng.integers(16))]
    xs = data.draw(st.lists(st.lists(st.booleans(), min_size=3, max_size=3), max_size=5))
    obs = [ObservationPair(x, brute.truth("D" if truth.rule is D else "C", truth.mask, x))
           for x in xs]
    out = eliminate(SamplingAgentState(active), obs)
    for h in active:
        consistent = all(brute.truth("D" if h.rule is D else "C", h.mask, o.placement) == o.light_on
                         for o in obs)
        assert (h in out.active) == consistent
    assert len(set(out.active) | set(out.eliminated)) == len(out.active) + len(out.eliminated)


def test_sampling_answer_conditions_on_lists():
    state = SamplingAgentState((H(3, [1, 2], C),), (H(3, [0], D),))
    be = scripted_backend(["> True"])
    view = View(3, (0, 1, 1), None, [], "T")
    assert answer_question("sampling", 2, view=view, backend=be, state=state) is True
    prompt = be.calls[0][-1].content
    assert "HYP mask=[0,1,1] rule=ALL" in prompt and "HYP mask=[1,0,0] rule=ANY" in prompt
    assert "Is object 2 a blicket?" in prompt
    assert isinstance(be.calls[0][0], ChatMessage)


def test_random_answers_are_coins():
    rng = np.random.default_rng(0)
    vals = [answer_question("random", 0, rng=rng) for _ in range(2000)]
    assert abs(np.mean(vals) - 0.5) < 0.05
