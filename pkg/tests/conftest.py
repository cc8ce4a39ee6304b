import hashlib
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def example_seed() -> int:
    """A seed whose episode has blickets {1, 2} (AND) and every object on the floor."""
    from blicket.env import Rule, init_env
    from blicket.harness import trial_rngs

    for s in range(10_000):
        st = init_env(3, 2, Rule.CONJUNCTIVE, 32, trial_rngs(s)[0])
        if st.blicket_mask == (False, True, True) and not any(st.placement):
            return s
    raise RuntimeError("no seed found")


def example_record():
    from blicket.env import RenderStyle
    from blicket.harness import TrialConfig, run_trial
    from brute import EXAMPLE_COMMANDS

    cfg = TrialConfig(num_objects=3, rule="conjunctive", agent_kind="replay", seed=example_seed(),
                      render_style=RenderStyle.OFF_OF_THE, replay_commands=EXAMPLE_COMMANDS[:-1])
    return run_trial(cfg)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num][1])
