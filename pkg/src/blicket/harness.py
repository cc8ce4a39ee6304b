"""Trial orchestration: exploration, Q&A, records and standardized data."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .agents import (Agent, AgentDecision, ChatAgent, CountBasedAgent, OracleAgent,
                     PromptSet, RandomAgent, ReplayAgent, SamplingAgent, View)
from .backend import BackendError, ChatBackend, load_backend
from .env import (Action, BlicketError, Episode, InvalidConfigError, RenderStyle, Rule,
                  init_env)
from .hypotheses import ObservationPair, enumerate_space, filter_consistent
from .prompts import PromptStyle, SystemMessage

logger = logging.getLogger(__name__)

AGENT_KINDS = ("oracle", "random", "count_based", "replay", "chat", "sampling")


@dataclass
class TrialConfig:
    num_objects: int = 4
    num_blickets: int = 2
    rule: Rule = Rule.DISJUNCTIVE
    horizon: int = 32
    system_message_variant: SystemMessage = SystemMessage.HUMAN_DEFAULT
    prompting_style: PromptStyle = PromptStyle.DEFAULT
    agent_kind: str = "oracle"
    # backend document as accepted by ``backend.load_backend``
    backend: dict | None = None
    seed: int = 0
    render_style: RenderStyle = RenderStyle.OFF_THE
    p_on_machine: float = 0.1
    parse_retries: int = 2
    sample_target: int = 16
    sample_budget: int = 3
    count_deterministic: bool = False
    replay_commands: list[str] | None = None
    skip_qa: bool = False

    def __post_init__(self):
        self.rule = Rule.parse(self.rule) if isinstance(self.rule, str) else self.rule
        self.system_message_variant = SystemMessage(self.system_message_variant)
        self.prompting_style = PromptStyle(self.prompting_style)
        self.render_style = RenderStyle(self.render_style)
        if self.agent_kind not in AGENT_KINDS:
            raise InvalidConfigError(f"unknown agent kind {self.agent_kind!r}")
        if not 0 <= self.num_blickets <= self.num_objects:
            raise InvalidConfigError("num_blickets must be between 0 and num_objects")
        if self.horizon < 1:
            raise InvalidConfigError("horizon must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("rule", "system_message_variant", "prompting_style", "render_style"):
            d[k] = getattr(self, k).value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @property
    def templates(self) -> PromptSet:
        return PromptSet(self.system_message_variant, self.prompting_style, self.horizon)


@dataclass
class TrialRecord:
    config: TrialConfig
    ground_truth: dict
    initial_placement: list[bool]
    events: list[dict]
    observation_pairs: list[dict]
    transcript: str
    per_step_support_size: list[int]
    qa_answers: list[bool | None] = field(default_factory=list)
    qa_raw: list[str | None] = field(default_factory=list)
    agent_raw_outputs: list[str | None] = field(default_factory=list)
    qa_response_lengths: list[float] = field(default_factory=list)
    response_length_unit: str | None = None
    parse_failures: int = 0
    extra: dict = field(default_factory=dict)
    complete: bool = True
    error: str | None = None
    timing: dict = field(default_factory=dict)

    @property
    def num_objects(self) -> int:
        return self.config.num_objects

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["config"] = self.config.to_dict()
        if not include_timing:
            d.pop("timing")
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        d = dict(d)
        d["config"] = TrialConfig.from_dict(d["config"])
        return cls(**d)


class TrialIncompleteError(BlicketError):
    def __init__(self, message: str, record: TrialRecord):
        super().__init__(message)
        self.record = record


def trial_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    env_seq, agent_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(agent_seq)


def make_agent(config: TrialConfig, rng: np.random.Generator,
               backend: ChatBackend | None) -> Agent:
    kind = config.agent_kind
    if kind == "oracle":
        return OracleAgent()
    if kind == "random":
        return RandomAgent(rng)
    if kind == "count_based":
        return CountBasedAgent(rng, config.num_objects, config.count_deterministic)
    if kind == "replay":
        return ReplayAgent(config.replay_commands or [], rng, backend, config.templates)
    if backend is None:
        raise InvalidConfigError(f"agent kind {kind!r} needs a backend")
    if kind == "chat":
        return ChatAgent(backend, config.templates, config.parse_retries)
    return SamplingAgent(backend, config.templates, config.sample_target,
                         config.sample_budget, config.parse_retries)


def run_trial(config: TrialConfig, backend: ChatBackend | None = None) -> TrialRecord:
    """Run one exploration episode followed by per-object Q&A."""
    if backend is None and config.backend is not None:
        backend = load_backend(config.backend)
    env_rng, agent_rng = trial_rngs(config.seed)
    state = init_env(config.num_objects, config.num_blickets, config.rule, config.horizon,
                     env_rng, config.p_on_machine, config.render_style)
    agent = make_agent(config, agent_rng, backend)
    episode = Episode(state)
    belief = enumerate_space(config.num_objects).full_belief()
    observations: list[ObservationPair] = []

    record = TrialRecord(
        config=config,
        ground_truth={"mask": list(state.blicket_mask), "rule": state.rule.value},
        initial_placement=list(state.placement),
        events=[], observation_pairs=[], transcript=episode.transcript(),
        per_step_support_size=[belief.size],
    )
    t0 = time.perf_counter()

    def view() -> View:
        return View(config.num_objects, episode.state.placement, belief, observations,
                    episode.transcript(), episode.state.labels, config.horizon)

    try:
        while not episode.state.done:
            decision: AgentDecision = agent.act(view())
            event = episode.step(decision.action)
            if event.action.moves_object and event.valid:
                obs = ObservationPair(event.placement, event.resulting_light)
                observations.append(obs)
                belief = filter_consistent(belief, obs)
            record.events.append({
                "command": event.action.command(episode.state.labels),
                "action": event.action.to_dict(),
                "light": event.resulting_light,
                "text": event.rendered_text,
                "placement": list(event.placement),
                "valid": event.valid,
            })
            record.per_step_support_size.append(belief.size)
            record.agent_raw_outputs.append(decision.rationale_text)
            record.parse_failures += decision.parse_failures
        record.observation_pairs = [{"placement": list(o.placement), "light": o.light_on}
                                    for o in observations]
        record.transcript = episode.transcript()
        record.timing["exploration_s"] = time.perf_counter() - t0

        if not config.skip_qa:
            t1 = time.perf_counter()
            for obj in range(config.num_objects):
                ans = agent.answer(view(), obj)
                record.qa_answers.append(ans.value)
                record.qa_raw.append(ans.raw)
                for out in ans.replies[-1:]:
                    length, unit = out.length
                    record.qa_response_lengths.append(length)
                    record.response_length_unit = unit
            record.timing["qa_s"] = time.perf_counter() - t1
        if isinstance(agent, SamplingAgent):
            record.extra["sampling"] = {
                "active": [list(h.mask) + [h.rule.value] for h in agent.state.active],
                "eliminated": [list(h.mask) + [h.rule.value] for h in agent.state.eliminated],
                "rounds": [list(r) for r in agent.rounds],
            }
    except BackendError as exc:
        record.observation_pairs = [{"placement": list(o.placement), "light": o.light_on}
                                    for o in observations]
        record.transcript = episode.transcript()
        record.complete = False
        record.error = f"{type(exc).__name__}: {exc}"
        raise TrialIncompleteError(record.error, record) from exc
    return record


class RecordWriter:
    """Serialised append-only JSONL writer shared by concurrent trials."""

    def __init__(self, path: str | Path, include_timing: bool = False):
        self.path = Path(path)
        self.include_timing = include_timing
        self._lock = threading.Lock()

    def write(self, record: TrialRecord) -> None:
        line = record.to_json(self.include_timing)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def load_records(path: str | Path) -> list[TrialRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [TrialRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def run_trials(configs, out: str | Path | None = None, backend_factory=None,
               include_timing: bool = False) -> list[TrialRecord]:
    """Run configs in order, appending each record to ``out`` as it finishes.

    ``backend_factory(config)`` supplies a fresh backend per trial; by default
    each config's own backend document is loaded.
    """
    writer = RecordWriter(out, include_timing) if out else None
    records = []
    for cfg in configs:
        backend = backend_factory(cfg) if backend_factory else None
        try:
            rec = run_trial(cfg, backend)
        except TrialIncompleteError as exc:
            if writer:
                writer.write(exc.record)
            raise
        records.append(rec)
        if writer:
            writer.write(rec)
    return records


def score_qa(answers, ground_mask) -> tuple[bool, list[bool]]:
    if len(answers) != len(ground_mask):
        raise ValueError(f"{len(answers)} answers for {len(ground_mask)} objects")
    per_object = [a is not None and bool(a) == bool(m) for a, m in zip(answers, ground_mask)]
    return all(per_object), per_object


def replay_record(record: TrialRecord) -> TrialRecord:
    """Re-execute a record's commands from its seed (exploration only)."""
    cfg = TrialConfig.from_dict({**record.config.to_dict(), "agent_kind": "replay",
                                 "backend": None, "skip_qa": True,
                                 "replay_commands": [e["command"] for e in record.events]})
    return run_trial(cfg)


# ---------------------------------------------------------------- standardized data

@dataclass
class Trajectory:
    source: str
    seed: int
    rule: str
    num_objects: int
    transcript: str
    length: int
    ground_truth: dict
    record: TrialRecord


STANDARD_SOURCES = ("oracle", "random", "count_based", "replay")


def generate_standardized_data(source: str, config: TrialConfig, seeds,
                               recorded: list[TrialRecord] | None = None) -> list[Trajectory]:
    """Exploration-only transcripts from a fixed policy for later inference-only Q&A.

    ``replay`` re-runs the commands of previously recorded trials (one per
    seed, matched by seed).
    """
    if source not in STANDARD_SOURCES:
        raise InvalidConfigError(f"unknown source {source!r}")
    by_seed = {r.config.seed: r for r in (recorded or [])}
    out = []
    for seed in seeds:
        base = {**config.to_dict(), "seed": int(seed), "skip_qa": True, "backend": None}
        if source == "replay":
            rec = by_seed.get(int(seed))
            if rec is None:
                raise InvalidConfigError(f"no recorded trial for seed {seed}")
            base.update(rec.config.to_dict(), seed=int(seed), skip_qa=True, backend=None,
                        agent_kind="replay",
                        replay_commands=[e["command"] for e in rec.events])
        else:
            base["agent_kind"] = source
        r = run_trial(TrialConfig.from_dict(base))
        out.append(Trajectory(source, int(seed), r.config.rule.value, r.num_objects,
                              r.transcript, len(r.events), r.ground_truth, r))
    logger.info("%s: mean trajectory length %.2f", source,
                float(np.mean([t.length for t in out])) if out else float("nan"))
    return out


def answer_on_trajectory(traj: Trajectory, backend: ChatBackend,
                         templates: PromptSet = PromptSet()) -> list[bool | None]:
    """Inference-only Q&A on a fixed transcript."""
    from .agents import chat_answer

    return [chat_answer(traj.transcript, str(i), templates, backend).value
            for i in range(traj.num_objects)]
