"""Command line entry point: ``blicket run|replay|analyze|scenarios|play``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import aggregate, metrics_rows, progress_table, to_csv
from .backend import load_backend
from .env import Episode, EpisodeClosedError, ParseFailure, InvalidObjectError, init_env, parse_command
from .harness import (AGENT_KINDS, RecordWriter, TrialConfig, TrialIncompleteError,
                      load_records, replay_record, run_trial)
from .prompts import PromptStyle, SystemMessage, qa_prompt
from .scenarios import ScenarioKind, build_scenario, run_scenario_battery


def _seeds(text: str) -> list[int]:
    """``"0-15"``, ``"1,4,9"`` or ``"3"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _read_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_run(args) -> int:
    base = _read_json(args.config) if args.config else {}
    overrides = {
        "num_objects": args.objects, "num_blickets": args.blickets, "rule": args.rule,
        "agent_kind": args.agent, "system_message_variant": args.system_msg,
        "prompting_style": args.prompt_style, "horizon": args.horizon,
        "render_style": args.render_style,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.backend_config:
        base["backend"] = _read_json(args.backend_config)
    seeds = _seeds(args.seeds) if args.seeds else [base.get("seed", 0)]

    out = Path(args.out)
    if out.exists() and not args.append:
        out.unlink()
    writer = RecordWriter(out, include_timing=args.timing)
    n_ok = 0
    for seed in seeds:
        cfg = TrialConfig.from_dict({**base, "seed": seed})
        # fresh backend per trial keeps scripted backends independent
        backend = load_backend(cfg.backend) if cfg.backend else None
        try:
            rec = run_trial(cfg, backend)
        except TrialIncompleteError as exc:
            writer.write(exc.record)
            print(f"seed {seed}: incomplete ({exc})", file=sys.stderr)
            return 2
        writer.write(rec)
        n_ok += 1
    print(f"wrote {n_ok} records to {out}")
    return 0


def cmd_replay(args) -> int:
    bad = 0
    for rec in load_records(args.record):
        again = replay_record(rec)
        same = again.transcript == rec.transcript
        if args.verify_bytes:
            same = same and [e["text"] for e in again.events] == [e["text"] for e in rec.events]
        print(f"seed {rec.config.seed}: {'ok' if same else 'MISMATCH'}")
        bad += not same
    return 1 if bad else 0


def cmd_analyze(args) -> int:
    records = [r for r in load_records(args.records) if r.complete]
    group_by = tuple(args.group_by.split(",")) if args.group_by else ("model", "num_objects", "rule")
    summary = aggregate(records, group_by)
    text = to_csv(summary, args.out_csv)
    if args.out_csv:
        base = Path(args.out_csv)
        to_csv(metrics_rows(records), base.with_name(base.stem + "_trials.csv"))
        to_csv(progress_table(records), base.with_name(base.stem + "_progress.csv"))
        if args.json:
            base.with_suffix(".json").write_text(json.dumps(summary, indent=2, default=str))
        print(f"wrote {args.out_csv}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_scenarios(args) -> int:
    kinds = list(ScenarioKind) if args.variant == "all" else [ScenarioKind(args.variant)]
    if args.show:
        for k in kinds:
            print(build_scenario(k).prompt())
            print()
        return 0
    if not args.backend_config:
        print("--backend-config is required unless --show is given", file=sys.stderr)
        return 2
    spec = _read_json(args.backend_config)
    results = []
    for k in kinds:
        res = run_scenario_battery(load_backend(spec), k, args.reps)
        results.append(res.to_dict())
        print(f"{k.value}: proportion answering True for A = {res.proportion:.3f} "
              f"({len(res.answers)} reps)")
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2))
    return 0


def cmd_play(args) -> int:
    state = init_env(args.objects, args.blickets, args.rule, args.horizon, args.seed)
    ep = Episode(state)
    print(ep.transcript())
    stdin = sys.stdin
    while not ep.state.done:
        print()
        line = stdin.readline()
        if not line:
            break
        try:
            action = parse_command(line if line.lstrip().startswith(">") else "> " + line,
                                   state.num_objects)
        except InvalidObjectError as exc:
            action = exc.action
        except ParseFailure:
            print("Commands: put object <i> on machine | take object <i> off machine | look | exit")
            continue
        try:
            ev = ep.step(action)
        except EpisodeClosedError:
            break
        print(ev.rendered_text)
    print()
    for i in range(state.num_objects):
        print(qa_prompt(ep.transcript(), str(i)).rsplit("\n\n", 2)[-2])
        reply = stdin.readline().strip().lower()
        truth = state.blicket_mask[i]
        print("correct" if reply.lstrip("> ").startswith(str(truth).lower()) else
              f"wrong (object {i} is {'a blicket' if truth else 'not a blicket'})")
    print(f"The rule was {state.rule.value}.")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blicket", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run seeded trials and write JSONL records")
    r.add_argument("--config", help="JSON document with TrialConfig fields")
    r.add_argument("--objects", type=int)
    r.add_argument("--blickets", type=int)
    r.add_argument("--rule", choices=["disjunctive", "conjunctive"])
    r.add_argument("--agent", choices=AGENT_KINDS)
    r.add_argument("--system-msg", choices=[s.value for s in SystemMessage])
    r.add_argument("--prompt-style", choices=[s.value for s in PromptStyle])
    r.add_argument("--seeds", help="e.g. 0-15 or 1,2,3")
    r.add_argument("--horizon", type=int)
    r.add_argument("--render-style", choices=["off_the", "off_of_the"])
    r.add_argument("--backend-config", help="JSON backend document (http, scripted or replay)")
    r.add_argument("--out", required=True)
    r.add_argument("--append", action="store_true", help="append instead of overwriting --out")
    r.add_argument("--timing", action="store_true", help="include wall-clock timings")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="re-execute recorded actions and compare transcripts")
    rp.add_argument("--record", required=True)
    rp.add_argument("--verify-bytes", action="store_true")
    rp.set_defaults(func=cmd_replay)

    a = sub.add_parser("analyze", help="metrics and summaries from records")
    a.add_argument("--records", required=True)
    a.add_argument("--out-csv")
    a.add_argument("--group-by", help="comma-separated config fields (default model,num_objects,rule)")
    a.add_argument("--json", action="store_true", help="also write a JSON summary")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("scenarios", help="human-comparison inference scenarios")
    s.add_argument("--variant", default="all", choices=["all"] + [k.value for k in ScenarioKind])
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--backend-config")
    s.add_argument("--show", action="store_true", help="print the prompts and exit")
    s.add_argument("--out")
    s.set_defaults(func=cmd_scenarios)

    pl = sub.add_parser("play", help="play the environment interactively")
    pl.add_argument("--objects", type=int, default=4)
    pl.add_argument("--blickets", type=int, default=2)
    pl.add_argument("--rule", default="disjunctive", choices=["disjunctive", "conjunctive"])
    pl.add_argument("--horizon", type=int, default=32)
    pl.add_argument("--seed", type=int, default=0)
    pl.set_defaults(func=cmd_play)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "rule", None) and args.cmd == "play":
        from .env import Rule
        args.rule = Rule(args.rule)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
