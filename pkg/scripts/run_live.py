"""Run chat or hypothesis-sampling agents against a live backend.

Needs a backend document for an OpenAI-compatible endpoint, e.g.
``{"kind": "http", "endpoint_url": "...", "model_name": "...", "api_key_env_var": "..."}``.
Records go to ``--out``; a summary CSV is written beside them.
"""

import argparse
import logging
from pathlib import Path

from blicket.analysis import aggregate, to_csv
from blicket.backend import load_backend
from blicket.harness import TrialConfig, TrialIncompleteError, run_trials


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--backend-config", required=True)
    ap.add_argument("--agent", choices=["chat", "sampling"], default="chat")
    ap.add_argument("--objects", type=int, default=4)
    ap.add_argument("--blickets", type=int, default=2)
    ap.add_argument("--rules", nargs="+", default=["disjunctive", "conjunctive"])
    ap.add_argument("--prompt-style", default="default")
    ap.add_argument("--sample-target", type=int, default=16)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", type=Path, default=Path("results/live.jsonl"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    configs = [TrialConfig(num_objects=args.objects, num_blickets=args.blickets, rule=rule,
                           agent_kind=args.agent, prompting_style=args.prompt_style,
                           sample_target=args.sample_target, seed=s)
               for rule in args.rules for s in range(args.seeds)]
    try:
        records = run_trials(configs, args.out,
                             backend_factory=lambda c: load_backend(args.backend_config))
    except TrialIncompleteError as exc:
        logging.error("stopped early: %s (partial record saved)", exc)
        return 2
    to_csv(aggregate(records, ("agent_kind", "rule")), args.out.with_suffix(".csv"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
