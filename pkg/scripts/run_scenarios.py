"""Ask a chat backend the object-A question after each training variant.

Prints the share of ``True`` answers per variant and optionally saves the
raw replies as JSON.
"""

import argparse
import json
import logging
from pathlib import Path

from blicket.backend import load_backend
from blicket.scenarios import ScenarioKind, run_scenario_battery


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--backend-config", required=True, help="JSON backend document")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    backend = load_backend(args.backend_config)
    results = [run_scenario_battery(backend, kind, args.reps) for kind in ScenarioKind]
    for res in results:
        print(f"{res.kind.value:<22} P(A is a blicket) = {res.proportion:.2f}"
              f"  ({len(res.answers)} reps)")
    if args.out:
        args.out.write_text(json.dumps([r.to_dict() for r in results], indent=2) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
