"""Regenerate the pinned scenario files under src/ltmnod/scenarios/."""

import json
import pathlib

from ltmnod.harness import SCHEMA_VERSION, search_subthreshold_network, search_superset_witness

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "ltmnod" / "scenarios"


def dump(name, obj):
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    (OUT / f"{name}.json").write_text(json.dumps(obj, indent=1, default=float) + "\n")


if __name__ == "__main__":
    w = search_superset_witness(2024)
    if w is None:
        raise SystemExit("no superset witness found")
    dump("superset_witness", w)
    s = search_subthreshold_network(2024)
    if s is None:
        raise SystemExit("no subthreshold network found")
    s["params"]["delay_seed"] = s.pop("delay_seed")
    dump("subthreshold", s)
