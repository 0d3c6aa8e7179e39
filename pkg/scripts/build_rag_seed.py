#!/usr/bin/env python3
"""Regenerate fixtures/rag_seed.yaml from the benchmark registry.

Each entry pairs a system's free-text description with a candidate
configuration known to work for it; the bench sweep excludes the system
under query (leave-one-out) so retrieval never leaks the answer.
"""

import sys
from pathlib import Path

import yaml

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from sindyagent import dynamics  # noqa: E402

POLY_DEGREE = {
    "vanderpol": 3,
    "duffing": 3,
    "cubic_oscillator": 3,
    "sigmoid_growth": 3,
}
THRESHOLD = {"sigmoid_growth": 0.001}


def candidate_yaml(system_id: str) -> str:
    degree = POLY_DEGREE.get(system_id, 2)
    threshold = THRESHOLD.get(system_id, 0.1)
    return (
        "library:\n"
        "  - polynomial:\n"
        f"      degree: {degree}\n"
        "optimizer:\n"
        "  kind: STLSQ\n"
        f"  threshold: {threshold}\n"
    )


def main() -> None:
    entries = []
    for system in dynamics.registry():
        entries.append(
            {
                "id": system.id,
                "description": system.description,
                "config": candidate_yaml(system.id),
            }
        )
    out = Path(__file__).resolve().parents[1] / "fixtures" / "rag_seed.yaml"
    out.write_text(yaml.safe_dump(entries, sort_keys=False, default_flow_style=False))
    print(f"wrote {len(entries)} entries to {out}")


if __name__ == "__main__":
    main()
