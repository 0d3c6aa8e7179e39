#!/usr/bin/env python3
"""Offline demo: discover the Lorenz equations with the scripted baseline.

Runs the full discovery pipeline (integrate, summarize slots, sample,
fit, score, report) against the committed fixture, then prints the
recovered equations next to the generating ones.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from sindyagent.cli import main  # noqa: E402


if __name__ == "__main__":
    out = ROOT / "runs" / "lorenz-demo"
    code = main(
        [
            "discover",
            "--system", "lorenz",
            "--transport", "fixtures",
            "--fixtures", str(ROOT / "fixtures" / "lorenz_baseline.yaml"),
            "--samples", "1",
            "--iterations", "1",
            "--ablation", "none",
            "--out", str(out),
        ]
    )
    print()
    print("generating equations:")
    print("  dx0/dt = 10 (x1 - x0)")
    print("  dx1/dt = x0 (28 - x2) - x1")
    print("  dx2/dt = x0 x1 - 2.66667 x2")
    sys.exit(code)
