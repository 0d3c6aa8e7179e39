#!/usr/bin/env python3
"""Host a live feedback-gated run for the dashboard.

Starts the HTTP API on port 8008 with a scripted Lorenz run that pauses
between iterations until feedback arrives (the dashboard's feedback box, or
`curl -X POST localhost:8008/runs/<id>/feedback -d '{"text": "..."}'`).
"""

import sys
import tempfile
from pathlib import Path

import yaml

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from sindyagent.cli import main  # noqa: E402

LIVE_CONFIG = {
    "system": "lorenz",
    "ablation": "text",
    "samples": 2,
    "iterations": 5,
    "success_threshold": 0.999999999999,  # never met: all 5 iterations run
    "feedback_wait": True,
    "feedback_timeout": 600.0,
    "fixtures": {
        "repeat": True,
        "ordered": [
            "library:\n  - fourier:\n      n_frequencies: 1\noptimizer:\n  kind: STLSQ\n  threshold: 0.1\n",
            "library:\n  - polynomial:\n      degree: 1\noptimizer:\n  kind: STLSQ\n  threshold: 0.1\n",
            "library:\n  - polynomial:\n      degree: 2\noptimizer:\n  kind: STLSQ\n  threshold: 0.1\n",
        ],
    },
}

if __name__ == "__main__":
    runs_dir = ROOT / "runs"
    with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as handle:
        yaml.safe_dump(LIVE_CONFIG, handle)
        config_path = handle.name
    sys.exit(
        main(
            [
                "serve",
                "--runs-dir", str(runs_dir),
                "--port", "8008",
                "--live-config", config_path,
                *sys.argv[1:],
            ]
        )
    )
