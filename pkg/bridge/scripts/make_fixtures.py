#!/usr/bin/env python3
"""Regenerate the shared protocol fixtures under fixtures/protocol/.

Each fixture freezes one request/response pair against the deterministic
stub checkpoint, so both the server and the client test suites can assert
byte-level protocol conformance without talking to each other.
"""
from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from ete_bridge import ServerConfig, create_app

FIXTURE_MODEL = "stub:6:golden"
OUT_DIR = Path(__file__).resolve().parents[2] / "fixtures" / "protocol"

CASES = [
    {
        "name": "single_two_masked",
        "description": "two masked positions of a promptless window",
        "request": {
            "tokens": [2, -1, 5, -1],
            "prompt_len": 0,
            "positions": [1, 3],
        },
    },
    {
        "name": "single_with_prompt",
        "description": "prompted sequence, one masked query",
        "request": {
            "tokens": [1, 4, -1, -1, 0],
            "prompt_len": 2,
            "positions": [3],
        },
    },
    {
        "name": "single_fresh_window",
        "description": "fully masked window, full query",
        "request": {
            "tokens": [-1, -1, -1],
            "prompt_len": 0,
            "positions": [0, 1, 2],
        },
    },
    {
        "name": "batch_three_hypotheses",
        "description": "three variants pinning different candidates, one batched "
                       "pass; tokens mirrors the first variant (ignored when "
                       "batch is present)",
        "request": {
            "tokens": [0, 3, -1, -1],
            "prompt_len": 1,
            "positions": [[2, 3], [1, 3], [1, 2]],
            "batch": [
                [0, 3, -1, -1],
                [0, -1, 3, -1],
                [0, -1, -1, 3],
            ],
        },
    },
]


def main() -> None:
    app = create_app(ServerConfig(model=FIXTURE_MODEL, max_batch=4, max_seq_len=64))
    client = TestClient(app)
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for case in CASES:
        resp = client.post("/v1/marginals", json=case["request"])
        resp.raise_for_status()
        fixture = {
            "name": case["name"],
            "description": case["description"],
            "model": FIXTURE_MODEL,
            "request": case["request"],
            "response": resp.json(),
        }
        path = OUT_DIR / f"{case['name']}.json"
        path.write_text(json.dumps(fixture, indent=1) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
