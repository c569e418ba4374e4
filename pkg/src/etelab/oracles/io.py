"""JSON oracle definition files.

Documented schemas (key "type" selects the oracle):

* tabular:  {"type": "tabular", "vocab": k, "n": n,
             "entries": [[[t1, ..., tn], prob], ...]}
* markov:   {"type": "markov", "pi": [...], "T": [[...], ...], "n": n}
* profile:  {"type": "profile", "vocab": k, "records": [[...], ...],
             "weights": [...], "layout": [...]}        (weights/layout optional)
* template: {"type": "template", "vocab": k, "symbol_prior": [...],
             "slots": [{"kind": "fixed", "token": t} | {"kind": "tied"}
                       | {"kind": "filler", "probs": [...]}, ...]}
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import Vocabulary
from ..errors import ConfigError
from .markov import MarkovOracle
from .profiles import ProfileOracle, build_profile_oracle
from .tabular import TabularJointOracle
from .template import Slot, TemplateOracle, build_template_oracle


def load_oracle(spec: dict | str | Path):
    if not isinstance(spec, dict):
        spec = json.loads(Path(spec).read_text())
    kind = spec.get("type")
    if kind == "tabular":
        return TabularJointOracle.from_entries(
            vocab_size=int(spec["vocab"]),
            n=int(spec["n"]),
            entries=[(e[0], e[1]) for e in spec["entries"]],
        )
    if kind == "markov":
        return MarkovOracle(
            pi=np.asarray(spec["pi"], dtype=np.float64),
            T=np.asarray(spec["T"], dtype=np.float64),
            n=int(spec["n"]),
        )
    if kind == "profile":
        return build_profile_oracle(
            records=spec["records"],
            weights=spec.get("weights"),
            vocab_size=spec.get("vocab"),
            layout=spec.get("layout"),
        )
    if kind == "template":
        slots = []
        for s in spec["slots"]:
            k = s.get("kind")
            if k == "fixed":
                slots.append(Slot("fixed", token=int(s["token"])))
            elif k == "tied":
                slots.append(Slot("tied"))
            elif k == "filler":
                slots.append(Slot("filler", probs=tuple(float(p) for p in s["probs"])))
            else:
                raise ConfigError(f"unknown slot kind {k!r}")
        return build_template_oracle(
            slots, spec["symbol_prior"], vocab_size=spec.get("vocab")
        )
    raise ConfigError(f"unknown oracle type {kind!r}")


def dump_oracle(oracle) -> dict:
    if isinstance(oracle, TabularJointOracle):
        entries = []
        it = np.nditer(oracle.joint, flags=["multi_index"])
        for val in it:
            p = float(val)
            if p > 0.0:
                entries.append([list(int(i) for i in it.multi_index), p])
        return {
            "type": "tabular",
            "vocab": oracle.vocabulary.size,
            "n": oracle.seq_len,
            "entries": entries,
        }
    if isinstance(oracle, MarkovOracle):
        return {
            "type": "markov",
            "pi": oracle.pi.tolist(),
            "T": oracle.T.tolist(),
            "n": oracle.seq_len,
        }
    if isinstance(oracle, ProfileOracle):
        return {
            "type": "profile",
            "vocab": oracle.vocabulary.size,
            "records": oracle.records.tolist(),
            "weights": oracle.weights.tolist(),
            "layout": list(oracle.layout),
        }
    if isinstance(oracle, TemplateOracle):
        slots = []
        for s in oracle.slots:
            if s.kind == "fixed":
                slots.append({"kind": "fixed", "token": s.token})
            elif s.kind == "tied":
                slots.append({"kind": "tied"})
            else:
                slots.append({"kind": "filler", "probs": list(s.probs)})
        return {
            "type": "template",
            "vocab": oracle.vocabulary.size,
            "symbol_prior": oracle.symbol_prior.tolist(),
            "slots": slots,
        }
    raise ConfigError(f"cannot serialize oracle of type {type(oracle).__name__}")
