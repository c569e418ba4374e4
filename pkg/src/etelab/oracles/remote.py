"""HTTP client for the ete-oracle/1 wire protocol.

Lets the schedulers drive an external (e.g. neural) marginal server unchanged.
Responses are validated for shape and normalization before use; joints are
unavailable, so bound verification is skipped on remote runs.

Wire format (POST {endpoint}/v1/marginals, header X-Oracle-Protocol: ete-oracle/1):

* single query:  {"tokens": [ids, -1 for mask], "prompt_len": n0,
                  "positions": [i, ...]}
* batched query: additionally {"batch": [variant token arrays],
                  "positions": [[i, ...] per variant]}; "tokens" then mirrors
                  the first variant and servers ignore it
* response:      {"marginals": [[{"position": i, "probs": [...]}, ...], ...]}
  with one inner list per queried variant (a single query is a batch of one).
"""
from __future__ import annotations

from typing import Iterable, Sequence

import httpx

from ..core import DecodeState, Vocabulary
from ..errors import ContractViolation, OracleError, OracleTransportError
from .base import MarginalReport, OracleModel

PROTOCOL_VERSION = "ete-oracle/1"
PROTOCOL_HEADER = "X-Oracle-Protocol"
REMOTE_NORM_TOL = 1e-6

WIRE_MASK = -1


class RemoteOracle(OracleModel):
    supports_exact_joint = False

    def __init__(
        self,
        endpoint: str,
        vocab_size: int,
        seq_len: int,
        mask_id: int = -1,
        timeout: float = 30.0,
        batch_limit: int = 8,
        retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.vocabulary = Vocabulary(vocab_size, mask_id)
        self.seq_len = seq_len
        self.timeout = timeout
        self.batch_limit = batch_limit
        self.retries = retries
        self._client = httpx.Client(
            base_url=self.endpoint,
            timeout=timeout,
            transport=transport,
            headers={PROTOCOL_HEADER: PROTOCOL_VERSION},
        )

    def close(self) -> None:
        self._client.close()

    # -- wire helpers ---------------------------------------------------------

    def _wire_tokens(self, state: DecodeState) -> list[int]:
        mask_id = self.vocabulary.mask_id
        return [WIRE_MASK if t == mask_id else int(t) for t in state.seq.tokens]

    def _post(self, payload: dict) -> dict:
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._client.post("/v1/marginals", json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise OracleError(
                    f"marginal server returned {resp.status_code}: {resp.text[:200]}"
                )
            return resp.json()
        raise OracleTransportError(f"marginal server unreachable: {last_exc}")

    def _parse(self, body: dict, per_variant_positions: list[list[int]]) -> list[MarginalReport]:
        marginals = body.get("marginals")
        if not isinstance(marginals, list) or len(marginals) != len(per_variant_positions):
            raise OracleError(
                f"expected {len(per_variant_positions)} marginal groups, "
                f"got {type(marginals).__name__} of length "
                f"{len(marginals) if isinstance(marginals, list) else 'n/a'}"
            )
        reports = []
        for group, wanted in zip(marginals, per_variant_positions):
            got = {}
            for item in group:
                got[int(item["position"])] = item["probs"]
            if sorted(got) != sorted(wanted):
                raise OracleError(
                    f"response positions {sorted(got)} != requested {sorted(wanted)}"
                )
            reports.append(
                MarginalReport.from_dict(got, self.vocabulary.size, norm_tol=REMOTE_NORM_TOL)
            )
        return reports

    # -- oracle surface ---------------------------------------------------------

    def conditional_marginals(
        self, state: DecodeState, positions: Iterable[int]
    ) -> MarginalReport:
        pos = self._check_query(state, list(positions))
        payload = {
            "tokens": self._wire_tokens(state),
            "prompt_len": state.seq.prompt_len,
            "positions": pos,
        }
        return self._parse(self._post(payload), [pos])[0]

    def batch_conditional_marginals(
        self, states: Sequence[DecodeState], positions: Sequence[Iterable[int]]
    ) -> list[MarginalReport]:
        if len(states) == 0:
            raise ContractViolation("empty batch")
        if len(states) > self.batch_limit:
            raise ContractViolation(
                f"batch of {len(states)} exceeds the configured limit {self.batch_limit}"
            )
        if len(states) != len(positions):
            raise ContractViolation("one position set per state required")
        per_pos = [self._check_query(s, list(p)) for s, p in zip(states, positions)]
        payload = {
            "tokens": self._wire_tokens(states[0]),
            "prompt_len": states[0].seq.prompt_len,
            "positions": per_pos,
            "batch": [self._wire_tokens(s) for s in states],
        }
        return self._parse(self._post(payload), per_pos)

    def _marginals(self, evidence, positions):  # pragma: no cover - not used remotely
        raise NotImplementedError
