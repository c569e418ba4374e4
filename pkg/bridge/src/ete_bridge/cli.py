"""Command-line launcher for the marginal server."""
from __future__ import annotations

import argparse

from .app import serve
from .checkpoint import ServerConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ete-bridge",
        description="Serve conditional-marginal queries over the ete-oracle/1 protocol.",
    )
    parser.add_argument("--model", default="stub:8",
                        help="checkpoint identifier (e.g. stub:8)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--port", type=int, default=8191)
    parser.add_argument("--max-batch", type=int, default=8)
    parser.add_argument("--max-seq-len", type=int, default=4096)
    args = parser.parse_args(argv)
    serve(
        ServerConfig(
            model=args.model,
            device=args.device,
            max_batch=args.max_batch,
            port=args.port,
            max_seq_len=args.max_seq_len,
        )
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
