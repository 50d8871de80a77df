"""Command line entry points: serve the HTTP API, replay telemetry logs."""

from __future__ import annotations

import argparse
import sys

from . import telemetry
from .service import ServiceConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerspace",
        description="Layered writing workspace engine")
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run the workspace HTTP service")
    serve_p.add_argument("--host", default=None)
    serve_p.add_argument("--port", type=int, default=None)
    serve_p.add_argument("--workspace-dir", default=None,
                         help="directory holding workspace files")
    serve_p.add_argument("--backend", choices=["mock", "live"], default=None)
    serve_p.add_argument("--config", default=None,
                         help="JSON config file (host, port, workspace_dir, backend)")

    replay_p = sub.add_parser("replay",
                              help="summarize an event log as a usage tree")
    replay_p.add_argument("logfile")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        config = ServiceConfig.load(
            args.config, host=args.host, port=args.port,
            workspace_dir=args.workspace_dir, backend=args.backend)
        try:
            serve(config)
        except OSError as exc:
            print(f"cannot bind port {config.port}: {exc}", file=sys.stderr)
            return 2
        return 0
    if args.command == "replay":
        sessions = telemetry.replay(args.logfile)
        print(telemetry.render_usage_tree(sessions))
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
