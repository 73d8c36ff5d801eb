"""Thin command-line client for the banditlab service.

Every subcommand maps to one HTTP endpoint. Without --server the app is
mounted in-process (no socket), so the CLI works standalone; with
--server URL it talks to a running instance, in which case experiment
outputs land on the server's filesystem.

Exit codes: 0 on success, 2 on any failure, with one machine-readable
JSON error line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx
import yaml


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _load_config_dict(args) -> dict:
    from .errors import ConfigError

    raw = yaml.safe_load(Path(args.config).read_text())
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: expected a mapping at top level")
    if getattr(args, "seed", None) is not None:
        raw["seeds"] = [args.seed]
    if getattr(args, "out", None) is not None:
        raw["out_dir"] = args.out
    if getattr(args, "rounds", None) is not None:
        raw["rounds"] = args.rounds
    if getattr(args, "variant", None):
        wanted = list(args.variant)
        available = {
            (v.get("name") or v.get("kind")): v for v in raw.get("variants", [])
        }
        missing = [name for name in wanted if name not in available]
        if missing:
            raise ConfigError(f"unknown variants {missing}; config defines {sorted(available)}")
        raw["variants"] = [available[name] for name in wanted]
    return raw


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code >= 400:
        try:
            body = resp.json()
        except ValueError:
            body = {"error": "HTTPError", "detail": resp.text}
        raise RuntimeError(json.dumps(body))
    return resp.json()


def _print_table(rows: list[dict], columns: list[str]) -> None:
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in columns} if rows else {}
    header = "  ".join(c.ljust(widths.get(c, len(c))) for c in columns)
    print(header)
    for r in rows:
        print("  ".join(str(r[c]).ljust(widths[c]) for c in columns))


def cmd_gen_config(args) -> int:
    with _client(args.server) as client:
        resp = client.get("/config/template")
        resp.raise_for_status()
        text = resp.text
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_run(args) -> int:
    payload = {"config": _load_config_dict(args)}
    if args.snapshots:
        payload["snapshot_dir"] = args.snapshots
    with _client(args.server) as client:
        body = _post(client, "/experiments/run", payload)
    rows = [
        {k: (f"{v:.4f}" if k == "final_accuracy" else v) for k, v in row.items()}
        for row in body["summary"]
    ]
    _print_table(rows, ["variant", "seed", "k", "final_accuracy", "total_errors"])
    if body.get("out_dir"):
        print(f"outputs: {body['out_dir']}")
    return 0


def cmd_compare(args) -> int:
    with _client(args.server) as client:
        body = _post(client, "/experiments/compare", {"config": _load_config_dict(args)})
    rows = [
        {**row, "mean_accuracy": f"{row['mean_accuracy']:.4f}"} for row in body["ranking"]
    ]
    _print_table(rows, ["rank", "variant", "mean_accuracy", "seeds"])
    return 0


def cmd_pretrain(args) -> int:
    with _client(args.server) as client:
        body = _post(client, "/experiments/pretrain", {"config": _load_config_dict(args)})
    for path in body["snapshots"]:
        print(path)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("banditlab.service:app", host=args.host, port=args.port)
    return 0


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override: run this single seed")
    p.add_argument("--out", default=None, help="override: output directory")
    p.add_argument("--rounds", type=int, default=None, help="override: online rounds")
    p.add_argument(
        "--variant",
        action="append",
        default=None,
        help="override: keep only this variant (repeatable)",
    )
    p.add_argument("--server", default=None, help="service URL; default runs in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditlab", description="Contextual-bandit embedding experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-config", help="emit a commented config template")
    p.add_argument("--out", default=None, help="write the template here instead of stdout")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_gen_config)

    p = sub.add_parser("run", help="run every (variant, seed) pair of a config")
    _add_common(p)
    p.add_argument("--snapshots", default=None, help="start from pretrain snapshots in this dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="rank variants by mean accuracy across seeds")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pretrain", help="write pretrain snapshots for later runs")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RuntimeError as exc:
        # already JSON from the service
        print(str(exc), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single exit point for the CLI
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
