"""Command-line client for the stomsfem service.

Each subcommand posts one request to the service. Without ``--url`` the
service runs in-process; with ``--url`` the requests go to a running server
(``stomsfem serve``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

ROUTES = {"offline": "/offline", "online": "/estimate", "estimate": "/estimate", "compare": "/compare",
          "report": "/report"}


def parse_set(items: list[str]) -> dict:
    """``a.b=value`` pairs into a nested dict; values are parsed as YAML scalars."""
    out: dict = {}
    for item in items or []:
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _config_ref(args) -> dict:
    ref: dict = {"overrides": parse_set(args.set)}
    if args.config:
        ref["config_path"] = str(Path(args.config).resolve())
    elif args.preset:
        ref["preset"] = args.preset
    else:
        raise SystemExit("error: give --config FILE or --preset NAME")
    return ref


def build_request(args) -> tuple[str, dict]:
    cmd = args.command
    if cmd == "report":
        if args.output_dir:
            return ROUTES[cmd], {"output_dir": args.output_dir}
        return ROUTES[cmd], {"config": _config_ref(args)}
    body = _config_ref(args)
    if cmd in ("online", "estimate"):
        body["kind"] = getattr(args, "method", None)
        body["n_samples"] = args.n_samples
        body["build_offline"] = cmd == "estimate" and not args.no_build
        body["calibrate_cost"] = not args.no_calibrate
    elif cmd == "compare":
        body["against"] = args.against
        body["n_samples"] = args.n_samples
        body["build_offline"] = not args.no_build
    return ROUTES[cmd], body


def make_client(url: str | None):
    if url:
        import httpx

        return httpx.Client(base_url=url, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _add_config_args(p):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--preset", help="start from a named preset instead of a file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. grid.refine=4 (repeatable)")
    p.add_argument("--url", help="service URL; default runs the service in-process")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stomsfem", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="build and store the per-patch surrogates")
    _add_config_args(p)

    p = sub.add_parser("online", help="run the configured estimator from stored offline artifacts")
    _add_config_args(p)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--no-calibrate", action="store_true", help="skip the fine-solve timing for cost.json")
    p.set_defaults(no_build=True)

    p = sub.add_parser("estimate", help="run an estimator, building offline artifacts if missing")
    _add_config_args(p)
    p.add_argument("--method", choices=["mc", "mc2", "sc"])
    p.add_argument("--n-samples", type=int)
    p.add_argument("--no-build", action="store_true", help="fail instead of building missing offline artifacts")
    p.add_argument("--no-calibrate", action="store_true", help="skip the fine-solve timing for cost.json")

    p = sub.add_parser("compare", help="errors of the configured method against a reference (errors.csv)")
    _add_config_args(p)
    p.add_argument("--against", default="fine_fem",
                   choices=["fine_fem", "msfem_direct", "stomsfem_interp", "stomsfem_rb"])
    p.add_argument("--n-samples", type=int)
    p.add_argument("--no-build", action="store_true")

    p = sub.add_parser("report", help="summarize the artifacts of an output directory")
    _add_config_args(p)
    p.add_argument("--output-dir")

    p = sub.add_parser("preset", help="print a preset as YAML (a starting point for configs)")
    p.add_argument("name")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        import uvicorn

        uvicorn.run("stomsfem.service.app:app", host=args.host, port=args.port)
        return 0
    if args.command == "preset":
        from .harness.config import dump_config
        from .harness.presets import PRESETS

        if args.name not in PRESETS:
            print(f"error: unknown preset {args.name!r}; choose from {sorted(PRESETS)}", file=sys.stderr)
            return 2
        sys.stdout.write(dump_config(PRESETS[args.name]()))
        return 0
    route, body = build_request(args)
    with make_client(args.url) as client:
        resp = client.post(route, json=body)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        print(f"error ({resp.status_code}): {detail}", file=sys.stderr)
        return 1
    print(json.dumps(resp.json(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
