"""Command-line client for the decoding service.

Every subcommand marshals its arguments into the service request model
and dispatches it: over HTTP when a server URL is given (``--server`` or
the SPDEMG_SERVER environment variable), otherwise directly to the
in-process handler. Responses print as JSON on stdout; domain errors
print a structured message on stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .errors import SpdEmgError

SERVER_ENV = "SPDEMG_SERVER"
PRESETS = ("words-1.5s", "gru-150ms-30ms", "sentences-400ms-100ms", "passage-100ms")


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise SpdEmgError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    ref = importlib.resources.files("spdemg").joinpath(f"presets/{name}.json")
    return json.loads(ref.read_text())


def _load_config_doc(args) -> dict:
    if getattr(args, "preset", None):
        doc = load_preset(args.preset)
    elif getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise SpdEmgError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SpdEmgError(f"config file {path} is not valid JSON: {exc}") from exc
    else:
        raise SpdEmgError("pass --config FILE or --preset NAME")
    return doc


def dispatch(path: str, payload: dict, server: str | None) -> dict:
    """Send a request to a remote server or the in-process handlers."""
    if server:
        import httpx

        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=600.0)
        if resp.status_code >= 400:
            try:
                detail = resp.json()
            except ValueError:
                detail = {"error": "HTTPError", "message": resp.text}
            raise SpdEmgError(f"{detail.get('error', 'error')}: {detail.get('message', '')}")
        return resp.json()
    from .service import HANDLERS

    model_cls, handler = HANDLERS[path]
    request = model_cls.model_validate(payload)
    return handler(request).model_dump()


def _emit(result: dict) -> None:
    print(json.dumps(result, indent=2, sort_keys=True))


def _experiment_payload(args) -> dict:
    doc = _load_config_doc(args)
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdemg",
        description="Decode articulation sEMG on the SPD-matrix manifold.",
    )
    parser.add_argument("--version", action="version", version=f"spdemg {__version__}")
    parser.add_argument(
        "--server",
        default=os.environ.get(SERVER_ENV),
        help="base URL of a running service; unset runs in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert external data (or generate the demo bundle)")
    p.add_argument("--source", help="source directory of .npy arrays with trial sidecars")
    p.add_argument("--demo", action="store_true", help="generate the synthetic demo bundle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("output_dir")

    p = sub.add_parser("validate", help="check a recording and/or manifest")
    p.add_argument("--recording")
    p.add_argument("--manifest")

    for name, help_text in (
        ("run", "run the configured experiment end to end"),
        ("train", "train a model and save its checkpoint"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config JSON file")
        p.add_argument("--preset", help=f"named preset ({', '.join(PRESETS)})")
        p.add_argument("--manifest", action="append", required=True, dest="manifests")
        p.add_argument("--output", help="write the metrics report here")
        p.add_argument("--seed", type=int, help="override the config seed")
        if name == "run":
            p.add_argument("--checkpoint-out", help="also save the trained model")
        else:
            p.add_argument("--checkpoint-out", required=True)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="experiment config JSON file (window settings)")
    p.add_argument("--preset")
    p.add_argument("--manifest", action="append", required=True, dest="manifests")
    p.add_argument("--output")

    p = sub.add_parser("export-distances", help="export the pairwise geodesic distances")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--manifest", action="append", required=True, dest="manifests")
    p.add_argument("output")

    p = sub.add_parser("analyze", help="weight/report diagnostics")
    an = p.add_subparsers(dest="analysis", required=True)

    a = an.add_parser("diag-ratio", help="basis diagonalization quality per trial")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--config")
    a.add_argument("--preset")
    a.add_argument("--manifest", action="append", required=True, dest="manifests")
    a.add_argument("--csv-out")

    a = an.add_parser("basis-angle", help="angles between trained bases")
    a.add_argument("--checkpoint", action="append", required=True, dest="checkpoints")
    a.add_argument("--csv-out")

    a = an.add_parser("importance", help="per-electrode importance coefficients")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--config")
    a.add_argument("--preset")
    a.add_argument("--manifest", action="append", required=True, dest="manifests")
    a.add_argument("--csv-out")
    a.add_argument("--per-trial-column", action="store_true")

    a = an.add_parser("collapse", help="forgive within-group confusions in a report")
    a.add_argument("--metrics", required=True)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _analysis_config(args, default_eta: float = 0.0) -> dict:
    # Weight diagnostics default to raw (eta = 0) whole-trial edge
    # matrices; distance export defaults to the regularized ones.
    if getattr(args, "preset", None) or getattr(args, "config", None):
        return _load_config_doc(args)
    return {"eta": default_eta}


def run_command(args) -> dict:
    server = args.server
    if args.command == "ingest":
        payload = {
            "output_dir": args.output_dir,
            "source": args.source,
            "demo": args.demo,
            "seed": args.seed,
        }
        return dispatch("/v1/ingest", payload, server)
    if args.command == "validate":
        return dispatch(
            "/v1/validate",
            {"recording": args.recording, "manifest": args.manifest},
            server,
        )
    if args.command in ("run", "train"):
        payload = {
            "config": _experiment_payload(args),
            "manifests": args.manifests,
            "output": args.output,
            "checkpoint_out": args.checkpoint_out,
            "seed": args.seed,
        }
        return dispatch(f"/v1/{args.command}", payload, server)
    if args.command == "eval":
        return dispatch(
            "/v1/eval",
            {
                "checkpoint": args.checkpoint,
                "manifests": args.manifests,
                "config": _analysis_config(args, default_eta=0.1),
                "output": args.output,
            },
            server,
        )
    if args.command == "export-distances":
        return dispatch(
            "/v1/export-distances",
            {
                "config": _analysis_config(args, default_eta=0.1),
                "manifests": args.manifests,
                "output": args.output,
            },
            server,
        )
    if args.command == "analyze":
        if args.analysis == "diag-ratio":
            payload = {
                "checkpoint": args.checkpoint,
                "manifests": args.manifests,
                "config": _analysis_config(args),
                "csv_out": args.csv_out,
            }
            return dispatch("/v1/analyze/diag-ratio", payload, server)
        if args.analysis == "basis-angle":
            return dispatch(
                "/v1/analyze/basis-angle",
                {"checkpoints": args.checkpoints, "csv_out": args.csv_out},
                server,
            )
        if args.analysis == "importance":
            payload = {
                "checkpoint": args.checkpoint,
                "manifests": args.manifests,
                "config": _analysis_config(args),
                "csv_out": args.csv_out,
                "per_trial_column": args.per_trial_column,
            }
            return dispatch("/v1/analyze/importance", payload, server)
        return dispatch("/v1/analyze/collapse", {"metrics": args.metrics}, server)
    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return {}
    raise SpdEmgError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = run_command(args)
    except SpdEmgError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    except ValidationError as exc:
        print(
            json.dumps({"error": "ValidationError", "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    if args.command != "serve":
        _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
