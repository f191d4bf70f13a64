"""Command line front end.

Thin client of the experiment API: by default requests are dispatched
in-process through the same pydantic models the HTTP service uses; with
--server they are POSTed to a running service instead.  Results land as a
JSON record (plus a CSV next to it when the command produces a series) and
one summary line on stdout.

    polymerlab <command> [--config path-or-preset] [--set key=value]...
               [--seed u64] [--replicates n] [--threads n] [--out path]
               [--server url]
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, PolymerlabError
from .experiments import REQUEST_MODELS, attach_digest, build_request, get_preset, replay, run_request

COMMANDS = sorted(REQUEST_MODELS) + ["replay"]


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(source: str, command: str) -> dict:
    if source is None:
        return {}
    path = Path(source)
    if path.exists():
        data = json.loads(path.read_text())
    else:
        data = get_preset(source)  # raises ConfigError for unknown names
    # a config file may be flat (one command) or keyed by command name
    if command in data and isinstance(data[command], dict):
        return dict(data[command])
    if all(isinstance(v, dict) for v in data.values()) and data and command not in data:
        raise ConfigError(f"config has no section for command {command!r}")
    return dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polymerlab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("record", nargs="?", help="record path (replay only)")
    parser.add_argument("--config", help="JSON config path or preset name (desk-small, desk-large, paper-scale-validate)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out", help="output record path (default <command>_result.json)")
    parser.add_argument("--server", help="base URL of a running service; runs remotely instead of in-process")
    parser.add_argument("--quiet", action="store_true")
    return parser


def _gather_params(args) -> dict:
    params = _load_config(args.config, args.command)
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        params[key.strip()] = _parse_value(value.strip())
    for flag in ("seed", "replicates", "threads"):
        value = getattr(args, flag)
        if value is not None:
            params[flag] = value
    return params


def _run_remote(server: str, command: str, payload: dict) -> dict:
    import httpx

    url = server.rstrip("/") + f"/v1/{command}"
    resp = httpx.post(url, json=payload, timeout=None)
    if resp.status_code != 200:
        body = resp.json()
        err = PolymerlabError(body.get("message", "remote error"))
        err.category = body.get("category", "error")
        err.exit_code = body.get("exit_code", 1)
        raise err
    return resp.json()


def _write_outputs(payload: dict, out_path: Path, quiet: bool) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    series = payload.get("series")
    if series:
        csv_path = out_path.with_suffix(".csv")
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(series["header"])
            writer.writerows(series["rows"])
    if not quiet:
        print(f"{payload['summary']}  [{out_path}]")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            if not args.record:
                raise ConfigError("replay needs a record path")
            payload = json.loads(Path(args.record).read_text())
            if args.server:
                body = _run_remote(args.server, "replay", payload)
                drift_ok = body.get("replay", {}).get("ok", False)
            else:
                new, drift, drift_ok = replay(payload)
                body = attach_digest(new)
                body["replay"] = {"drift": drift, "ok": drift_ok}
            out = Path(args.out or "replay_result.json")
            _write_outputs(body, out, args.quiet)
            if not drift_ok:
                print("replay drift detected", file=sys.stderr)
                return 1
            return 0
        params = _gather_params(args)
        if args.server:
            req = build_request(args.command, params)  # validate before shipping
            payload = _run_remote(args.server, args.command, json.loads(req.model_dump_json()))
        else:
            record = run_request(args.command, build_request(args.command, params))
            payload = attach_digest(record)
        out = Path(args.out or f"{args.command.replace('-', '_')}_result.json")
        _write_outputs(payload, out, args.quiet)
        return 0
    except PolymerlabError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
