"""Command-line front end: a thin client over the HTTP service.

Every data command builds a request and posts it to the service
application from :mod:`mdpmc.service`, in process by default so no
server needs to run; ``--server URL`` sends the same request to a
remote instance instead (``bench``/``hardness`` then resolve model
paths on that machine).  ``mdpmc serve`` starts the service.

Subcommands:

- ``check``: solve one objective on one model file
- ``generate``: write a model from a generator family
- ``bench``: run a suite file, emit the results CSV
- ``hardness``: filter a results CSV for hard instances
- ``serve``: run the HTTP service
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys
from typing import Optional

import httpx

from .bench import parse_algorithm_spec
from .model import BadParameter, ModelError


def _post(server: Optional[str], path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server.rstrip("/"), timeout=None) as client:
            return client.post(path, json=payload)

    from .service import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://mdpmc.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _fail(response: httpx.Response) -> int:
    try:
        detail = response.json().get("detail", response.text)
    except ValueError:
        detail = response.text
    kind = "timeout" if response.status_code == 408 else "error"
    print(f"{kind}: {detail}", file=sys.stderr)
    return 1


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _write_out(text: str, out: Optional[str]):
    if out and out != "-":
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _pairs(items) -> dict:
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise BadParameter(f"expected key=value, got {item!r}")
        params[key.strip()] = value.strip()
    return params


def _algorithm_string(args) -> str:
    """Merge --epsilon/--evaluator/--option into the algorithm spec."""
    spec = parse_algorithm_spec(args.algorithm)
    raw = {key: str(value).lower() if isinstance(value, bool) else str(value)
           for key, value in spec.options.items()}
    raw.update(_pairs(args.option))
    if args.epsilon is not None:
        raw["epsilon"] = str(args.epsilon)
    if args.evaluator is not None:
        raw["evaluator"] = args.evaluator
    if not raw:
        return spec.name
    body = ",".join(f"{k}={v}" for k, v in sorted(raw.items()))
    merged = f"{spec.name}[{body}]"
    parse_algorithm_spec(merged)  # validate before leaving the client
    return merged


def cmd_check(args) -> int:
    payload = {
        "model": _read(args.model),
        "objective": args.objective,
        "algorithm": _algorithm_string(args),
        "timeout": args.timeout,
    }
    response = _post(args.server, "/check", payload)
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    if args.json:
        import json

        print(json.dumps(body, indent=2))
        return 0
    print(f"value: {body['value']}")
    print(f"status: {body['solver_status']}")
    if body.get("lower") is not None:
        print(f"bounds: [{body['lower']}, {body['upper']}]")
    print(f"iterations: {body['iterations']}")
    print(f"states: {body['num_states']} (core {body['num_core']})")
    print(f"time: build {body['build_ms']:.1f} ms, solve {body['solve_ms']:.1f} ms")
    if body.get("flags"):
        print("flags: " + ", ".join(body["flags"]))
    return 0


def cmd_generate(args) -> int:
    payload = {"family": args.family, "params": _pairs(args.param)}
    response = _post(args.server, "/generate", payload)
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    if args.out and args.out != "-":
        _write_out(body["model"], args.out)
        print(f"wrote {args.out} ({body['states']} states)")
    else:
        sys.stdout.write(body["model"])
    return 0


def cmd_bench(args) -> int:
    base_dir = args.base_dir or os.path.dirname(os.path.abspath(args.suite))
    payload = {
        "suite": _read(args.suite),
        "timeout": args.timeout,
        "base_dir": base_dir,
    }
    response = _post(args.server, "/bench", payload)
    if response.status_code != 200:
        return _fail(response)
    _write_out(response.json()["csv"], args.out)
    return 0


def cmd_hardness(args) -> int:
    payload = {
        "csv": _read(args.results),
        "floor_ms": args.floor_ms,
        "base_dir": args.base_dir or os.path.dirname(os.path.abspath(args.results)),
    }
    response = _post(args.server, "/hardness", payload)
    if response.status_code != 200:
        return _fail(response)
    for entry in response.json()["instances"]:
        print(
            f"{entry['model']} {entry['objective']} "
            f"solve={entry['solve_ms']:.1f}ms build={entry['build_ms']:.1f}ms"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdpmc",
        description="Explicit-state MDP model checking: solvers, generators, benchmarks.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", metavar="URL", default=None,
                        help="send requests to a running service instead of solving in process")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", parents=[common],
                           help="solve one objective on one model file")
    check.add_argument("model", help="model document path")
    check.add_argument("--objective", required=True,
                       help="reach:{min|max}:<label> or reward:{min|max}")
    check.add_argument("--algorithm", default="pi",
                       help="vi | ovi | pi | lp | topo, optionally with [key=value,...]")
    check.add_argument("--epsilon", type=float, default=None,
                       help="shorthand for the epsilon option")
    check.add_argument("--evaluator", default=None,
                       help="shorthand for the pi evaluator option (exact|fp|iterative)")
    check.add_argument("--option", action="append", metavar="KEY=VALUE",
                       help="extra algorithm option, repeatable")
    check.add_argument("--timeout", type=float, default=None, help="seconds")
    check.add_argument("--json", action="store_true", help="print the raw response")
    check.set_defaults(func=cmd_check)

    generate = sub.add_parser("generate", parents=[common],
                              help="write a model from a generator family")
    generate.add_argument("family", help="hard-mn | pi-trap | random")
    generate.add_argument("--param", action="append", metavar="KEY=VALUE",
                          help="family parameter, repeatable (e.g. n=20, delta=1/10, seed=7)")
    generate.add_argument("--out", default=None, help="output path (default: stdout)")
    generate.set_defaults(func=cmd_generate)

    bench = sub.add_parser("bench", parents=[common],
                           help="run a suite file and emit the results CSV")
    bench.add_argument("suite", help="suite file path")
    bench.add_argument("--timeout", type=float, default=None,
                       help="per-run solve timeout in seconds")
    bench.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    bench.add_argument("--base-dir", default=None,
                       help="directory model paths are relative to (default: the suite's)")
    bench.set_defaults(func=cmd_bench)

    hardness = sub.add_parser("hardness", parents=[common],
                              help="filter a results CSV for hard instances")
    hardness.add_argument("results", help="results CSV path")
    hardness.add_argument("--floor-ms", type=float, default=1000.0,
                          help="minimum combined build+solve time to qualify")
    hardness.add_argument("--base-dir", default=None,
                          help="directory model paths are relative to (default: the CSV's)")
    hardness.set_defaults(func=cmd_hardness)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except httpx.HTTPError as exc:
        print(f"error: cannot reach the service: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
