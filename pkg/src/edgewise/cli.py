"""Command-line driver.

Exit codes: 0 ok, 1 usage or bad input, 2 resource refusal, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from .bench import (ResourceRefusal, bench_csv, check_memory, k_star,
                    run_bench, synthetic_data)
from .oracle import MAX_ORDER_VARS, edge_posterior_matrix
from .posterior import EdgePosteriorMatrix, edge_posteriors
from .runtime import spawn
from .scoring import DataError, PriorSpec, load_csv

log = logging.getLogger("edgewise")

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_FAILURE = 0, 1, 2, 3
MEM_ENV = "EDGEWISE_MEM_LIMIT"
SELF_TEST_TOL = 1e-9

_UNITS = {"": 1, "b": 1, "k": 1 << 10, "kb": 1 << 10, "kib": 1 << 10, "m": 1 << 20, "mb": 1 << 20,
          "mib": 1 << 20, "g": 1 << 30, "gb": 1 << 30, "gib": 1 << 30, "t": 1 << 40, "tib": 1 << 40}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_bytes(text: str) -> int:
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([a-zA-Z]*)\s*", str(text))
    if not m or m.group(2).lower() not in _UNITS:
        raise UsageError(f"cannot parse memory size {text!r}")
    return int(float(m.group(1)) * _UNITS[m.group(2).lower()])


def workers_to_k(workers: int) -> int:
    if workers < 1 or workers & (workers - 1):
        raise UsageError("workers must be a power of two")
    return workers.bit_length() - 1


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")


def _mem_limit(args) -> int:
    env = os.environ.get(MEM_ENV)
    return parse_bytes(env) if env else parse_bytes(args.mem_limit)


def _prior(args) -> PriorSpec:
    try:
        return PriorSpec.parse(args.score)
    except ValueError as exc:
        raise UsageError(str(exc))


def format_tsv(result: EdgePosteriorMatrix) -> str:
    names = list(result.names) or [f"X{i + 1}" for i in range(result.n)]
    lines = [f"# log_evidence\t{result.log_evidence:.17g}", "\t".join(["u\\v", *names])]
    for u in range(result.n):
        cells = ["" if u == v else f"{result.values[u, v]:.17g}" for v in range(result.n)]
        lines.append("\t".join([names[u], *cells]))
    return "\n".join(lines) + "\n"


def format_json(result: EdgePosteriorMatrix) -> str:
    names = list(result.names) or [f"X{i + 1}" for i in range(result.n)]
    edges = [{"source": names[u - 1], "target": names[v - 1], "u": u, "v": v, "posterior": p}
             for u, v, p in result.edges()]
    body = {"variables": names, "log_evidence": result.log_evidence, "edges": edges}
    return json.dumps(body, indent=2) + "\n"


def _load(args):
    data = load_csv(args.data)
    d = data.n - 1 if args.max_indegree is None else args.max_indegree
    if not 0 <= d <= data.n - 1:
        raise UsageError(f"--max-indegree must be in [0, {data.n - 1}]")
    k = workers_to_k(args.workers)
    if k > data.n:
        raise UsageError(f"at most 2**n = {2 ** data.n} workers for n={data.n}")
    return data, d, k


def cmd_posteriors(args) -> int:
    data, d, k = _load(args)
    prior = _prior(args)
    check_memory(data.n, k, _mem_limit(args))
    fabric = spawn(k, args.backend)
    result = edge_posteriors(data, prior, d, fabric=fabric)
    text = format_json(result) if args.format == "json" else format_tsv(result)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.counters:
        Path(args.counters).write_text(fabric.counters_json(), encoding="utf-8")
    if args.self_test:
        worst = float(np.max(np.abs(result.trivial - 1.0))) if data.n else 0.0
        verdict = "PASS" if worst <= SELF_TEST_TOL else "FAIL"
        print(f"all-edges trivial-feature posterior = 1.0: {verdict} (max deviation {worst:.3g})")
        if verdict == "FAIL":
            return EXIT_FAILURE
    return EXIT_OK


def cmd_check(args) -> int:
    data, d, k = _load(args)
    if data.n > MAX_ORDER_VARS:
        raise UsageError(f"the order-enumeration check supports n <= {MAX_ORDER_VARS}")
    prior = _prior(args)
    result = edge_posteriors(data, prior, d, k=k, backend=args.backend)
    expected, log_pd = edge_posterior_matrix(data, prior, d)
    off = ~np.eye(data.n, dtype=bool)
    rel = np.abs(result.values[off] - expected[off]) / np.maximum(np.abs(expected[off]), 1e-300)
    worst = float(rel.max()) if rel.size else 0.0
    ev = abs(result.log_evidence - log_pd) / max(abs(log_pd), 1e-300)
    ok = worst <= args.tol and ev <= args.tol
    print(f"max relative edge error {worst:.3g}, log-evidence relative error {ev:.3g}: "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_bench(args) -> int:
    rows = run_bench(args.n_list, args.d_list, args.k_list, samples=args.samples, seed=args.seed,
                     backend=args.backend, prior=_prior(args), mem_limit=_mem_limit(args),
                     repeats=args.repeats)
    text = bench_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_kstar(args) -> int:
    value = k_star(args.n, args.d)
    print(f"k* = {value:.4f} (about {round(value)}, i.e. {2 ** round(value)} workers)")
    return EXIT_OK


def cmd_synth(args) -> int:
    data, _ = synthetic_data(args.n, args.samples, args.max_indegree, args.arity, args.seed)
    lines = [",".join(data.names)] + [",".join(map(str, row)) for row in data.cells.tolist()]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="edgewise", description="Exact edge posteriors for discrete Bayesian networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--data", required=True, help="CSV with a header row")
        sp.add_argument("--max-indegree", "-d", type=int, default=None)
        sp.add_argument("--workers", type=int, default=1, help="power of two")
        sp.add_argument("--backend", choices=("sim", "par"), default="sim")
        sp.add_argument("--score", default="bdeu:1", help="bdeu:<ess> or k2")

    sp = sub.add_parser("posteriors", help="all edge posteriors")
    common(sp)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("tsv", "json"), default="tsv")
    sp.add_argument("--mem-limit", default="4GiB")
    sp.add_argument("--counters", help="write fabric counters as JSON here")
    sp.add_argument("--self-test", action="store_true")
    sp.set_defaults(func=cmd_posteriors)

    sp = sub.add_parser("check", help="cross-check against order enumeration (n <= 8)")
    common(sp)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("bench", help="speedup and efficiency sweep on synthetic data")
    sp.add_argument("--n-list", type=_int_list, required=True)
    sp.add_argument("--d-list", type=_int_list, required=True)
    sp.add_argument("--k-list", type=_int_list, required=True)
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--backend", choices=("sim", "par"), default="sim")
    sp.add_argument("--score", default="bdeu:1")
    sp.add_argument("--mem-limit", default="4GiB")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("kstar", help="worker-count exponent with the best efficiency")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.set_defaults(func=cmd_kstar)

    sp = sub.add_parser("synth", help="write a synthetic data set")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--max-indegree", type=int, default=2)
    sp.add_argument("--arity", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except Exception as exc:
        log.debug("internal failure", exc_info=True)
        print(f"internal failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
