"""Command-line runner: ``decode``, ``sweep``, ``verify-dist``, ``oracle-khat``.

Exit codes: 0 success, 1 runtime error or tolerance breach, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import oracle
from .config import ConfigError, Experiment, load, with_overrides
from .decode import DecodeConfig, decode_sequence
from .metrics import summarize
from .routing import expected_prefix
from .synthmodel import SyntheticModel

ROLE_SAMPLING, ROLE_ROUTING = 0, 1
TV_TOL = 0.01
KHAT_TOL = 1e-12


def stream(seed: int, cell: int, seq: int, role: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, cell, sequence, role)."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, cell, seq, role])
    return np.random.Generator(np.random.Philox(ss))


def run_sequences(exp: Experiment, cell: int, n: int | None = None, *, decode: DecodeConfig | None = None,
                  sampler: str | None = None, jobs: int = 1):
    """Decode ``n`` sequences (prompts cycled) and return ``[(prompt, output, trace)]``."""
    model = SyntheticModel(exp.model)
    decode = decode or exp.decode
    sampler = sampler or exp.sampler
    n = len(exp.prompts) if n is None else n
    shared = exp.routing_state() if exp.persist else None
    sequential = jobs <= 1 or (sampler == "s2d2" and exp.persist and exp.policy["kind"] == "bandit")

    def one(j):
        state = shared if shared is not None and sequential else exp.routing_state()
        if shared is not None:
            state.h_on = exp.policy["h_init"] == "on"
        prompt = exp.prompts[j % len(exp.prompts)]
        out, tr = decode_sequence(model, prompt, decode, sampler, state,
                                  stream(exp.seed, cell, j, ROLE_SAMPLING),
                                  stream(exp.seed, cell, j, ROLE_ROUTING))
        return prompt, out.tolist(), tr

    if sequential:
        return [one(j) for j in range(n)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(n)))


def _dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def _summary_dict(traces, k: int) -> dict:
    return asdict(summarize(traces, k))


def cmd_decode(args) -> int:
    exp, _ = load(args.config, args.seed)
    results = run_sequences(exp, 0, jobs=args.jobs)
    buf = io.StringIO()
    for j, (prompt, out, tr) in enumerate(results):
        for rec in tr.records():
            buf.write(_dumps({**rec.to_dict(), "seq": j}) + "\n")
        buf.write(_dumps({"kind": "sequence", "seq": j, "prompt": prompt, "output": out,
                          "tokens": tr.n_tokens, "nfe": tr.nfe}) + "\n")
    summary = {"kind": "summary", "arness_k": exp.arness_k, "sampler": exp.sampler,
               **_summary_dict([r[2] for r in results], exp.arness_k),
               "config": exp.raw}
    buf.write(_dumps(summary) + "\n")
    _write(args.out, buf.getvalue())
    return 0


_AR_CACHE: dict = {}


def _ar_tokens_per_nfe(exp: Experiment, n: int) -> float:
    """Tokens per NFE of block-size-1 decoding on the same prompts and streams."""
    key = (exp.model, exp.decode.max_new_tokens, exp.decode.greedy,
           tuple(map(tuple, exp.prompts)), exp.seed, n)
    if key not in _AR_CACHE:
        dec = DecodeConfig(block_size=1, max_new_tokens=exp.decode.max_new_tokens,
                           greedy=exp.decode.greedy)
        trs = [r[2] for r in run_sequences(exp, 0, n, decode=dec, sampler="bd3")]
        _AR_CACHE[key] = sum(t.n_tokens for t in trs) / sum(t.nfe for t in trs)
    return _AR_CACHE[key]


def _run_cell(task) -> list:
    config_path, exp, cell, overrides, n = task
    cexp = with_overrides(config_path, exp, overrides)
    traces = [r[2] for r in run_sequences(cexp, cell, n)]
    s = summarize(traces, cexp.arness_k)
    ar = _ar_tokens_per_nfe(cexp, n)
    return [cell, *overrides.values(), s.tokens, s.nfe, s.tokens_per_nfe,
            s.tokens_per_nfe / ar if ar else None, s.verify_rate, s.mean_accepted_prefix,
            s.rejection_rate, s.local_arness, s.global_arness]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return " ".join(map(str, v))
    return str(v)


def cmd_sweep(args) -> int:
    exp, sweep = load(args.config, args.seed)
    grid = sweep["grid"]
    keys = list(grid)
    cells = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    n = sweep["n_sequences"]
    tasks = [(args.config, exp, i, ov, n) for i, ov in enumerate(cells)]
    # validate every cell before spending compute
    for t in tasks:
        with_overrides(args.config, exp, t[3])
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    k = exp.arness_k
    header = ["cell", *keys, "tokens", "nfe", "tokens_per_nfe", "speedup_vs_ar", "verify_rate",
              "mean_accepted_prefix", "rejection_rate", f"local_arness@{k}", f"global_arness@{k}"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _write(args.out, buf.getvalue())
    return 0


def cmd_verify_dist(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for V in args.vocab:
        for i in range(args.pairs):
            draft, ver = oracle.random_dist_pair(V, rng)
            _, tv = oracle.mc_committed_token_law(draft, ver, args.gamma, args.samples, rng)
            worst = max(worst, tv)
            print(f"V={V:<3d} pair={i:<3d} gamma={args.gamma:g} tv={tv:.5f}")
    ok = worst <= args.tol
    print(f"{'PASS' if ok else 'FAIL'} max_tv={worst:.5f} tol={args.tol:g}")
    return 0 if ok or not args.assert_ else 1


def cmd_oracle_khat(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.vectors):
        L = int(rng.integers(0, args.max_len + 1))
        alpha = rng.random(L)
        worst = max(worst, abs(expected_prefix(alpha) - oracle.brute_force_expected_prefix(alpha)))
    ok = worst <= KHAT_TOL
    print(f"{'PASS' if ok else 'FAIL'} vectors={args.vectors} max_abs_diff={worst:.3e} tol={KHAT_TOL:g}")
    return 0 if ok else 1


def _write(out: str | None, text: str):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as f:
            f.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfspec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, fn in (("decode", cmd_decode), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=fn)
    p = sub.add_parser("verify-dist", help="Monte Carlo check of the speculative identity")
    p.add_argument("--vocab", type=int, nargs="+", default=[3, 8, 16])
    p.add_argument("--pairs", type=int, default=7)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=TV_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--assert", dest="assert_", action=argparse.BooleanOptionalAction, default=True,
                   help="exit 1 when the tolerance is breached (default on)")
    p.set_defaults(func=cmd_verify_dist)
    p = sub.add_parser("oracle-khat", help="expected prefix vs brute-force enumeration")
    p.add_argument("--vectors", type=int, default=1000)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_khat)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - surface as a runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
