"""Command-line driver: ``bccpolar [options] <subcommand>``.

Subcommands
-----------
profile    per-index entropy profiles -> profile_N<N>.csv
sets       build and cache index-set families (one JSON file per N)
rates      rate accounting over N x k from cached sets -> rates.csv
run        end-to-end sessions from cached sets -> run.csv
verify     tiny-N exact oracle (bounds, leakage, residual randomness) -> verify.csv
roundtrip  noiseless self-test of transform, codec and transcript I/O

Exit status: 0 ok, 1 a hard invariant failed, 2 usage error or missing cache.
Every CSV starts with ``#`` comment lines recording the source hash, the
parameter hash and the seed; reruns with the same arguments are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .codec import ChainConfig, encode_session, random_messages, read_transcript, write_transcript
from .experiments import error_rate_experiment, leakage_estimate, noiseless_roundtrip
from .oracle import (MAX_K, MAX_N, DomainTooLarge, check_lemma_bounds, leakage_exact,
                     residual_randomness)
from .sets import (EXACT, MONTE_CARLO, ConstructionError, build_sets, dump_construction,
                   estimate_profiles, load_construction, profiles_csv, rate_report)
from .source import SourceFormatError, load_source, validate
from .transform import check_length, transform

log = logging.getLogger("bccpolar")

OK, FAILED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- plumbing ---------------------------------------------------------------------

def _power_of_two(text):
    try:
        return check_length(int(text))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser():
    p = argparse.ArgumentParser(prog="bccpolar", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"bccpolar {__version__}")
    p.add_argument("--spec", required=True, help="source file, or preset:<name>")
    p.add_argument("--out", default="bccpolar-out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="master RNG seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=1, help="numba worker threads (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n_default, k=False, beta=True, method=True, trials=None):
        sp.add_argument("--N", type=_power_of_two, nargs="+", default=n_default, help="block lengths")
        if k:
            sp.add_argument("--k", type=int, nargs="+", default=k, help="numbers of chained blocks")
        if beta:
            sp.add_argument("--beta", type=float, default=0.25)
        if method:
            sp.add_argument("--method", choices=(EXACT, MONTE_CARLO), default=MONTE_CARLO)
            sp.add_argument("--samples", type=int, default=10_000, help="Monte-Carlo profile samples")
        if trials:
            sp.add_argument("--trials", type=int, default=trials)

    common(sub.add_parser("profile", help="entropy profiles to CSV"), [64], beta=False)
    common(sub.add_parser("sets", help="build and cache set families"), [64])
    common(sub.add_parser("rates", help="rate sweep from cached sets"), [64], k=[1, 2, 4, 16])
    common(sub.add_parser("run", help="error and leakage experiments"), [64], k=[2], trials=1000)
    sp = sub.add_parser("verify", help="tiny-N exact oracle checks")
    common(sp, [2, 4], k=[1, 2], method=False)
    sp = sub.add_parser("roundtrip", help="noiseless self-test")
    common(sp, [8, 64], k=[1, 2, 4], trials=200)
    return p


def _stamp(args, source):
    """Header lines and a short hash identifying this invocation."""
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "threads", "verbose")}
    text = json.dumps(params, sort_keys=True, default=str)
    h = hashlib.sha256(text.encode() + source.digest().encode()).hexdigest()[:16]
    return [
        f"bccpolar {__version__} {args.command}",
        f"source={source.name or 'unnamed'} source_sha256={source.digest()}",
        f"params_sha256={h} seed={args.seed}",
        f"params={text}",
    ]


def _write_csv(path, header, fields, rows):
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    Path(path).write_text(buf.getvalue())
    log.info("wrote %s", path)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return v


def _rng(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([seed, *[int(t) for t in tags]]))


_METHOD_TAG = {EXACT: 1, MONTE_CARLO: 2}


def cache_path(out, source, N, beta, method, samples, seed):
    """Set-family cache file, keyed by (source hash, N, beta, method, samples, seed)."""
    key = json.dumps([source.digest(), N, beta, method, samples if method == MONTE_CARLO else 0, seed])
    return Path(out) / "cache" / f"sets-N{N}-{hashlib.sha256(key.encode()).hexdigest()[:16]}.json"


def profiles_for(source, N, method, samples, seed):
    rng = _rng(seed, N, _METHOD_TAG[method])
    try:
        return estimate_profiles(source, N, method=method, samples=samples, rng=rng)
    except ValueError as e:
        if method != EXACT:
            raise
        raise UsageError(f"N={N}: {e}") from None


def construct(source, N, beta, method, samples, seed):
    profiles = profiles_for(source, N, method, samples, seed)
    return profiles, build_sets(profiles, beta)


def load_sets(args, source, N):
    path = cache_path(args.out, source, N, args.beta, args.method, args.samples, args.seed)
    if not path.exists():
        raise UsageError(f"no cached sets for N={N} ({path}); run the 'sets' subcommand first "
                         "with the same --spec, --seed, --beta, --method and --samples")
    _, sets, meta = load_construction(path.read_text())
    if sets is None:
        log.warning("N=%d: cached construction is %s; skipped", N, meta.get("status", "infeasible"))
    return sets


# --- subcommands ------------------------------------------------------------------

def cmd_profile(args, source, out):
    for N in args.N:
        profiles = profiles_for(source, N, args.method, args.samples, args.seed)
        text = profiles_csv(profiles, _stamp(args, source))
        (out / f"profile_N{N}.csv").write_text(text)
    return OK


def cmd_sets(args, source, out):
    rows = []
    for N in args.N:
        path = cache_path(out, source, N, args.beta, args.method, args.samples, args.seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"source_sha256": source.digest(), "N": N, "beta": args.beta, "method": args.method,
                "samples": args.samples, "seed": args.seed}
        profiles = profiles_for(source, N, args.method, args.samples, args.seed)
        try:
            sets = build_sets(profiles, args.beta)
            status = "ok"
        except ConstructionError as e:
            sets, status = None, f"infeasible: {e}"
            log.warning("N=%d: %s", N, e)
        meta["status"] = status
        path.write_text(dump_construction(profiles, sets, meta))
        row = {"N": N, "status": status, "cache": path.name}
        if sets is not None:
            row.update(sets.sizes())
        rows.append(row)
    fields = ["N", "status", "cache"] + sorted({k for r in rows for k in r} - {"N", "status", "cache"})
    _write_csv(out / "sets.csv", _stamp(args, source), fields, rows)
    return OK


def cmd_rates(args, source, out):
    rows = []
    status = OK
    for N in args.N:
        sets = load_sets(args, source, N)
        if sets is None:
            rows.append({"N": N, "identities_exact": "infeasible"})
            continue
        for k in args.k:
            rep = rate_report(sets, k)
            exact = (rep.sum_om_s == rep.r_o + rep.r_m + rep.r_s and rep.sum_m_r == rep.r_m + rep.r_r
                     and rep.seed_rate == rep.seed_psi + rep.seed_phi)
            if not exact:
                status = FAILED
            row = {"N": N, "k": k, **rep.as_floats(), "identities_exact": exact}
            row.update({f"{key}_frac": str(getattr(rep, key)) for key in ("r_o", "r_s", "r_m", "r_r", "seed_psi")})
            rows.append(row)
    fields = ["N", "k", "r_o", "r_s", "r_m", "r_r", "seed_rate", "seed_psi", "seed_phi", "public_rate",
              "codebook_u", "sum_om_s", "sum_m_r", "identities_exact",
              "r_o_frac", "r_s_frac", "r_m_frac", "r_r_frac", "seed_psi_frac"]
    _write_csv(out / "rates.csv", _stamp(args, source), fields, rows)
    return status


def cmd_run(args, source, out):
    rows = []
    for N in args.N:
        sets = load_sets(args, source, N)
        if sets is None:
            rows.append({"name": "construction", "N": N, "seed": args.seed, "note": "infeasible, skipped"})
            continue
        for k in args.k:
            config = ChainConfig(source, sets, k)
            rates = error_rate_experiment(config, args.trials, _rng(args.seed, N, k, 1))
            for name, r in rates.items():
                rows.append({"name": f"error_{name}", "value": r.value, "low": r.low, "high": r.high,
                             "N": N, "k": k, "seed": args.seed, "trials": args.trials})
            est = leakage_estimate(config, args.trials, _rng(args.seed, N, k, 2))
            rows.append({"name": f"leakage_{est.summary}", "value": est.value, "low": 0.0, "high": est.null_high,
                         "N": N, "k": k, "seed": args.seed, "trials": args.trials,
                         "note": f"plug-in; bias under independence {est.bias:.3g} bits"})
    _write_csv(out / "run.csv", _stamp(args, source),
               ["name", "value", "low", "high", "N", "k", "seed", "trials", "note"], rows)
    return OK


def cmd_verify(args, source, out):
    rows, failed = [], False
    for N in args.N:
        if N > MAX_N:
            raise UsageError(f"verify needs N <= {MAX_N}")
        try:
            _, sets = construct(source, N, args.beta, EXACT, 0, args.seed)
        except ConstructionError as e:
            rows.append({"name": "construction", "N": N, "satisfied": False, "hard": False, "note": str(e)})
            continue
        for k in args.k:
            if k > MAX_K:
                raise UsageError(f"verify needs k <= {MAX_K}")
            config = ChainConfig(source, sets, k)
            reports = check_lemma_bounds(config, checks=("U", "UV", "XV"))
            try:
                reports += check_lemma_bounds(config, checks=("UVXYZ",))
            except DomainTooLarge as e:
                rows.append({"name": "var_UVXYZ", "N": N, "k": k, "satisfied": "", "hard": False,
                             "note": f"skipped: {e}"})
            try:
                reports += leakage_exact(config).bounds()
            except DomainTooLarge as e:
                rows.append({"name": "leakage", "N": N, "k": k, "satisfied": "", "hard": False,
                             "note": f"skipped: {e}"})
            for r in reports:
                failed |= r.hard and not r.satisfied
                rows.append(r.row())
            for vec in "abt":
                for i in range(1, k + 1):
                    a = residual_randomness(config, vec, i, "exact").value
                    b = residual_randomness(config, vec, i, "kernel").value
                    ok = abs(a - b) <= 1e-9
                    failed |= not ok
                    rows.append({"name": f"residual_{vec}", "lhs": a, "rhs": b, "N": N, "k": k, "block": i,
                                 "satisfied": ok, "hard": True, "note": "marginal entropies vs kernel posteriors"})
    for r in rows:
        r.setdefault("seed", args.seed)
        r.setdefault("trials", 0)
    _write_csv(out / "verify.csv", _stamp(args, source),
               ["name", "lhs", "rhs", "satisfied", "hard", "N", "k", "block", "seed", "trials", "note"], rows)
    return FAILED if failed else OK


def cmd_roundtrip(args, source, out):
    rows, failed = [], False
    rng = _rng(args.seed, 0)
    for N in args.N:
        x = rng.integers(0, 2, size=(64, N), dtype=np.uint8)
        ok = bool(np.array_equal(transform(transform(x)), x))
        failed |= not ok
        rows.append({"check": "transform_involution", "N": N, "k": "", "errors": int(not ok), "note": ""})
        method = EXACT if N <= 8 else MONTE_CARLO
        try:
            _, sets = construct(source, N, args.beta, method, args.samples, args.seed)
        except ConstructionError as e:
            rows.append({"check": "construction", "N": N, "k": "", "errors": 0, "note": f"infeasible, skipped: {e}"})
            continue
        for k in args.k:
            config = ChainConfig(source, sets, k)
            counts = noiseless_roundtrip(config, args.trials, _rng(args.seed, N, k))
            for name, c in counts.items():
                failed |= c != 0
                rows.append({"check": name, "N": N, "k": k, "errors": c, "note": ""})
            tr = encode_session(config, random_messages(config, 4, _rng(args.seed, N, k, 3)), _rng(args.seed, N, k, 4))
            with tempfile.TemporaryDirectory() as tmp:
                path = Path(tmp) / "t.bin"
                write_transcript(path, tr, config.digest())
                head, sec = read_transcript(path)
            same = head["N"] == N and np.array_equal(sec["b"], tr.b) and np.array_equal(sec["x"], tr.x)
            failed |= not same
            rows.append({"check": "transcript_io", "N": N, "k": k, "errors": int(not same), "note": ""})
    _write_csv(out / "roundtrip.csv", _stamp(args, source), ["check", "N", "k", "errors", "note"], rows)
    return FAILED if failed else OK


COMMANDS = {
    "profile": cmd_profile, "sets": cmd_sets, "rates": cmd_rates,
    "run": cmd_run, "verify": cmd_verify, "roundtrip": cmd_roundtrip,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("bccpolar: --threads must be >= 1", file=sys.stderr)
        return USAGE
    if kernels.BACKEND == "numba":
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        source = load_source(args.spec)
    except (OSError, SourceFormatError, ValueError, KeyError) as e:
        print(f"bccpolar: cannot load source: {e}", file=sys.stderr)
        return USAGE
    report = validate(source)
    if not report.ok:
        print("bccpolar: invalid source: " + "; ".join(report.violations), file=sys.stderr)
        return USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, source, out)
    except UsageError as e:
        print(f"bccpolar: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
