"""Command-line front end.

Exit codes: 0 success, 1 solver failure, 2 invalid input, 3 verification gap.
``CONDBOUND_SOLVER_TOL`` overrides the conic solver tolerance.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import closedform as cf
from . import dro, figures, oracle, sos
from .conic import SolverSettings
from .errors import CondboundError, InvalidInput, SolverFailure
from .model import (INF, AmbiguitySpec, FullSpace, HalfLine, Interval, MomentSpec,
                    PiecewisePolynomial, Status, Symmetric, SymmetricUnimodal, Unstructured,
                    mean_variance_spec)

PP = PiecewisePolynomial
EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_GAP = 0, 1, 2, 3


def fmt(x) -> str:
    """Nine significant digits; keeps CSV output stable across runs."""
    if x is None or x == "":
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(f"{x:.9g}"))


def write_csv(rows: list[dict], path: str | None) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if path and path != "-":
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def digest(cert) -> str | None:
    if cert is None:
        return None
    return hashlib.sha256(",".join(fmt(c) for c in cert).encode()).hexdigest()[:16]


def envelope(command: str, status: str, value, cert=None, wall_ms: float = 0.0, **extra) -> dict:
    v = None if value is None or not math.isfinite(value) else float(fmt(value))
    out = {"command": command, "status": status, "value": v,
           "certificate_digest": digest(cert), "timings": {"wall_ms": round(wall_ms, 3)}}
    out.update(extra)
    return out


def settings_from_env() -> SolverSettings:
    tol = os.environ.get("CONDBOUND_SOLVER_TOL")
    if tol is None:
        return SolverSettings()
    try:
        return SolverSettings(tol=float(tol))
    except ValueError:
        raise InvalidInput(f"CONDBOUND_SOLVER_TOL is not a number: {tol!r}") from None


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------

def _num(x) -> float:
    return INF if x is None or x == "inf" else -INF if x == "-inf" else float(x)


def parse_event(d: dict):
    kind = d.get("type", "ge")
    if kind in ("ge", "le"):
        return HalfLine(float(d["threshold"]), kind)
    if kind == "interval":
        return Interval(_num(d["lo"]), _num(d["hi"]))
    if kind == "full":
        return FullSpace()
    raise InvalidInput(f"unknown event type {kind!r}")


def parse_objective(d: dict) -> PiecewisePolynomial:
    kind = d.get("type", "identity")
    if kind == "identity":
        return PP.identity()
    if kind == "step":
        return PP.step(float(d["c"]))
    if kind == "stop_loss":
        return PP.stop_loss(float(d["c"]))
    if kind == "polynomial":
        return PP.polynomial(d["coeffs"])
    if kind == "constant":
        return PP.constant(float(d["c"]))
    raise InvalidInput(f"unknown objective type {kind!r}")


def parse_structure(name: str | None, center: float):
    if name in (None, "none"):
        return Unstructured()
    if name == "symmetric":
        return Symmetric(center)
    if name == "symmetric_unimodal":
        return SymmetricUnimodal(center)
    raise InvalidInput(f"unknown structure {name!r}")


def load_instance(path: str) -> sos.DualBoundProblem:
    """JSON with ``moments`` (power moments from order 0), optional
    ``structure``, ``support`` ``[lo, hi]`` (null for infinite), ``event`` and
    ``objective``."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read instance {path}: {exc}") from None
    try:
        mom = [float(x) for x in d["moments"]]
        lo, hi = d.get("support", [None, None])
        support = (-INF if lo is None else float(lo), INF if hi is None else float(hi))
        structure = parse_structure(d.get("structure"), mom[1] if len(mom) > 1 else 0.0)
        return sos.DualBoundProblem(MomentSpec.power(mom), parse_event(d.get("event", {"type": "full"})),
                                    parse_objective(d.get("objective", {})), structure, support)
    except (KeyError, TypeError, IndexError) as exc:
        raise InvalidInput(f"malformed instance: {exc}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

PROPS = ("mean-variance", "mean-mad", "symmetric", "symmetric-unimodal", "tail-probability")


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise InvalidInput("missing " + ", ".join("--" + n.replace("_", "-") for n in missing))


def closed_form(args) -> cf.ClosedFormAnswer:
    if args.prop == "mean-variance":
        _need(args, "mu", "sigma", "t")
        return cf.bound_mean_variance(args.mu, args.sigma, args.t)
    if args.prop == "mean-mad":
        _need(args, "mu", "d", "a", "b", "t")
        return cf.bound_mean_mad(args.mu, args.d, args.a, args.b, args.t)
    if args.prop == "symmetric":
        _need(args, "mu", "sigma", "t")
        return cf.bound_symmetric(args.mu, args.sigma, args.t)
    if args.prop == "symmetric-unimodal":
        _need(args, "mu", "sigma", "t")
        return cf.bound_symmetric_unimodal(args.mu, args.sigma, args.t)
    _need(args, "mu", "sigma", "p", "z")
    return cf.bound_conditional_tail_probability(args.mu, args.sigma, args.p, args.z)


def cmd_bound(args, settings) -> int:
    t0 = time.perf_counter()
    if args.instance:
        res = sos.dual_bound(load_instance(args.instance), settings)
        extra = {}
    elif args.prop:
        ans = closed_form(args)
        res = ans.result
        extra = {"branch": int(ans.branch)}
    else:
        raise InvalidInput("bound needs --prop or --instance")
    ms = 1e3 * (time.perf_counter() - t0)
    print(fmt(res.value))
    _emit(args, envelope("bound", res.status.value, res.value, res.dual_certificate, ms, **extra))
    write_rows(args, [{"value": res.value, "status": res.status.value, "gap": res.gap,
                       "wall_ms": ms if args.timings else ""}])
    return EXIT_SOLVER if res.status is Status.NUMERICAL_TROUBLE else EXIT_OK


def write_rows(args, rows):
    if args.out:
        write_csv(rows, args.out)


def _emit(args, env: dict):
    if args.json:
        text = json.dumps(env, indent=2, sort_keys=True)
        if args.json == "-":
            print(text)
        else:
            Path(args.json).write_text(text + "\n")


def cmd_sweep(args, settings) -> int:
    t0 = time.perf_counter()
    ms = [args.m] if args.m else [2, 4, 6]
    if args.figure == 2:
        pts = figures.uniform_tail_curves(ms, step=args.step, settings=settings)
    else:
        structs = [args.structure] if args.structure else list(figures.STRUCTURES)
        pts = figures.normal_mean_curves(ms, structs, settings=settings)
    rows = [p.csv(args.timings) for p in pts]
    if args.figure == 3:
        for r in rows:
            r.pop("c")
    write_csv(rows, args.out or "-")
    bad = [p for p in pts if p.result.status is Status.NUMERICAL_TROUBLE]
    _emit(args, envelope("sweep", "numerical_trouble" if bad else "ok", None, None,
                         1e3 * (time.perf_counter() - t0), rows=len(rows)))
    return EXIT_SOLVER if bad else EXIT_OK


def cmd_oracle(args, settings) -> int:
    t0 = time.perf_counter()
    if args.instance:
        prob = load_instance(args.instance)
        spec = AmbiguitySpec(prob.moments, None, prob.structure, (prob.support,))
        event, g = prob.event, prob.objective
    else:
        _need(args, "mu", "sigma", "t")
        structure = parse_structure(args.structure, args.mu)
        spec = mean_variance_spec(args.mu, args.sigma, structure=structure)
        event, g = HalfLine(args.t), PP.identity()
    grid = oracle.default_grid(spec, args.points, args.width)
    res = oracle.primal_lp(spec, event, g, grid)
    ms = 1e3 * (time.perf_counter() - t0)
    print(fmt(res.value))
    atoms = [[fmt(w), type(c).__name__, repr(c)] for w, c in res.extremal.components]
    _emit(args, envelope("oracle", res.status.value, res.value, res.dual_certificate, ms,
                         event_mass=res.event_mass, components=atoms))
    return EXIT_OK


def verify_closedform(n: int, seed: int, points: int) -> list[dict]:
    """Randomised closed form vs grid oracle; the oracle may never exceed the bound."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n):
        mu, sigma = rng.uniform(-10, 10), rng.uniform(0.1, 5)
        t = mu - sigma * rng.uniform(0.1, 3)
        for name, fn, st in (("mean-variance", cf.bound_mean_variance, Unstructured()),
                             ("symmetric", cf.bound_symmetric, Symmetric(mu)),
                             ("symmetric-unimodal", cf.bound_symmetric_unimodal,
                              SymmetricUnimodal(mu))):
            ref = fn(mu, sigma, t).value
            spec = mean_variance_spec(mu, sigma, structure=st)
            grid = oracle.default_grid(spec, points, 12.0)
            got = oracle.primal_lp(spec, HalfLine(t), PP.identity(), grid).value
            ok = got <= ref + 1e-6 and ref - got <= max(1e-3, 1e-3 * abs(ref))
            rows.append({"case": k, "prop": name, "mu": mu, "sigma": sigma, "t": t,
                         "closed_form": ref, "oracle": got, "status": "pass" if ok else "fail"})
    return rows


def verify_sdp(n: int, seed: int, points: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n):
        m = int(rng.choice([2, 4, 6]))
        mom = sos.normal_moments(0.0, 1.0, m)
        t = float(rng.uniform(-2.0, -0.2))
        prob = sos.DualBoundProblem(MomentSpec.power(mom), HalfLine(t), PP.identity())
        res = sos.dual_bound(prob)
        spec = AmbiguitySpec(MomentSpec.power(mom))
        ref = oracle.refine_until(spec, HalfLine(t), PP.identity(),
                                  max(1e-4, 1e-3 * abs(res.value)), res.value,
                                  oracle.default_grid(spec, points, 12.0), 4 * points)
        ok = ref.closed and ref.result.value <= res.value + 1e-6
        rows.append({"case": k, "m": m, "t": t, "dual": res.value, "oracle": ref.result.value,
                     "status": "pass" if ok else "fail"})
    return rows


def cmd_verify(args, settings) -> int:
    t0 = time.perf_counter()
    suite = verify_closedform if args.suite == "closedform" else verify_sdp
    rows = suite(args.n, args.seed, args.points)
    write_csv(rows, args.out or "-")
    fails = sum(r["status"] != "pass" for r in rows)
    _emit(args, envelope("verify", "fail" if fails else "pass", None, None,
                         1e3 * (time.perf_counter() - t0), cases=len(rows), failures=fails))
    if fails:
        print(f"{fails} of {len(rows)} checks failed", file=sys.stderr)
        return EXIT_GAP
    return EXIT_OK


def cmd_pricing(args, settings) -> int:
    _need(args, "mu", "sigma")
    t0 = time.perf_counter()
    p, regret = cf.optimal_regret_price(args.mu, args.sigma)
    print(f"{fmt(p)} {fmt(regret)}")
    _emit(args, envelope("pricing", "tight", regret, None, 1e3 * (time.perf_counter() - t0),
                         price=p))
    write_rows(args, [{"mu": args.mu, "sigma": args.sigma, "price": p, "regret": regret,
                       "status": "tight"}])
    return EXIT_OK


def cmd_newsvendor(args, settings) -> int:
    t0 = time.perf_counter()
    thr = None if args.threshold is None else args.threshold
    if args.optimize:
        inst = dro.newsvendor_instance(rho=args.rho, h=args.h, p=args.p, threshold=thr,
                                       dispersion=args.dispersion)
        solver = dro.chebyshev_contextual if args.dispersion == "chebyshev" else dro.mad_contextual
        q, res = solver(inst, None, settings)
        print(f"{fmt(q[0]) if q is not None else 'nan'} {fmt(res.value)}")
        _emit(args, envelope("newsvendor", res.status.value, res.value, res.dual_certificate,
                             1e3 * (time.perf_counter() - t0),
                             order=None if q is None else float(q[0])))
        return EXIT_OK if res.status is Status.TIGHT else EXIT_SOLVER
    qs = np.linspace(args.q_min, args.q_max, args.q_points)
    rows = dro.newsvendor_sweep(qs, args.rho, thr, h=args.h, p=args.p,
                                dispersion=args.dispersion, settings=settings)
    write_csv([r.csv() for r in rows], args.out or "-")
    bad = any(r.status != "tight" for r in rows)
    _emit(args, envelope("newsvendor", "numerical_trouble" if bad else "ok", None, None,
                         1e3 * (time.perf_counter() - t0), rows=len(rows)))
    return EXIT_SOLVER if bad else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condbound",
                                 description="Tight moment bounds on conditional expectations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="CSV output path ('-' for stdout)")
        p.add_argument("--json", help="JSON result envelope path ('-' for stdout)")
        p.add_argument("--timings", action="store_true", help="fill the wall_ms column")

    b = sub.add_parser("bound", help="closed-form or SDP bound for one instance")
    b.add_argument("--prop", choices=PROPS)
    b.add_argument("--instance", help="JSON instance for the SDP route")
    for name in ("mu", "sigma", "t", "d", "a", "b", "p", "z"):
        b.add_argument(f"--{name}", type=float)
    common(b)

    s = sub.add_parser("sweep", help="threshold sweeps behind the tail and normal figures")
    s.add_argument("--figure", type=int, choices=(2, 3), required=True)
    s.add_argument("--m", type=int, choices=(2, 4, 6))
    s.add_argument("--structure", choices=tuple(figures.STRUCTURES))
    s.add_argument("--step", type=float, default=0.25, help="tail-level step for the tail-probability sweep")
    common(s)

    o = sub.add_parser("oracle", help="discretised primal LP")
    o.add_argument("--instance")
    o.add_argument("--mu", type=float)
    o.add_argument("--sigma", type=float)
    o.add_argument("--t", type=float)
    o.add_argument("--structure", choices=tuple(figures.STRUCTURES))
    o.add_argument("--points", type=int, default=2 ** 13 + 1)
    o.add_argument("--width", type=float, default=12.0, help="grid half-width in std units")
    common(o)

    v = sub.add_parser("verify", help="randomised cross-checks")
    v.add_argument("--suite", choices=("closedform", "sdp"), default="closedform")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--n", type=int, default=20)
    v.add_argument("--points", type=int, default=2 ** 13 + 1)
    common(v)

    pr = sub.add_parser("pricing", help="minimax-regret price")
    pr.add_argument("--mu", type=float)
    pr.add_argument("--sigma", type=float)
    common(pr)

    n = sub.add_parser("newsvendor", help="contextual newsvendor bounds")
    n.add_argument("--rho", type=float, default=0.0)
    n.add_argument("--threshold", type=float, default=1.0,
                   help="event {Z >= threshold}")
    n.add_argument("--full-space", dest="threshold", action="store_const", const=None)
    n.add_argument("--h", type=float, default=1.0)
    n.add_argument("--p", type=float, default=5.0)
    n.add_argument("--dispersion", choices=("chebyshev", "mad"), default="chebyshev")
    n.add_argument("--q-min", type=float, default=2.0)
    n.add_argument("--q-max", type=float, default=9.0)
    n.add_argument("--q-points", type=int, default=50)
    n.add_argument("--optimize", action="store_true", help="minimise over the order quantity")
    common(n)
    return ap


COMMANDS = {"bound": cmd_bound, "sweep": cmd_sweep, "oracle": cmd_oracle,
            "verify": cmd_verify, "pricing": cmd_pricing, "newsvendor": cmd_newsvendor}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = settings_from_env()
        return COMMANDS[args.command](args, settings)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverFailure, CondboundError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
