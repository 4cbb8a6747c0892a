"""Command-line front end: one subcommand per operation, JSON reports on disk."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import budget
from .abelian import GroupSpec, parse_group
from .bohr import FrequencySet, NoRegularRadius, bohr_enumerate, bohr_report, find_regular_radius
from .correspondence import local_hk_estimate, ShiftSystem, simulation_report, trend_csv
from .files import read_values, values_to_csv, values_to_json
from .fourier import DenseFunction, dft, u2_extract
from .gowers import GowersTuple, gowers_norm, gowers_power
from .heisenberg import NilsequenceSpec, nilseq_eval
from .hostkra import (AbelianModel, HeisenbergModP, PolynomialMapTable, Prefiltration,
                      TorusFiltration, host_kra_group, is_polynomial)
from .inverse import InverseConfig, PreconditionError, correlate, encode_nilmanifold, extract_phase
from .lift import CertificationError, LocalBilinearForm, build_lift, integrate_local
from .quadratic import FGGroup, GlobalBilinearForm, integrate_global
from .repair import AlmostHomTable, ContractionError, CocycleTable, repair_homomorphism, trivialize_cocycle

OK, ERROR, FLAGGED = 0, 1, 2
VERIFY_TOL = 1e-9
CROSS_CHECK_WORK = 2**22


class _Parser(argparse.ArgumentParser):
    """Malformed command lines are hard errors (exit 1), like malformed inputs."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    group: str | None
    input: str | None
    params: dict
    seed: int
    threads: int
    budget: int
    output: str | None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Outcome:
    headline: dict
    result: dict
    flagged: bool = False
    csv: str | None = None
    notes: list = field(default_factory=list)


# -- argument parsing helpers ------------------------------------------------


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"{what}: cannot parse {text!r} as comma-separated integers") from None


def _freqs(text: str | None, g: GroupSpec) -> FrequencySet:
    """``"1,0;0,2"`` -> {(1,0), (0,2)}; empty means S is empty."""
    if not text:
        return FrequencySet(g, ())
    return FrequencySet(g, tuple(_int_list(part, "freqs") for part in text.split(";") if part.strip()))


def _matrix(text: str, n: int) -> tuple[tuple[Fraction, ...], ...]:
    rows = [r for r in text.split(";") if r.strip()]
    try:
        mat = tuple(tuple(Fraction(v.strip()) for v in r.split(",")) for r in rows)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"beta: cannot parse {text!r} as a ';'-separated matrix of rationals") from None
    if len(mat) != n or any(len(r) != n for r in mat):
        raise ValueError(f"beta: expected a {n}x{n} matrix for a rank-{n} group")
    return mat


def _require(args, name: str):
    v = getattr(args, name)
    if v is None:
        raise ValueError(f"{name}: this subcommand needs --{name.replace('_', '-')}")
    return v


def _group(args) -> GroupSpec:
    return parse_group(_require(args, "group"))


def _function(args, bounded: bool = False) -> DenseFunction:
    if args.input is None:
        raise ValueError("input: no input function file given")
    g = _group(args)
    return DenseFunction(g, read_values(args.input), bounded=bounded)


def _read_json(path: str, what: str):
    text = Path(path).read_text()
    if not text.strip():
        raise ValueError(f"{what}: file {path} is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{what}: {path} is not valid JSON ({exc})") from None


def _read_rows(path: str, what: str) -> list[tuple[int, ...]]:
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{what}: file {path} is empty")
    try:
        return [tuple(int(c) for c in r) for r in rows]
    except ValueError:
        raise ValueError(f"{what}: {path} must hold comma-separated integers") from None


def _read_fractions(path: str, what: str) -> list[Fraction]:
    text = Path(path).read_text()
    if text.lstrip().startswith("["):
        items = _read_json(path, what)
    else:
        items = [t for t in text.replace(",", "\n").split() if t]
    if not items:
        raise ValueError(f"{what}: file {path} is empty")
    try:
        return [Fraction(str(v)) for v in items]
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"{what}: {path} must hold rational numbers") from None


# -- subcommands ---------------------------------------------------------------


def run_norm(args) -> Outcome:
    f = _function(args)
    value = gowers_norm(f, args.d, mode=args.mode, threads=args.threads)
    result = {"norm": value, "power": gowers_power(f, args.d, mode=args.mode, threads=args.threads)}
    other = "naive" if args.mode == "fast" else "fast"
    if f.group.cardinality ** (args.d + 1) <= budget.work_cap(CROSS_CHECK_WORK):
        alt = gowers_norm(f, args.d, mode=other, threads=args.threads)
        result["cross_check"] = {"mode": other, "norm": alt, "difference": abs(alt - value)}
    return Outcome({"norm": value}, result)


def run_dft(args) -> Outcome:
    f = _function(args)
    spec = dft(f, method=args.method, workers=args.threads)
    parseval = float(np.sum(np.abs(spec.values) ** 2))
    energy = float(np.mean(np.abs(f.values) ** 2))
    head = {"parseval": parseval, "max_coefficient": float(np.max(np.abs(spec.values)))}
    result = {"values": values_to_json(spec.values), "energy": energy, "parseval_error": abs(parseval - energy)}
    return Outcome(head, result, csv=values_to_csv(spec.values))


def run_u2_inverse(args) -> Outcome:
    f = _function(args, bounded=True)
    xi, mag = u2_extract(f, args.eta)
    u2 = gowers_norm(f, 2, threads=args.threads)
    flagged = mag < args.eta**2
    head = {"frequency": list(xi), "magnitude": mag}
    return Outcome(head, {"u2_norm": u2, "eta_squared": args.eta**2, "below_threshold": flagged}, flagged)


def run_bohr(args) -> Outcome:
    g = _group(args)
    S = _freqs(args.freqs, g)
    if args.find is not None:
        lo, hi = (Fraction(v) for v in args.find.split(","))
        rho = find_regular_radius(S, lo, hi)
    else:
        rho = _require(args, "rho")
    rep = bohr_report(S, rho)
    flagged = rep["regular"] is False
    return Outcome({"cardinality": rep["cardinality"], "rho": rep["rho"], "regular": rep["regular"]}, rep, flagged)


def run_lift(args) -> Outcome:
    g = _group(args)
    lift = build_lift(_freqs(args.freqs, g))
    rep = lift.report()
    head = {"dim": lift.dim, "kernel_orders": list(lift.kernel_orders), "sandwich_constant": str(lift.sandwich)}
    flagged = False
    if args.rho is not None and lift.dim:
        ok = lift.verify_sandwich(args.rho)
        rep["sandwich_check"] = {"t": str(args.rho), "ok": ok}
        head["sandwich_ok"] = ok
        flagged = not ok
    return Outcome(head, rep, flagged)


def _cocycle_defects(phase, form, g: GroupSpec) -> int:
    budget.check(g.cardinality**2, "integrate identity check")
    elems = [g.element(i) for i in range(g.cardinality)]
    table = {x: phase(x) for x in elems}
    bad = 0
    for x in elems:
        for y in elems:
            if (table[g.add(x, y)] - table[x] - table[y] - form(x, y)) % 1:
                bad += 1
    return bad


def run_integrate(args) -> Outcome:
    g = _group(args)
    form = GlobalBilinearForm(FGGroup.finite(g), _matrix(_require(args, "beta"), g.rank))
    if args.rho is None:
        phase = integrate_global(form)
        bad = _cocycle_defects(phase, form, g)
        head = {"mode": "global", "failures": bad}
        return Outcome(head, {"phase": phase.report(), "pairs_checked": g.cardinality**2}, bad > 0)
    S = _freqs(args.freqs, g)
    domain = bohr_enumerate(S, args.rho)
    B = LocalBilinearForm.from_function(domain, form)
    res = integrate_local(B, build_lift(S))
    head = {"mode": "local", "rho_prime": str(res.rho_prime), "region_size": len(res.phi)}
    out = res.report()
    out["phi"] = [[list(x), str(v)] for x, v in sorted(res.phi.items())]
    return Outcome(head, out)


def _inverse_config(args) -> InverseConfig:
    sets = None
    if args.freqs is not None:
        g = _group(args)
        sets = (_freqs(args.freqs, g).freqs,)
    return InverseConfig(correlation_floor=args.floor, frequency_sets=sets, workers=args.threads)


def run_u3_inverse(args) -> Outcome:
    f = _function(args, bounded=True)
    report = extract_phase(f, args.eta, _inverse_config(args))
    out = report.to_json()
    head = {"correlation": report.correlation, "stage": report.stage, "below_threshold": report.below_threshold}
    if args.nilseq is not None:
        enc = encode_nilmanifold(report, seed=args.seed)
        enc.spec.save(args.nilseq)
        out["encoding"] = {"path": args.nilseq, "correlation": enc.correlation, "normalized": enc.normalized,
                           "identity_error": enc.identity_error, "polynomial": enc.polynomial.ok}
        head["nilsequence_correlation"] = enc.correlation
    return Outcome(head, out, report.below_threshold)


def run_nilseq_eval(args) -> Outcome:
    spec = NilsequenceSpec.load(_require(args, "spec"))
    g = GroupSpec(tuple(spec.group_orders))
    if args.x is not None:
        pts = [g.check(_int_list(args.x, "x"))]
    else:
        budget.check(g.cardinality, "nilsequence evaluation")
        pts = [g.element(i) for i in range(g.cardinality)]
    vals = np.array([nilseq_eval(spec, x) for x in pts])
    head = {"points": len(pts), "max_abs": float(np.max(np.abs(vals)))}
    result = {"points": [list(x) for x in pts], "values": values_to_json(vals)}
    if args.input is not None:
        f = DenseFunction(g, read_values(args.input))
        corr = correlate(f, spec)
        head["correlation"] = abs(corr)
        result["correlation"] = [corr.real, corr.imag]
    return Outcome(head, result, csv=values_to_csv(vals))


def run_hk(args) -> Outcome:
    if args.heisenberg is not None:
        filt = Prefiltration.lower_central_heisenberg(args.heisenberg)
        label = f"heisenberg mod {args.heisenberg}"
    else:
        filt = Prefiltration.abelian(_group(args))
        label = f"abelian {_group(args)}"
    cubes = host_kra_group(filt, args.k)
    head = {"size": len(cubes)}
    return Outcome(head, {"filtration": label, "k": args.k, "degree": filt.degree})


def run_polycheck(args) -> Outcome:
    g = _group(args)
    if args.input is None:
        raise ValueError("input: no table of phase values given")
    vals = _read_fractions(args.input, "input")
    target = TorusFiltration(args.degree)
    depth = args.degree + 1 if args.depth is None else args.depth
    m = PolynomialMapTable(g, target, tuple(v % 1 for v in vals))
    res = is_polynomial(m, depth, samples=args.samples, seed=args.seed)
    wit = None if res.witness is None else [list(x) for x in res.witness]
    head = {"polynomial": res.ok, "witness": wit}
    return Outcome(head, {"mode": res.mode, "tuples": res.tuples, "depth": depth, "degree": args.degree},
                   not res.ok)


def run_repair(args) -> Outcome:
    g = _group(args)
    target = parse_group(_require(args, "target"))
    if args.input is None:
        raise ValueError("input: no homomorphism table given")
    rows = _read_rows(args.input, "input")
    vals = tuple(target.reduce(r) for r in rows)
    res = repair_homomorphism(AlmostHomTable(g, AbelianModel(target), vals))
    head = {"defect": res.defect, "disagreements": len(res.disagreements)}
    return Outcome(head, res.to_json(), res.defect > 0)


def run_cocycle(args) -> Outcome:
    g = _group(args)
    if args.input is None:
        raise ValueError("input: no cocycle file given")
    data = _read_json(args.input, "input")
    try:
        E = [tuple(int(v) for v in x) for x in data["E"]]
        raw = data["values"]
    except (KeyError, TypeError):
        raise ValueError("input: cocycle file needs fields 'E' and 'values'") from None
    vals = np.array([[[0.0] if v is None else (v if isinstance(v, list) else [v]) for v in row] for row in raw],
                    dtype=float)
    c = CocycleTable(g, tuple(E), vals, vals.shape[2] if vals.ndim == 3 else 1)
    try:
        tr = trivialize_cocycle(c, tol=args.tol, eps0=args.eps0)
    except ContractionError as exc:
        return Outcome({"converged": False}, {"error": str(exc), "trace": exc.trace}, True)
    head = {"converged": True, "residual": tr.residual, "iterations": tr.iterations}
    return Outcome(head, tr.to_json(), not tr.norm_bound_ok)


def run_sim(args) -> Outcome:
    g = _group(args)
    ns = _int_list(args.n, "n")
    seeds = list(range(args.seed, args.seed + args.seeds))
    rep = simulation_report(g, args.J, seeds, ns, cap=args.cap, bc_n_max=args.bc_n_max)
    med = [row["median"] for row in rep["trend"]]
    decreasing = all(b < a for a, b in zip(med, med[1:]))
    head = {"medians": med, "decreasing": decreasing, "borel_cantelli": rep["borel_cantelli"]["partial"]}
    if args.hk_n is not None:
        d = len(_int_list(args.hk_n, "hk-n"))
        x = np.arange(g.cardinality)
        f = DenseFunction(g, np.exp(2j * np.pi * x * (x - 1) / 2 / g.cardinality))
        est = local_hk_estimate(ShiftSystem(g, args.J, args.seed, args.cap), GowersTuple.diagonal(f, d),
                                _int_list(args.hk_n, "hk-n"))
        rep["hk_estimate"] = est.to_json()
    return Outcome(head, rep, not decreasing, csv=trend_csv(rep))


RUNNERS = {
    "norm": run_norm,
    "dft": run_dft,
    "u2-inverse": run_u2_inverse,
    "bohr": run_bohr,
    "lift": run_lift,
    "integrate": run_integrate,
    "u3-inverse": run_u3_inverse,
    "nilseq-eval": run_nilseq_eval,
    "hk": run_hk,
    "polycheck": run_polycheck,
    "repair": run_repair,
    "cocycle": run_cocycle,
    "sim": run_sim,
}

# keys of the namespace that describe the run but are not command parameters
_COMMON = ("command", "group", "input", "seed", "threads", "output", "format", "verify")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gowerslab", description="Gowers norms, inverse theorems and nilsequences on finite abelian groups")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, takes_input=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--group", help="group such as Z/4xZ/6")
        if takes_input:
            sp.add_argument("input", nargs="?", help="input file")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--output", help="write the JSON report here")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--verify", metavar="REPORT", help="recompute a saved report and confirm its headline")
        return sp

    sp = add("norm", "Gowers U^d norm of a function")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--mode", choices=("fast", "naive"), default="fast")

    sp = add("dft", "Fourier transform")
    sp.add_argument("--method", choices=("fast", "naive"), default="fast")

    sp = add("u2-inverse", "largest Fourier coefficient")
    sp.add_argument("--eta", type=float, default=0.5)

    sp = add("bohr", "Bohr set cardinality and regularity", takes_input=False)
    sp.add_argument("--freqs", default="", help="frequencies, e.g. '1,0;0,2'")
    sp.add_argument("--rho", type=_fraction)
    sp.add_argument("--find", help="search a regular radius in lo,hi")

    sp = add("lift", "lattice lift of a frequency set", takes_input=False)
    sp.add_argument("--freqs", default="")
    sp.add_argument("--rho", type=_fraction, help="radius for the sandwich check")

    sp = add("integrate", "integrate a bilinear form to a quadratic phase", takes_input=False)
    sp.add_argument("--beta", help="coefficient matrix, rows separated by ';'")
    sp.add_argument("--freqs", default="")
    sp.add_argument("--rho", type=_fraction, help="restrict to a Bohr set (local mode)")

    sp = add("u3-inverse", "locally quadratic phase correlating with f")
    sp.add_argument("--eta", type=float, default=0.5)
    sp.add_argument("--floor", type=float, help="correlation floor (default eta^3)")
    sp.add_argument("--freqs", help="force the frequency set")
    sp.add_argument("--nilseq", help="also write the encoded nilsequence here")

    sp = add("nilseq-eval", "evaluate a saved nilsequence (optional f to correlate)")
    sp.add_argument("--spec", help="nilsequence JSON")
    sp.add_argument("--x", help="a single point, e.g. '3,1'")

    sp = add("hk", "Host-Kra cube group size", takes_input=False)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--heisenberg", type=int, metavar="P", help="use the Heisenberg group mod P")

    sp = add("polycheck", "polynomial-map test for a phase table")
    sp.add_argument("--degree", type=int, default=2)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--samples", type=int, default=10**5)

    sp = add("repair", "repair an almost homomorphism (CSV rows of target coordinates)")
    sp.add_argument("--target", help="target group")

    sp = add("cocycle", "trivialise a near-coboundary (JSON with E and values)")
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--eps0", type=float, default=0.01)

    sp = add("sim", "sampling-gap trend of the correspondence simulation", takes_input=False)
    sp.add_argument("--J", type=int, default=8)
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--n", default="2,3,4,5,6")
    sp.add_argument("--cap", type=int, default=32)
    sp.add_argument("--bc-n-max", type=int, default=30)
    sp.add_argument("--hk-n", help="also estimate a local Host-Kra average with these box sizes")
    return p


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"


def run_config(args) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k not in _COMMON}
    params = json.loads(json.dumps(params, default=_jsonable))
    return RunConfig(args.command, args.group, getattr(args, "input", None), params, args.seed,
                     args.threads, budget.work_cap(), args.output)


def _namespace(cfg: dict) -> argparse.Namespace:
    """Rebuild the runner arguments recorded in a report's config."""
    ns = argparse.Namespace(command=cfg["command"], group=cfg["group"], input=cfg["input"],
                            seed=cfg["seed"], threads=cfg["threads"], output=None)
    for k, v in cfg["params"].items():
        if k == "rho" and v is not None:
            v = Fraction(v)
        setattr(ns, k, v)
    return ns


def _compare(old, new, path: str, out: list) -> None:
    if isinstance(old, dict) and isinstance(new, dict):
        for k in sorted(set(old) | set(new)):
            _compare(old.get(k), new.get(k), f"{path}.{k}", out)
    elif isinstance(old, list) and isinstance(new, list) and len(old) == len(new):
        for i, (a, b) in enumerate(zip(old, new)):
            _compare(a, b, f"{path}[{i}]", out)
    elif isinstance(old, float) or isinstance(new, float):
        ok = (isinstance(old, (int, float)) and isinstance(new, (int, float))
              and not isinstance(old, bool) and abs(old - new) <= VERIFY_TOL * max(1.0, abs(old)))
        if not ok:
            out.append(path)
    elif old != new:
        out.append(path)


def verify_report(path: str, command: str) -> tuple[dict, bool]:
    report = _read_json(path, "verify")
    try:
        cfg = report["config"]
        headline = report["headline"]
    except (KeyError, TypeError):
        raise ValueError(f"verify: {path} is not a gowerslab report (missing config or headline)") from None
    if cfg.get("command") != command:
        raise ValueError(f"verify: report was written by {cfg.get('command')!r}, not {command!r}")
    fresh = RUNNERS[command](_namespace(cfg))
    fresh_head = json.loads(dumps(fresh.headline))
    mismatches: list[str] = []
    _compare(headline, fresh_head, "headline", mismatches)
    return {"verified": not mismatches, "mismatches": mismatches, "headline": fresh_head,
            "tolerance": VERIFY_TOL, "report": path}, not mismatches


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


EXPECTED_ERRORS = (ValueError, KeyError, OSError, MemoryError, budget.BudgetExceeded, NoRegularRadius,
                   CertificationError, PreconditionError, ArithmeticError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else ERROR
    try:
        if args.threads < 1:
            raise ValueError("threads: must be at least 1")
        if args.verify is not None:
            out, ok = verify_report(args.verify, args.command)
            _emit(dumps(out), args.output)
            if not ok:
                print(f"gowerslab: error: headline mismatch in {', '.join(out['mismatches'])}", file=sys.stderr)
            return OK if ok else ERROR
        outcome = RUNNERS[args.command](args)
        report = {"command": args.command, "config": run_config(args).to_json(),
                  "headline": outcome.headline, "result": outcome.result, "flagged": outcome.flagged}
        text = dumps(report)
        if args.output is not None:
            _emit(text, args.output)
        if args.format == "csv" and outcome.csv is not None:
            sys.stdout.write(outcome.csv)
        elif args.format == "csv":
            sys.stdout.write(_headline_csv(outcome.headline))
        elif args.output is None:
            sys.stdout.write(text)
        else:
            sys.stdout.write(dumps(outcome.headline))
    except EXPECTED_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"gowerslab: error: {msg}", file=sys.stderr)
        return ERROR
    return FLAGGED if outcome.flagged else OK


def _headline_csv(head: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    for k in sorted(head):
        v = head[k]
        w.writerow([k, json.dumps(v, default=_jsonable) if isinstance(v, (dict, list)) else v])
    return buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
