"""Command-line front end.

Subcommands::

    qsemimarkov evolve  --preset two-level --initial + --out run/
    qsemimarkov certify --spec model.json --choi sampled --out run/
    qsemimarkov sample  --preset transport --trajectories 100000 --seed 7 --out run/
    qsemimarkov compare --preset two-level --trajectories 100000 --seed 7 --out run/
    qsemimarkov zoo [--preset NAME --out DIR]

Exit codes: 0 success (or all verdicts pass), 1 a certification verdict
failed, 2 invalid spec or classically invalid sampling request, 3 the grid is
too coarse for the kernel.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .certify import certify as run_certify
from .classical import (
    CLASSICAL_RTOL,
    estimate_populations,
    simulate_ensemble,
    solve_gme,
    waiting_time_table,
    write_trajectories,
)
from .functions import TimeGrid
from .kernel import KernelSpec, SpecError, spec_from_dict, spec_to_dict, validate_spec
from .maps import PSD_RTOL, compute_V, evolve_state, superop_kernel
from .volterra import STEP_GUARD, StepSizeError, check_step
from .zoo import PRESETS, preset

EXIT_OK, EXIT_FAIL, EXIT_SPEC, EXIT_GRID = 0, 1, 2, 3
DEFAULT_H, DEFAULT_STEPS = 1e-3, 5000


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if np.isnan(v) else _fmt(v) for v in row])


def _load(args) -> tuple[KernelSpec, TimeGrid]:
    """Spec and grid from ``--spec`` or ``--preset`` plus grid overrides."""
    if args.preset:
        try:
            p = preset(args.preset)
        except KeyError as exc:
            raise CliError(str(exc.args[0]), EXIT_SPEC) from None
        spec, h, steps = p.descriptor().spec, p.h, p.steps
    else:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read spec {args.spec}: {exc}", EXIT_SPEC) from None
        try:
            spec = spec_from_dict(doc)
        except (SpecError, ValueError) as exc:
            raise CliError(f"invalid spec: {exc}", EXIT_SPEC) from None
        g = doc.get("grid") or {}
        h, steps = float(g.get("h", DEFAULT_H)), int(g.get("steps", DEFAULT_STEPS))
    h = args.h if args.h is not None else h
    steps = args.steps if args.steps is not None else steps
    if h <= 0 or steps < 1:
        raise CliError("grid needs h > 0 and at least one step", EXIT_SPEC)
    grid = TimeGrid(h, steps)
    try:
        validate_spec(spec, grid)
    except SpecError as exc:
        raise CliError(f"invalid spec: {exc}", EXIT_SPEC) from None
    try:
        check_step(superop_kernel(spec), grid, STEP_GUARD)
    except StepSizeError as exc:
        raise CliError(str(exc), EXIT_GRID) from None
    return spec, grid


def _basis_index(spec: KernelSpec, token: str) -> int:
    try:
        return spec.label_index(token)
    except (KeyError, ValueError, IndexError):
        pass
    try:
        n = int(token)
    except ValueError:
        raise CliError(f"unknown basis state {token!r}", EXIT_SPEC) from None
    if not 0 <= n < spec.dimension:
        raise CliError(f"basis index {n} out of range", EXIT_SPEC)
    return n


def _initial_state(spec: KernelSpec, token: str | None) -> np.ndarray:
    """Named basis state (label or index), inline JSON matrix or a JSON file.

    Complex entries are written as ``[re, im]`` pairs.
    """
    d = spec.dimension
    if token is None:
        token = "0"
    text = token
    if token.endswith(".json") and Path(token).exists():
        text = Path(token).read_text()
    if text.lstrip().startswith("["):
        try:
            raw = np.array(json.loads(text), dtype=float)
        except (ValueError, TypeError) as exc:
            raise CliError(f"cannot parse initial state: {exc}", EXIT_SPEC) from None
        rho = raw[..., 0] + 1j * raw[..., 1] if raw.ndim == 3 else raw.astype(complex)
        if rho.shape != (d, d):
            raise CliError(f"initial state must be {d}x{d}", EXIT_SPEC)
        return rho
    n = _basis_index(spec, token)
    rho = np.zeros((d, d), dtype=complex)
    rho[n, n] = 1.0
    return rho


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_evolve(args) -> int:
    spec, grid = _load(args)
    rho0 = _initial_state(spec, args.initial)
    try:
        rho = evolve_state(compute_V(spec, grid), rho0)
    except ValueError as exc:
        raise CliError(f"invalid initial state: {exc}", EXIT_SPEC) from None
    d = spec.dimension
    header, cols = ["t"], [grid.times]
    for n in range(d):
        header.append(f"P_{n}")
        cols.append(rho[:, n, n].real)
    for n in range(d):
        for m in range(n + 1, d):
            header += [f"rho_{n}{m}_re", f"rho_{n}{m}_im"]
            cols += [rho[:, n, m].real, rho[:, n, m].imag]
    herm = 0.5 * (rho + np.swapaxes(rho, 1, 2).conj())
    header += ["trace", "min_eig_rho"]
    cols += [np.einsum("jnn->j", rho).real, np.linalg.eigvalsh(herm)[:, 0]]
    out = _out_dir(args)
    _write_csv(out / "evolve.csv", header, cols)
    print(json.dumps({"command": "evolve", "file": str(out / "evolve.csv"), "rows": len(grid)}))
    return EXIT_OK


def cmd_certify(args) -> int:
    spec, grid = _load(args)
    try:
        report = run_certify(spec, grid, psd_rtol=args.tol_psd, choi=args.choi)
    except SpecError as exc:
        raise CliError(f"invalid spec: {exc}", EXIT_SPEC) from None
    out = _out_dir(args)
    doc = report.to_dict()
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    s = report.series
    header, cols = ["t", "min_eig_G"], [s["t"], s["min_eig_G"]]
    if "min_eig_Gtilde" in s:
        header.append("min_eig_Gtilde")
        cols.append(s["min_eig_Gtilde"])
    if "min_eig_choi" in s:
        choi = np.full(len(grid), np.nan)
        choi[s["choi_index"]] = s["min_eig_choi"]
        header.append("min_eig_choi")
        cols.append(choi)
    _write_csv(out / "eigenvalues.csv", header, cols)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK if report.all_pass else EXIT_FAIL


def _classical_setup(args):
    spec, grid = _load(args)
    if spec.classical is None:
        raise CliError("spec has no classical annotation (pi, k)", EXIT_SPEC)
    pi, k = spec.classical.pi, spec.classical.k
    tables = [waiting_time_table(kn, grid, CLASSICAL_RTOL) for kn in k]
    bad = [(n, tab.first_negative_time) for n, tab in enumerate(tables) if not tab.valid]
    if bad:
        n, t = min(bad, key=lambda x: x[1])
        raise CliError(f"classically invalid: waiting-time density f_{n} turns negative at t={t:.6g}", EXIT_SPEC)
    start = _basis_index(spec, args.initial) if args.initial is not None else 0
    return spec, grid, pi, k, tables, start


def _simulate(args, grid, pi, tables, start):
    records = simulate_ensemble(pi, tables, start, grid.horizon, args.trajectories, args.seed)
    return records, estimate_populations(records, grid, len(tables))


def cmd_sample(args) -> int:
    spec, grid, pi, k, tables, start = _classical_setup(args)
    records, est = _simulate(args, grid, pi, tables, start)
    out = _out_dir(args)
    write_trajectories(records, out / "trajectories.csv")
    d = len(tables)
    header = ["t"] + [f"P_{n}" for n in range(d)] + [f"se_{n}" for n in range(d)]
    cols = [grid.times] + [est.populations[:, n] for n in range(d)] + [est.stderr[:, n] for n in range(d)]
    _write_csv(out / "populations.csv", header, cols)
    print(json.dumps({"command": "sample", "trajectories": args.trajectories, "seed": args.seed,
                      "start": start, "jumps": sum(len(r.times) for r in records)}))
    return EXIT_OK


def deviation_in_se(mc: np.ndarray, se: np.ndarray, exact: np.ndarray, count: int,
                    atol: float = 1e-12) -> np.ndarray:
    """``|mc - exact| / se`` per point.

    Where the empirical standard error vanishes (no hits, or all hits) the
    binomial error of the reference value, ``sqrt(P (1 - P) / count)``, is used
    instead; a point with both errors zero counts as a match when the
    difference is below ``atol``.
    """
    diff = np.abs(mc - exact)
    null = np.sqrt(np.clip(exact * (1 - exact), 0, None) / count)
    scale = np.where(se > 0, se, null)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), np.where(diff <= atol, 0.0, np.inf))


def cmd_compare(args) -> int:
    spec, grid, pi, k, tables, start = _classical_setup(args)
    _, est = _simulate(args, grid, pi, tables, start)
    x0 = np.zeros(len(tables))
    x0[start] = 1.0
    gme = solve_gme(pi, k, grid, x0)
    z = deviation_in_se(est.populations, est.stderr, gme, est.count)
    d = len(tables)
    header = ["t"] + [f"P_mc_{n}" for n in range(d)] + [f"se_{n}" for n in range(d)] \
        + [f"P_gme_{n}" for n in range(d)] + [f"z_{n}" for n in range(d)]
    cols = [grid.times] + list(est.populations.T) + list(est.stderr.T) + list(gme.T) + list(z.T)
    out = _out_dir(args)
    _write_csv(out / "compare.csv", header, cols)
    summary = {"command": "compare", "trajectories": args.trajectories, "seed": args.seed, "start": start,
               "max_deviation_se": float(z.max()), "fraction_within_3se": float(np.mean(z <= 3.0))}
    (out / "compare.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_zoo(args) -> int:
    if not args.preset:
        for p in PRESETS.values():
            print(f"{p.name:24s} {p.regime:16s} h={p.h:g} steps={p.steps}  {p.description}")
        return EXIT_OK
    try:
        p = preset(args.preset)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_SPEC) from None
    doc = spec_to_dict(p.descriptor().spec)
    doc["grid"] = {"h": p.h, "steps": p.steps}
    out = _out_dir(args)
    path = out / f"{p.name}.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print(str(path))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsemimarkov", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_source=True):
        src = p.add_mutually_exclusive_group(required=need_source)
        src.add_argument("--spec", help="kernel spec JSON file")
        src.add_argument("--preset", help=f"zoo preset ({', '.join(PRESETS)})")
        p.add_argument("--h", type=float, default=None, help="time step")
        p.add_argument("--steps", type=int, default=None, help="number of steps")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("evolve", help="evolve an initial state and write observables as CSV")
    common(p)
    p.add_argument("--initial", help="basis label/index, JSON matrix or JSON file (default: state 0)")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("certify", help="complete-positivity report")
    common(p)
    p.add_argument("--tol-psd", type=float, default=PSD_RTOL, help="relative PSD tolerance")
    p.add_argument("--choi", choices=["auto", "full", "sampled", "off"], default="auto")
    p.set_defaults(func=cmd_certify)

    for name, func, text in (("sample", cmd_sample, "Monte Carlo trajectories of the classical process"),
                             ("compare", cmd_compare, "Monte Carlo populations against the GME solution")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--initial", help="start site (label or index, default 0)")
        p.add_argument("--trajectories", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)

    p = sub.add_parser("zoo", help="list presets or export one as a spec file")
    p.add_argument("--preset")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_zoo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except StepSizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRID
    except SpecError as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
