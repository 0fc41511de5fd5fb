"""Batch driver: every experiment as a subcommand with file I/O.

Output is a single JSON object on stdout (sorted keys, so identical
configuration and seed give byte-identical bytes).  Exit codes: 0 success,
1 input error, 2 invariant violation.  Every subcommand accepts
``--selftest`` to run its module's invariant suite with the given seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import central_ext as ce
from . import dirac1d as d1
from . import fock
from . import linop
from . import loopgroup as lg
from . import polarization as pol
from . import sampling
from . import transport

OUTDIR_ENV = "POLARFOCK_OUTDIR"


class InputError(Exception):
    pass


def _c(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _load_json(path: str) -> dict:
    if path is None:
        raise InputError("missing required input file")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _operator(path: str) -> linop.PolarizedOperator:
    try:
        return linop.operator_from_json(_load_json(path))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _outdir() -> str:
    return os.environ.get(OUTDIR_ENV, ".")


# ---------------------------------------------------------------------------
# subcommands


def cmd_ss_check(args) -> dict:
    if args.selftest:
        return _selftest_ss(args)
    op = _operator(args.op)
    hs_pm, hs_mp, hs_comm = linop.ss_defect(op)
    resid = abs(0.25 * hs_comm**2 - hs_pm**2 - hs_mp**2)
    return {
        "hs_pm": hs_pm,
        "hs_mp": hs_mp,
        "hs_comm": hs_comm,
        "identity_resid": resid,
        "eps_norm": linop.eps_norm(op),
    }


def cmd_cocycle(args) -> dict:
    if args.selftest:
        return _selftest_cocycle(args)
    rng = sampling.rng_from_seed(args.seed)
    window = linop.ModeWindow(4, 4)
    if args.op and args.op2:
        x, y = _operator(args.op), _operator(args.op2)
    else:
        x = sampling.random_antihermitian(rng, window, 0.5)
        y = sampling.random_antihermitian(rng, window, 0.5)
    value = ce.schwinger_cocycle(x, y)
    fd = ce.cocycle_from_chi(x, y, h=1e-3)
    return {
        "schwinger": _c(value),
        "finite_difference": _c(fd),
        "difference": abs(value - fd),
        "seed": args.seed,
    }


def cmd_implement(args) -> dict:
    if args.selftest:
        return _selftest_implement(args)
    op = _operator(args.op)
    if op.window.dim > 8:
        raise InputError("implement expects a window of dimension <= 8")
    gamma = fock.bogoliubov_implement(op)
    vac = fock.FockVector.vacuum(op.window)
    out = gamma.apply(vac).chop(1e-14)
    dev = fock.verify_intertwining(gamma, op)
    kd = fock.kernel_dims(op)
    return {
        "transformed_vacuum": fock.vector_to_json(out),
        "intertwining": dev,
        "kernel_dims": list(kd),
    }


def cmd_transport(args) -> dict:
    if args.selftest:
        return _selftest_transport(args)
    path = transport.path_from_json(_load_json(args.path))
    res = transport.parallel_transport(path, variant=args.variant)
    return {
        "phase": _c(res.phase),
        "det_q": _c(res.det_q),
        "order": res.order,
        "steps": res.steps,
        "variant": res.variant,
    }


def cmd_holonomy(args) -> dict:
    if args.selftest:
        args.delta, args.nodes = 0.25, 256
    phase = transport.holonomy_loop(args.delta, args.nodes)
    target = np.exp(2j * np.pi * args.delta)
    return {
        "phase": _c(phase),
        "target": _c(target),
        "err": abs(phase - target),
        "nodes": args.nodes,
        "delta": args.delta,
    }


def cmd_loopgroup(args) -> dict:
    if args.selftest:
        return _selftest_loopgroup(args)
    h = lg.fourier_from_json(_load_json(args.fourier)) if args.fourier else lg.sine()
    g = lg.fourier_from_json(_load_json(args.fourier2)) if args.fourier2 else lg.cosine()
    value = lg.loop_cocycle(h, g)
    band = max(h.band, g.band)
    window = linop.ModeWindow(max(8, 2 * band), max(8, 2 * band))
    win_val = lg.window_cocycle(h, g, window)
    return {
        "cocycle": _c(value),
        "window_cocycle": _c(win_val),
        "window": [window.neg_count, window.pos_count],
        "hs_offdiag": [lg.hs_offdiag_norm(h), lg.hs_offdiag_norm(g)],
    }


def _scan_rows(model, fieldcfg, t0, t1, cutoffs, jobs):
    def one(n_cut):
        from dataclasses import replace

        scaled = replace(model, cutoff=int(n_cut))
        rep = d1.renormalized_evolution(scaled, fieldcfg, t0, t1,
                                        rtol=1e-10, atol=1e-11)
        return {
            "cutoff": int(n_cut),
            "raw_defect": rep.extras["raw_defect"],
            "ren_defect": rep.extras["ren_defect"],
            "unitarity": rep.unitarity,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, cutoffs))
    else:
        rows = [one(n) for n in cutoffs]
    return sorted(rows, key=lambda r: r["cutoff"])


def cmd_dirac1d(args) -> dict | str:
    if args.selftest:
        return _selftest_dirac1d(args)
    try:
        model, fieldcfg = d1.config_from_json(_load_json(args.config))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    t_on, t_off = fieldcfg.support()
    t0, t1 = t_on - 0.2, 0.5 * (t_on + t_off)
    cutoffs = [int(c) for c in args.cutoffs.split(",")] if args.cutoffs else [model.cutoff]
    rows = _scan_rows(model, fieldcfg, t0, t1, cutoffs, args.jobs)
    if args.csv:
        lines = ["cutoff,raw_defect,ren_defect,unitarity"]
        for r in rows:
            lines.append(
                f"{r['cutoff']},{r['raw_defect']!r},{r['ren_defect']!r},{r['unitarity']!r}"
            )
        return "\n".join(lines)
    return {
        "t0": t0,
        "t1": t1,
        "scan": rows,
        "seed": args.seed,
    }


def cmd_pipeline(args) -> dict:
    if args.selftest:
        return _selftest_pipeline(args)
    try:
        model, fieldcfg = d1.config_from_json(_load_json(args.config))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    res = d1.scattering_pipeline(model, fieldcfg, nodes=args.nodes or 257)
    return {
        "phase": _c(res.phase),
        "tau_phase": _c(res.tau_phase),
        "intertwining": res.intertwining,
        "compression_defect": res.compression_defect,
        "vacuum_overlap": _c(res.vacuum_overlap),
        "unitarity": res.report.unitarity,
    }


# ---------------------------------------------------------------------------
# selftest suites (seeded module invariants)


def _check(table, name, value, tol):
    table[name] = {"value": value, "tol": tol, "pass": bool(value <= tol)}


def _selftest_ss(args) -> dict:
    rng = sampling.rng_from_seed(args.seed)
    window = linop.ModeWindow(6, 6)
    checks: dict = {}
    worst = 0.0
    for _ in range(20):
        u = sampling.haar_unitary(rng, window)
        hs_pm, hs_mp, hs_comm = linop.ss_defect(u)
        worst = max(worst, abs(0.25 * hs_comm**2 - hs_pm**2 - hs_mp**2))
    _check(checks, "ss_identity", worst, 1e-12)
    sub = 0.0
    for _ in range(10):
        a = sampling.random_operator(rng, window)
        b = sampling.random_operator(rng, window)
        sub = max(sub, linop.eps_norm(a @ b) - linop.eps_norm(a) * linop.eps_norm(b))
    _check(checks, "eps_norm_submultiplicative", max(sub, 0.0), 1e-9)
    det_dev = 0.0
    for _ in range(10):
        a = sampling.gaussian_matrix(rng, 5)
        b = sampling.gaussian_matrix(rng, 5)
        lhs = linop.fredholm_det(a @ b)
        rhs = linop.fredholm_det(a) * linop.fredholm_det(b)
        det_dev = max(det_dev, abs(lhs - rhs) / max(abs(lhs), 1e-30))
    _check(checks, "det_multiplicative", det_dev, 1e-10)
    return {"selftest": "ss-check", "seed": args.seed, "checks": checks}


def _selftest_cocycle(args) -> dict:
    rng = sampling.rng_from_seed(args.seed)
    window = linop.ModeWindow(3, 3)
    checks: dict = {}
    worst = 0.0
    for _ in range(10):
        x, y, z = (sampling.random_tau_domain_unitary(rng, window) for _ in range(3))
        lhs = ce.group_cocycle_chi(x, y) * ce.group_cocycle_chi(x @ y, z)
        rhs = ce.group_cocycle_chi(x, y @ z) * ce.group_cocycle_chi(y, z)
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    _check(checks, "chi_identity", worst, 1e-10)
    fd_dev = 0.0
    for _ in range(3):
        x = sampling.random_antihermitian(rng, window, 0.5)
        y = sampling.random_antihermitian(rng, window, 0.5)
        fd_dev = max(
            fd_dev, abs(ce.cocycle_from_chi(x, y) - ce.schwinger_cocycle(x, y))
        )
    _check(checks, "finite_difference", fd_dev, 1e-6)
    return {"selftest": "cocycle", "seed": args.seed, "checks": checks}


def _selftest_implement(args) -> dict:
    rng = sampling.rng_from_seed(args.seed)
    window = linop.ModeWindow(2, 2)
    checks: dict = {}
    worst = 0.0
    for _ in range(5):
        u = sampling.haar_unitary(rng, window)
        try:
            gamma = fock.bogoliubov_implement(u)
        except fock.DegenerateVacuumError:
            continue
        worst = max(worst, fock.verify_intertwining(gamma, u))
    _check(checks, "intertwining", worst, 1e-10)
    return {"selftest": "implement", "seed": args.seed, "checks": checks}


def _selftest_transport(args) -> dict:
    rng = sampling.rng_from_seed(args.seed)
    window = linop.ModeWindow(2, 2)
    path = sampling.smooth_unitary_path(rng, window, 241, strength=0.4)
    checks: dict = {}
    _check(checks, "semigroup", transport.check_semigroup(path, 0, 120, 240), 1e-8)
    res = transport.parallel_transport(path)
    _check(checks, "unitary_phase", abs(abs(res.det_q) - 1.0), 1e-7)
    return {"selftest": "transport", "seed": args.seed, "checks": checks}


def _selftest_loopgroup(args) -> dict:
    checks: dict = {}
    value = lg.loop_cocycle(lg.sine(), lg.cosine())
    _check(checks, "witness_value", abs(value - 0.5j), 1e-12)
    window = linop.ModeWindow(8, 8)
    _check(
        checks,
        "window_matches",
        abs(lg.window_cocycle(lg.sine(), lg.cosine(), window) - value),
        1e-10,
    )
    return {"selftest": "loopgroup", "seed": args.seed, "checks": checks}


def _selftest_dirac1d(args) -> dict:
    model = d1.LatticeModel(mass=1.0, box=2 * np.pi, cutoff=3, coupling=0.4)
    env = d1.Envelope("bump", -1.0, 1.0, 1.0)
    comp = d1.FieldComponent(lg.from_coefficients({1: 0.3, -1: 0.3}), env)
    fieldcfg = d1.FieldConfig(a1=comp)
    checks: dict = {}
    rep_o = d1.evolve(model, fieldcfg, -1.2, 1.2, method="ode")
    rep_d = d1.evolve(model, fieldcfg, -1.2, 1.2, method="dyson")
    diff = float(np.linalg.norm(rep_o.final.entries - rep_d.final.entries, 2))
    _check(checks, "ode_vs_dyson", diff, 1e-8)
    _check(checks, "unitarity", rep_o.unitarity, 1e-9)
    c0, c1 = fieldcfg.coefficients_at(0.0, fieldcfg.band)
    q = d1.q_operator(model, c0, c1)
    _check(checks, "q_skew", float(np.abs(q.entries + q.entries.conj().T).max()), 1e-12)
    return {"selftest": "dirac1d", "seed": args.seed, "checks": checks}


def _selftest_pipeline(args) -> dict:
    model = d1.LatticeModel(mass=1.0, box=2 * np.pi, cutoff=1, coupling=0.4)
    env = d1.Envelope("bump", -1.0, 1.0, 1.0)
    comp = d1.FieldComponent(lg.from_coefficients({1: 0.3, -1: 0.3}), env)
    fieldcfg = d1.FieldConfig(a1=comp)
    res = d1.scattering_pipeline(model, fieldcfg, nodes=161)
    checks: dict = {}
    _check(checks, "phase_modulus", abs(abs(res.phase) - 1.0), 1e-7)
    _check(checks, "intertwining", res.intertwining, 1e-10)
    return {"selftest": "pipeline", "seed": args.seed, "checks": checks}


# ---------------------------------------------------------------------------
# driver


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarfock", description="finite-truncation implementer experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--selftest", action="store_true")
        p.add_argument("--save", metavar="NAME",
                       help=f"also write the JSON result into ${OUTDIR_ENV} or cwd")

    p = sub.add_parser("ss-check", help="odd-block Hilbert-Schmidt diagnostics")
    p.add_argument("--op")
    common(p)
    p.set_defaults(func=cmd_ss_check)

    p = sub.add_parser("cocycle", help="Schwinger cocycle vs finite differences")
    p.add_argument("--op")
    p.add_argument("--op2")
    common(p)
    p.set_defaults(func=cmd_cocycle)

    p = sub.add_parser("implement", help="Bogoliubov implementation of a unitary")
    p.add_argument("--op")
    common(p)
    p.set_defaults(func=cmd_implement)

    p = sub.add_parser("transport", help="parallel transport along a path file")
    p.add_argument("--path")
    p.add_argument("--variant", choices=("right", "left"), default="right")
    common(p)
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("holonomy", help="explicit holonomy loop")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--nodes", type=int, default=512)
    common(p)
    p.set_defaults(func=cmd_holonomy)

    p = sub.add_parser("loopgroup", help="multiplication-operator cocycle witness")
    p.add_argument("--fourier")
    p.add_argument("--fourier2")
    common(p)
    p.set_defaults(func=cmd_loopgroup)

    p = sub.add_parser("dirac1d", help="evolution and renormalized defect scan")
    p.add_argument("--config")
    p.add_argument("--cutoffs", help="comma-separated cutoff ladder")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_dirac1d)

    p = sub.add_parser("pipeline", help="S-matrix, implementation and phase")
    p.add_argument("--config")
    p.add_argument("--nodes", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except InputError as exc:
        print(json.dumps({"error": str(exc), "kind": "input"}, sort_keys=True))
        return 1
    except (linop.InvariantViolationError, ce.SectionDomainError,
            fock.DegenerateVacuumError, AssertionError) as exc:
        print(json.dumps({"error": str(exc), "kind": "invariant"}, sort_keys=True))
        return 2
    if isinstance(result, str):
        print(result)
        return 0
    if isinstance(result, dict) and "checks" in result:
        failed = [k for k, v in result["checks"].items() if not v["pass"]]
        print(json.dumps(result, sort_keys=True))
        return 2 if failed else 0
    text = json.dumps(result, sort_keys=True)
    print(text)
    if getattr(args, "save", None):
        outpath = os.path.join(_outdir(), args.save)
        with open(outpath, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
