"""Command-line front end.

Subcommands: approx, psi, constants, step, run, verify, gen.  Human
summary on stdout, machine-readable JSON/field files on disk.  Exit code
0 only when every asserted bound in the invoked pipeline passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import averaging as avg
from . import field as fld
from . import oracles as orc
from . import scheduler as sch
from .diophantine import (FrequencyVector, deserialize_frequency,
                          dirichlet_approx, lower_denominator_bound,
                          psi_argmax, resonance_bound)
from .errors import KamError
from .generate import random_field


def _load_freq(path: str) -> FrequencyVector:
    return deserialize_frequency(Path(path).read_text())


def _load_field(path: str) -> fld.FourierVectorField:
    return fld.deserialize(Path(path).read_text())


def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _cmd_approx(args) -> int:
    alpha = _load_freq(args.freq)
    approx = dirichlet_approx(alpha, args.Q)
    err = float(np.abs(approx.varpi).max()) * approx.q
    bound = lower_denominator_bound(alpha, approx)
    out = {
        "q": approx.q,
        "p": [int(v) for v in approx.p],
        "qQ_err": err * args.Q,           # q*|alpha~ - p/q|*Q, must be <= 1
        "err": err,
        "Q": args.Q,
        "denominator_lower_bound": bound,
        "upper_ok": bool(err <= 1.0 / args.Q * (1 + 1e-12)),
        "lower_ok": bool(approx.q >= bound),
    }
    print(json.dumps(out, indent=2))
    return 0 if out["upper_ok"] and out["lower_ok"] else 1


def _cmd_psi(args) -> int:
    alpha = _load_freq(args.freq)
    value, k = psi_argmax(alpha, args.Q)
    print(json.dumps({"psi": value, "argmax_k": list(k), "Q": args.Q},
                     indent=2))
    return 0


def _cmd_constants(args) -> int:
    consts = sch.constants(args.n, args.tau, args.gamma, args.gammabar)
    q0, eps_star = sch.select_Q(consts, args.s)
    out = {"n": consts.n, "tau": consts.tau, "a": consts.a, "b": consts.b,
           "c": consts.c, "d": consts.d, "gamma_star": consts.gamma_star,
           "Q0": q0, "eps_star": eps_star, "s": args.s}
    print(json.dumps(out, indent=2))
    return 0


def _phi_field_kmax(result) -> int:
    k = max((layer.V.k_max for layer in result.Phi.layers), default=1)
    return max(1, min(int(k), 16))


def _cmd_step(args) -> int:
    alpha = _load_freq(args.freq)
    P = _load_field(args.pert)
    s = P.width_s
    consts = sch.constants(alpha.n, alpha.tau, alpha.gamma, alpha.gamma_bar)
    if args.Q is None:
        q0, _ = sch.select_Q(consts, s)
    else:
        q0 = args.Q
    sigma = args.sigma if args.sigma is not None else s / 4.0
    S = fld.zero_field(alpha.n, s)
    res = avg.averaging_step(alpha, S, P, q0, sigma, consts)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "p_plus.field").write_text(fld.serialize(res.P_plus))
    if res.Phi1.layers:
        disp = sch.materialize(res.Phi1, max(1, min(res.V.k_max, 16)),
                               width=s - sigma)
    else:
        disp = fld.zero_field(alpha.n, s - sigma)
    (outdir / "phi1.field").write_text(fld.serialize(disp))
    budget = {
        "q": res.approx.q,
        "p": [int(v) for v in res.approx.p],
        "Q": q0,
        "sigma": sigma,
        "q_eps": res.budget.q_eps,
        "tail_term": res.budget.tail_term,
        "bracket_term": res.budget.bracket_term,
        "conditions_ok": list(res.budget.conditions_ok),
        "conditions": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in res.budget.report.items()},
        "norm_P": fld.norm(P, s),
        "norm_P_plus": (fld.norm(res.P_plus, s - sigma)
                        if res.P_plus.coeffs else 0.0),
        "norm_V": fld.norm(res.V, s) if res.V.coeffs else 0.0,
        "P_avg": [float(v) for v in res.P_avg],
    }
    _dump_json(outdir / "budget.json", budget)
    print(json.dumps(budget, indent=2))
    return 0


_RUN_KEYS = {"freq": str, "pert": str, "s": float, "tol": float,
             "max-steps": int, "out": str, "force": bool, "grid": int,
             "orbit-T": float}


def _read_config(path: str) -> dict:
    values = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise KamError(f"config line {ln}: expected key=value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _RUN_KEYS:
            raise KamError(f"config line {ln}: unknown key {key!r}")
        conv = _RUN_KEYS[key]
        values[key] = (val.lower() in ("1", "true", "yes")
                       if conv is bool else conv(val))
    return values


def _cmd_run(args) -> int:
    cfg = _read_config(args.config) if args.config else {}

    def pick(flag, key, default=None):
        return flag if flag is not None else cfg.get(key, default)

    freq = pick(args.freq, "freq")
    pert = pick(args.pert, "pert")
    s = pick(args.s, "s")
    if not freq or not pert or s is None:
        raise KamError("run requires --freq, --pert and --s "
                       "(flags or config)")
    alpha = _load_freq(freq)
    P = _load_field(pert)
    opts = sch.RunOptions(
        tol=pick(args.tol, "tol"),
        max_steps=int(pick(args.max_steps, "max-steps", 64)),
        force=bool(args.force or cfg.get("force", False)))
    result = sch.run(alpha, P, float(s), opts)
    outdir = Path(pick(args.out, "out", "."))
    outdir.mkdir(parents=True, exist_ok=True)

    _dump_json(outdir / "trace.json", {
        "eps": result.eps, "eps_star": result.eps_star,
        "Q0": result.schedule.Q0, "s": result.schedule.s,
        "passes": result.passes, "final_norm": result.final_norm,
        "beta": [float(v) for v in result.beta],
        "ledger": result.ledger.by_tag(),
        "steps": result.trace,
    })
    disp = sch.materialize(result.Phi, _phi_field_kmax(result),
                           width=float(s) / 2.0) \
        if result.Phi.layers else fld.zero_field(alpha.n, float(s) / 2.0)
    (outdir / "phi.field").write_text(fld.serialize(disp))
    (outdir / "beta.txt").write_text(
        "\n".join(format(float(v), ".17g") for v in result.beta) + "\n")

    grid = int(pick(args.grid, "grid", 32))
    orbit_t = float(pick(args.orbit_T, "orbit-T", 100.0))
    report = orc.conjugacy_report(alpha, P, result.Phi, result.beta, grid)
    report["orbit_deviation"] = (
        orc.orbit_shadowing_check(alpha, P, result.Phi, result.beta,
                                  orbit_t, max(16, int(orbit_t)))
        if orbit_t > 0 else None)
    _dump_json(outdir / "residual.json", report)
    print(json.dumps({"steps": len(result.trace), "beta": list(
        map(float, result.beta)), **report}, indent=2))
    return 0


def _field_as_map(disp: fld.FourierVectorField):
    def phi(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts + fld.eval_many(disp, pts)
    return phi


def _cmd_verify(args) -> int:
    alpha = _load_freq(args.freq)
    P = _load_field(args.pert)
    disp = _load_field(args.phi)
    beta = np.array([float(line) for line in
                     Path(args.beta).read_text().split()])
    phi = _field_as_map(disp)
    report = orc.conjugacy_report(alpha, P, phi, beta, args.grid)
    report["orbit_deviation"] = (
        orc.orbit_shadowing_check(alpha, P, phi, beta, args.orbit_T,
                                  max(16, int(args.orbit_T)))
        if args.orbit_T > 0 else None)
    _dump_json(Path(args.out) / "residual.json"
               if args.out else Path("residual.json"), report)
    print(json.dumps(report, indent=2))
    return 0


def _cmd_gen(args) -> int:
    out = random_field(args.n, args.s, args.eps, args.modes, args.seed,
                       k_max=args.kmax)
    text = fld.serialize(out)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} (norm {fld.norm(out, args.s):.17g})")
    else:
        sys.stdout.write(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="kamtorus",
        description="Spectral KAM conjugacy via rational averaging")
    subs = top.add_subparsers(dest="command", required=True)

    p = subs.add_parser("approx", help="Dirichlet rational approximation")
    p.add_argument("--freq", required=True)
    p.add_argument("--Q", type=float, required=True)
    p.set_defaults(func=_cmd_approx)

    p = subs.add_parser("psi", help="inverse smallest divisor in a box")
    p.add_argument("--freq", required=True)
    p.add_argument("--Q", type=float, required=True)
    p.set_defaults(func=_cmd_psi)

    p = subs.add_parser("constants", help="derived iteration constants")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--gammabar", type=float, required=True)
    p.add_argument("--s", type=float, default=1.0)
    p.set_defaults(func=_cmd_constants)

    p = subs.add_parser("step", help="single averaging step")
    p.add_argument("--freq", required=True)
    p.add_argument("--pert", required=True)
    p.add_argument("--Q", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_step)

    p = subs.add_parser("run", help="full conjugacy run")
    p.add_argument("--freq")
    p.add_argument("--pert")
    p.add_argument("--s", type=float)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--orbit-T", dest="orbit_T", type=float, default=None)
    p.set_defaults(func=_cmd_run)

    p = subs.add_parser("verify", help="independent conjugacy verification")
    p.add_argument("--freq", required=True)
    p.add_argument("--pert", required=True)
    p.add_argument("--phi", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--orbit-T", dest="orbit_T", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_verify)

    p = subs.add_parser("gen", help="seeded random perturbation")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--kmax", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gen)
    return top


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
