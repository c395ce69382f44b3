"""Command line entry point ``oscham``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import decay, hermite, kam, perturbation, quadrature, simulator
from ._pool import default_workers

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class _Invalid(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: dict
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    as_json: bool = False


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1)


def _emit(cfg: RunConfig, result: dict, out=None):
    out = out or sys.stdout
    if cfg.as_json:
        out.write(_dumps(result) + "\n")
        return
    for key in sorted(result):
        val = _jsonable(result[key])
        if not isinstance(val, str):
            val = json.dumps(val)
        out.write(f"{key}: {val}\n")


def _write_text(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _omega(text: str) -> np.ndarray:
    try:
        om = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise _Invalid(f"cannot parse omega {text!r}") from None
    if om.size == 0 or not np.all(np.isfinite(om)):
        raise _Invalid("omega must be a comma separated list of finite reals")
    return om


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be a positive real")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be a non-negative real")
    return v


def _load_spec(path):
    if path == "bundled":
        text = resources.files("oscham.data").joinpath("bundled_spec.json").read_text()
        return perturbation.PerturbationSpec.from_dict(json.loads(text))
    try:
        return perturbation.load_spec(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise _Invalid(f"cannot read spec {path}: {exc}") from None


def _load_schedule(path):
    if path is None:
        return kam.KamSchedule()
    try:
        return kam.KamSchedule.from_file(path)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise _Invalid(f"cannot read schedule {path}: {exc}") from None


def _operator(cfg, spec):
    path = cfg.params.get("operator")
    if path:
        P = perturbation.TruncatedOperator.load(path)
        if P.dim != cfg.params["dim"]:
            raise _Invalid(f"operator file has dim {P.dim}, expected {cfg.params['dim']}")
        return P
    return perturbation.assemble_P(spec, cfg.params["dim"], workers=cfg.workers)


def _alpha(cfg, spec):
    a = cfg.params.get("alpha")
    if a is None:
        a = decay.l_exponent(spec.beta, spec.mu)
    if not a > 0:
        raise _Invalid(f"alpha = {a:.6g} is not positive (mu outside the admissible window?)")
    return a


# -- commands ---------------------------------------------------------------

def cmd_hermite(cfg):
    m, x = cfg.params["m"], cfg.params["x"]
    regime = hermite.eval_regime(m, x)
    mode = hermite.oscillator_mode(m)
    return {"m": m, "x": x, "value": float(hermite.hermite_eval(m, x)), "regime": regime.tag, "w": regime.w,
            "lambda": mode.lam, "turning_point": mode.turning_point}


def cmd_matelem(cfg):
    p = cfg.params
    q = quadrature.OscIntegralQuery(p["m"], p["n"], p["k"], p["beta"], p["mu"])
    r = quadrature.matrix_element(q, abs_tol=p["abs_tol"], rel_tol=p["tol"])
    return r.to_dict()


def cmd_decay_scan(cfg):
    p = cfg.params
    modes = decay.doubling_modes(p["min_mode"], p["max_mode"], p["per_octave"])
    bands = p["band_offsets"]
    rep = decay.decay_scan(p["k"], p["beta"], p["mu"], modes, diag_only=bands is None, bands=bands,
                           workers=cfg.workers, abs_tol=p["abs_tol"], rel_tol=p["tol"])
    out = cfg.outputs.get("out")
    if out and not (cfg.as_json and out == "-"):
        _write_text(out, rep.to_csv())
    summary = rep.summary()
    if cfg.outputs.get("summary"):
        Path(cfg.outputs["summary"]).write_text(_dumps(summary) + "\n")
    if cfg.as_json:
        res = {"summary": summary}
        if out == "-":
            res["rows"] = [list(r) for r in rep.rows()]
        return res
    if out == "-":
        return None
    return summary


def cmd_assemble(cfg):
    spec = _load_spec(cfg.params["spec"])
    P = perturbation.assemble_P(spec, cfg.params["dim"], workers=cfg.workers)
    P.save(cfg.outputs["out"])
    res = {"dim": P.dim, "angle_dim": P.angle_dim, "harmonics": P.harmonics.tolist(), "out": cfg.outputs["out"],
           "abs_err": P.meta.get("abs_err", 0.0), "reality_defect": P.reality_defect(),
           "symmetry_defect": P.symmetry_defect()}
    if decay.mu_admissible(spec.beta, spec.mu):
        a = decay.l_exponent(spec.beta, spec.mu)
        res["alpha"] = a
        res["malpha_norm"] = perturbation.malpha_norm(P, a)
    return res


def _kam(cfg, spec, P):
    p = cfg.params
    sched = _load_schedule(p.get("schedule"))
    sigma = p.get("sigma") or spec.sigma
    alpha = _alpha(cfg, spec)
    state, trace = kam.kam_iterate(P, p["eps"], alpha, sigma, _omega(p["omega"]), sched)
    return state, trace, sched


def _kam_summary(state, trace, sched, eps):
    closeness = kam.transform_closeness(state, weighted=True)
    return {
        "trace": [list(t) for t in trace],
        "steps": state.step,
        "converged": state.converged,
        "eps_final": state.eps,
        "N_inf": state.N,
        "N_shift_malpha": kam.normal_form_shift(state),
        "homological_residual_max": max(state.residuals, default=0.0),
        "series_tails": state.tails,
        "transform_closeness": closeness,
        "alpha": state.alpha,
    }


def cmd_kam_run(cfg):
    spec = _load_spec(cfg.params["spec"])
    P = _operator(cfg, spec)
    state, trace, sched = _kam(cfg, spec, P)
    return _kam_summary(state, trace, sched, cfg.params["eps"])


def cmd_measure_est(cfg):
    p = cfg.params
    mp = kam.MelnikovParams(p["kappa"], p["cutoff"])
    est = kam.excluded_measure(mp, p["A"], p["samples"], n=p["n"], seed=cfg.seed)
    res = est.to_dict()
    if p["n"] == 1:
        res["exact"] = kam.excluded_measure_exact_1d(mp, p["A"])
    return res


def _initial(modes_text, dim):
    try:
        modes = [int(v) for v in modes_text.split(",") if v.strip()]
    except ValueError:
        raise _Invalid(f"cannot parse initial modes {modes_text!r}") from None
    if not modes or min(modes) < 1 or max(modes) > dim:
        raise _Invalid(f"initial modes must lie in 1..{dim}")
    xi = np.zeros(dim, dtype=complex)
    xi[np.array(modes) - 1] = 1.0
    return xi / np.linalg.norm(xi)


def cmd_simulate(cfg):
    p = cfg.params
    spec = _load_spec(p["spec"])
    P = _operator(cfg, spec)
    xi0 = _initial(p["init"], P.dim)
    traj = simulator.integrate(P, p["eps"], _omega(p["omega"]), xi0, p["T"], p["dt"], stride=p["stride"],
                               method=p["method"])
    traj.track = tuple(int(v) for v in p["track"].split(","))
    _write_text(cfg.outputs["out"], traj.to_csv())
    h1 = traj.norm_h1
    l2 = traj.norm_l2
    return {"samples": len(traj), "T": p["T"], "dt": p["dt"], "l2_drift": float(np.max(np.abs(l2 - l2[0]))),
            "h1_ratio_sup": float(np.max(h1) / h1[0]), "out": cfg.outputs["out"]}


def cmd_report(cfg):
    p = cfg.params
    spec = _load_spec(p["spec"])
    P = _operator(cfg, spec)
    window = decay.mu_window(spec.beta)
    laws = {repr(k): vars(decay.decay_law(k, spec.beta, spec.mu)) for k in spec.freqs} \
        if decay.mu_admissible(spec.beta, spec.mu) else {}
    res = {"beta": spec.beta, "mu": spec.mu, "mu_window": window, "decay_laws": laws,
           "A1": list(kam.check_A1(max(2, P.dim))), "dim": P.dim}
    alpha = _alpha(cfg, spec)
    n = spec.angle_dim
    alpha1, alpha2 = n + 1, 1
    gamma2 = alpha * alpha2 / (2 * alpha * alpha2 + 5)
    res["malpha_norm_P"] = perturbation.malpha_norm(P, alpha)
    res["reducibility_exponents"] = {"alpha": alpha, "alpha1": alpha1, "alpha2": alpha2, "gamma1": max(alpha1, n + 3),
                                "gamma2": gamma2, "delta_upper": gamma2 / 24,
                                "measure_exponent": 3 * alpha / (2 * (2 * alpha + 5) * (2 * alpha + 1))}
    state, trace, sched = _kam(cfg, spec, P)
    res["kam"] = _kam_summary(state, trace, sched, p["eps"])
    return res


COMMANDS = {
    "hermite": cmd_hermite,
    "matelem": cmd_matelem,
    "decay-scan": cmd_decay_scan,
    "assemble": cmd_assemble,
    "kam-run": cmd_kam_run,
    "measure-est": cmd_measure_est,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="worker processes (OSCHAM_THREADS overrides)")
    common.add_argument("--seed", type=int, default=0)

    ap = argparse.ArgumentParser(prog="oscham", description="Oscillatory Hermite matrix elements and reducibility runs.")
    sub = ap.add_subparsers(dest="command", required=True)

    h = sub.add_parser("hermite", parents=[common], help="debug evaluation of h_m")
    h.add_argument("action", choices=["eval"])
    h.add_argument("--m", type=_positive_int, required=True)
    h.add_argument("--x", type=float, required=True)

    def element_args(p):
        p.add_argument("--k", type=float, required=True)
        p.add_argument("--beta", type=float, required=True)
        p.add_argument("--mu", type=float, default=0.0)
        p.add_argument("--tol", type=_positive_float, default=1e-8, help="relative tolerance")
        p.add_argument("--abs-tol", type=_positive_float, default=1e-10)

    m = sub.add_parser("matelem", parents=[common], help="one oscillatory matrix element")
    m.add_argument("--m", type=_positive_int, required=True)
    m.add_argument("--n", type=_positive_int, required=True)
    element_args(m)

    d = sub.add_parser("decay-scan", parents=[common], help="compensated decay scan on a mode grid")
    element_args(d)
    d.add_argument("--max-mode", type=_positive_int, required=True)
    d.add_argument("--min-mode", type=_positive_int, default=4)
    d.add_argument("--per-octave", type=_positive_int, default=1)
    d.add_argument("--band-offsets", type=int, nargs="+", default=None)
    d.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    d.add_argument("--summary", default=None, help="JSON summary path")

    a = sub.add_parser("assemble", parents=[common], help="assemble P(theta) and save it")
    a.add_argument("--spec", required=True, help="spec JSON file or 'bundled'")
    a.add_argument("--dim", type=_positive_int, default=64)
    a.add_argument("--out", required=True)

    def run_args(p):
        p.add_argument("--spec", required=True, help="spec JSON file or 'bundled'")
        p.add_argument("--dim", type=_positive_int, default=32)
        p.add_argument("--eps", type=_nonneg_float, required=True)
        p.add_argument("--omega", required=True, help="comma separated frequencies")
        p.add_argument("--operator", default=None, help="pre-assembled operator from 'assemble'")

    def kam_args(p):
        p.add_argument("--schedule", default=None, help="schedule JSON")
        p.add_argument("--alpha", type=_positive_float, default=None)
        p.add_argument("--sigma", type=_positive_float, default=None)

    k = sub.add_parser("kam-run", parents=[common], help="reducibility iteration")
    run_args(k)
    kam_args(k)

    e = sub.add_parser("measure-est", parents=[common], help="Monte-Carlo resonant-set measure")
    e.add_argument("--kappa", type=float, required=True)
    e.add_argument("--cutoff", type=float, required=True)
    e.add_argument("--n", type=_positive_int, default=1)
    e.add_argument("--samples", type=int, default=100_000)
    e.add_argument("--A", type=_positive_int, default=64)

    s = sub.add_parser("simulate", parents=[common], help="direct integration of the truncated system")
    run_args(s)
    s.add_argument("--T", type=_positive_float, required=True)
    s.add_argument("--dt", type=_positive_float, required=True)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--init", default="1", help="modes carrying equal initial weight")
    s.add_argument("--track", default="1,2,3")
    s.add_argument("--method", choices=["magnus", "midpoint"], default="magnus")
    s.add_argument("--out", default="-")

    r = sub.add_parser("report", parents=[common], help="exponents, norms and a KAM summary for a spec")
    run_args(r)
    kam_args(r)
    return ap


def _config(ns) -> RunConfig:
    params = {k: v for k, v in vars(ns).items() if k not in {"command", "json", "workers", "seed", "out", "summary"}}
    outputs = {k: getattr(ns, k) for k in ("out", "summary") if getattr(ns, k, None) is not None}
    env = os.environ.get("OSCHAM_THREADS")
    workers = default_workers() if env else (ns.workers or 1)
    return RunConfig(ns.command, params, outputs, ns.seed, workers, ns.json)


def run(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = _config(ns)
        result = COMMANDS[cfg.command](cfg)
    except (_Invalid, ValueError) as exc:
        print(f"oscham {ns.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"oscham {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if result is not None:
        _emit(cfg, result)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
