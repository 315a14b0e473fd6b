"""Command-line front end.

    dividend-eq solve    --config run.json
    dividend-eq eval     --config run.json [--solution solved.json]
    dividend-eq sweep    --config run.json
    dividend-eq simulate --config run.json [--seed N]

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

import numpy as np

from .equilibrium import EquilibriumSolution, coefficients_at, eval_V, solve_equilibrium
from .errors import DividendEqError, NumericalError, ValidationError
from .model import Exponential, FeedbackPolicy, PseudoExponential, validate_params
from .mc import SimConfig, simulate_payoff
from .piecewise import REGION_NAMES

MODEL_KEYS = ("mu", "sigma", "l_bar", "r_bar", "phi")
TOP_KEYS = set(MODEL_KEYS) | {"discount", "grid", "sweep", "sim"}
DISCOUNT_KEYS = {"exponential": {"type", "rho"}, "pseudo": {"type", "omega", "rho1", "rho2"}}
GRID_KEYS = {"x_min", "x_max", "n_points"}
SWEEP_KEYS = {"param", "from", "to", "steps", "x_ref"}
# x1/x2 replace the solved thresholds; n_threads only changes speed
SIM_KEYS = {"dt", "horizon", "n_paths", "seed", "bridge_correction", "x0", "x1", "x2", "n_threads"}
SWEEP_PARAMS = ("l_bar", "r_bar", "phi", "omega", "mu", "sigma", "rho_pair_meanfixed")

EVAL_HEADER = "x,V,V1,V2,dV,region,l,r"
SWEEP_HEADER = "param,case,x1,x2,V_at_x_ref"


def fmt(v) -> str:
    return f"{float(v):.12g}"


class ConfigError(ValidationError):
    pass


def _check_keys(block: Dict, allowed, where: str):
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError([("UnknownKey", f"unknown key {k!r} in {where}") for k in unknown])


def _number(block: Dict, key: str, where: str, required: bool = True, integer: bool = False):
    if key not in block:
        if required:
            raise ConfigError([("MissingKey", f"missing key {key!r} in {where}")])
        return None
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError([("NotANumber", f"{where}.{key} must be a number, got {v!r}")])
    if not math.isfinite(v):
        raise ConfigError([("NotFinite", f"{where}.{key} must be finite")])
    if integer:
        if int(v) != v:
            raise ConfigError([("NotAnInteger", f"{where}.{key} must be an integer, got {v!r}")])
        return int(v)
    return float(v)


def load_config(path: str) -> Dict:
    """Read and structurally validate a run configuration.

    Raises:
        ConfigError: unreadable file, malformed JSON, unknown or missing keys.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError([("Unreadable", f"cannot read {path}: {exc}")]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([("MalformedJSON", f"{path}: {exc}")]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([("MalformedJSON", "top level must be an object")])
    _check_keys(doc, TOP_KEYS, "config")
    for k in MODEL_KEYS:
        _number(doc, k, "config")
    disc = doc.get("discount")
    if not isinstance(disc, dict):
        raise ConfigError([("MissingKey", "missing object 'discount'")])
    kind = disc.get("type")
    if kind not in DISCOUNT_KEYS:
        raise ConfigError([("BadDiscount", f"discount.type must be 'exponential' or 'pseudo', got {kind!r}")])
    _check_keys(disc, DISCOUNT_KEYS[kind], "discount")
    for k in sorted(DISCOUNT_KEYS[kind] - {"type"}):
        _number(disc, k, "discount")
    for name, keys in (("grid", GRID_KEYS), ("sweep", SWEEP_KEYS), ("sim", SIM_KEYS)):
        if name in doc:
            if not isinstance(doc[name], dict):
                raise ConfigError([("MalformedJSON", f"{name!r} must be an object")])
            _check_keys(doc[name], keys, name)
    return doc


def build_model(doc: Dict, relaxed: bool):
    params = validate_params({k: doc[k] for k in MODEL_KEYS}, relaxed=relaxed)
    disc = doc["discount"]
    if disc["type"] == "exponential":
        discount = Exponential(float(disc["rho"]))
    else:
        discount = PseudoExponential(float(disc["omega"]), float(disc["rho1"]), float(disc["rho2"]))
    return params, discount


def cmd_solve(doc: Dict, args) -> str:
    params, discount = build_model(doc, args.relaxed)
    sol = solve_equilibrium(params, discount)
    return json.dumps(sol.to_dict(), indent=2) + "\n"


def _grid(doc: Dict) -> np.ndarray:
    g = doc.get("grid")
    if g is None:
        raise ConfigError([("MissingKey", "eval needs a 'grid' block")])
    lo = _number(g, "x_min", "grid")
    hi = _number(g, "x_max", "grid")
    n = _number(g, "n_points", "grid", integer=True)
    if not (0 <= lo <= hi) or n < 1 or (n == 1 and lo != hi):
        raise ConfigError([("BadGrid", f"need 0 <= x_min <= x_max and n_points >= 1, got {lo}, {hi}, {n}")])
    return np.linspace(lo, hi, n)


def eval_rows(sol: EquilibriumSolution, xs) -> List[str]:
    xs = np.asarray(xs, dtype=float)
    v, v1, v2 = eval_V(sol, xs), eval_V(sol, xs, 0, "V1"), eval_V(sol, xs, 0, "V2")
    dv = eval_V(sol, xs, 1)
    reg = sol.blocks[0].region(xs)
    l, r = sol.policy.action(xs)
    rows = [EVAL_HEADER]
    for i in range(xs.shape[0]):
        rows.append(",".join([fmt(xs[i]), fmt(v[i]), fmt(v1[i]), fmt(v2[i]), fmt(dv[i]),
                              REGION_NAMES[int(reg[i])], fmt(l[i]), fmt(r[i])]))
    return rows


def cmd_eval(doc: Dict, args) -> str:
    xs = _grid(doc)
    if args.solution:
        try:
            with open(args.solution, encoding="utf-8") as fh:
                sol = EquilibriumSolution.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError([("BadSolution", f"cannot load solution {args.solution}: {exc}")]) from exc
    else:
        params, discount = build_model(doc, args.relaxed)
        sol = solve_equilibrium(params, discount)
    return "\n".join(eval_rows(sol, xs)) + "\n"


def _sweep_point(doc: Dict, param: str, value: float, relaxed: bool):
    model = {k: doc[k] for k in MODEL_KEYS}
    disc = dict(doc["discount"])
    if param in MODEL_KEYS:
        model[param] = value
    elif param == "omega":
        if disc["type"] != "pseudo":
            raise ConfigError([("BadSweep", "sweeping omega needs a pseudo discount")])
        disc["omega"] = value
    elif param == "rho_pair_meanfixed":
        if disc["type"] != "pseudo":
            raise ConfigError([("BadSweep", "sweeping rho_pair_meanfixed needs a pseudo discount")])
        w = disc["omega"]
        mean = w * disc["rho1"] + (1 - w) * disc["rho2"]
        disc["rho1"] = mean - (1 - w) * value
        disc["rho2"] = mean + w * value
    return build_model(dict(doc, discount=disc, **model), relaxed)


def cmd_sweep(doc: Dict, args) -> str:
    sw = doc.get("sweep")
    if sw is None:
        raise ConfigError([("MissingKey", "sweep needs a 'sweep' block")])
    param = sw.get("param")
    if param not in SWEEP_PARAMS:
        raise ConfigError([("UnknownParameter", f"sweep.param must be one of {', '.join(SWEEP_PARAMS)}, got {param!r}")])
    lo = _number(sw, "from", "sweep")
    hi = _number(sw, "to", "sweep")
    steps = _number(sw, "steps", "sweep", integer=True)
    x_ref = _number(sw, "x_ref", "sweep")
    if steps < 1 or x_ref < 0:
        raise ConfigError([("BadSweep", "sweep.steps must be >= 1 and sweep.x_ref >= 0")])
    if param == "omega" or param == "rho_pair_meanfixed":
        _sweep_point(doc, param, lo, args.relaxed)  # type errors are configuration errors
    values = np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])

    def row(value):
        try:
            params, discount = _sweep_point(doc, param, float(value), args.relaxed)
            sol = solve_equilibrium(params, discount)
            return ",".join([fmt(value), sol.case.value, fmt(sol.x1), fmt(sol.x2), fmt(eval_V(sol, x_ref))])
        except DividendEqError:
            return ",".join([fmt(value), "error", "nan", "nan", "nan"])

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(row, values))
    return "\n".join([SWEEP_HEADER] + rows) + "\n"


def cmd_simulate(doc: Dict, args) -> str:
    sim = doc.get("sim")
    if sim is None:
        raise ConfigError([("MissingKey", "simulate needs a 'sim' block")])
    x0 = _number(sim, "x0", "sim")
    if not x0 > 0:
        raise ConfigError([("NonPositiveStart", f"sim.x0 must be > 0, got {x0}")])
    seed = args.seed if args.seed is not None else _number(sim, "seed", "sim", required=False, integer=True)
    bridge = sim.get("bridge_correction", False)
    if not isinstance(bridge, bool):
        raise ConfigError([("NotABoolean", "sim.bridge_correction must be true or false")])
    def opt(key, default, integer=False):
        v = _number(sim, key, "sim", required=False, integer=integer)
        return default if v is None else v

    cfg = SimConfig(
        dt=opt("dt", 1e-3),
        horizon=_number(sim, "horizon", "sim", required=False),
        n_paths=opt("n_paths", 10_000, integer=True),
        seed=0 if seed is None else seed,
        bridge_correction=bridge,
        n_threads=opt("n_threads", 1, integer=True),
    )
    params, discount = build_model(doc, args.relaxed)
    sol = solve_equilibrium(params, discount)
    x1 = _number(sim, "x1", "sim", required=False)
    x2 = _number(sim, "x2", "sim", required=False)
    overridden = x1 is not None or x2 is not None
    x1 = sol.x1 if x1 is None else x1
    x2 = sol.x2 if x2 is None else x2
    policy = FeedbackPolicy(x1, x2, params.l_bar, params.r_bar)
    if overridden:
        blocks, _ = coefficients_at(params, discount, x1, x2)
        target = EquilibriumSolution(sol.case, x1, x2, sol.omega, blocks, params, discount)
    else:
        target = sol
    closed = float(eval_V(target, x0))
    rep = simulate_payoff(params, policy, discount, x0, cfg)
    out = rep.to_dict()
    out.update({
        "x0": x0,
        "x1": x1,
        "x2": x2,
        "thresholds_overridden": overridden,
        "seed": cfg.seed,
        "bridge_correction": cfg.bridge_correction,
        "closed_form": closed,
        "z_score": (rep.mean - closed) / rep.std_error if rep.std_error > 0 else None,
    })
    return json.dumps(out, indent=2) + "\n"


COMMANDS = {"solve": cmd_solve, "eval": cmd_eval, "sweep": cmd_sweep, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dividend-eq", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="run configuration (JSON)")
    ap.add_argument("--output", help="write here instead of standard output")
    ap.add_argument("--seed", type=int, help="override sim.seed")
    ap.add_argument("--relaxed", action="store_true", help="accept phi = 1")
    ap.add_argument("--solution", help="eval: use this solve output instead of re-solving")
    ap.add_argument("--jobs", type=int, default=1, help="sweep: worker threads")
    return ap


def _error_doc(kind: str, exc: Exception) -> str:
    err = {"type": type(exc).__name__, "kind": kind, "message": str(exc)}
    if isinstance(exc, ValidationError):
        err["issues"] = [{"code": c, "message": m} for c, m in exc.issues]
    if isinstance(exc, NumericalError):
        err["trail"] = exc.trail
    return json.dumps({"error": err}, indent=2)


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print(_error_doc("config", ConfigError([("BadSeed", "seed must fit in 64 unsigned bits")])), file=sys.stderr)
        return 1
    try:
        doc = load_config(args.config)
        text = COMMANDS[args.command](doc, args)
    except ValidationError as exc:
        print(_error_doc("config", exc), file=sys.stderr)
        return 1
    except NumericalError as exc:
        msg = _error_doc("numerical", exc)
        print(msg, file=sys.stderr)
        if args.command == "solve":
            sys.stdout.write(msg + "\n")
        return 2
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
