"""Command line interface: ``avgq <command> [--config FILE] [flags]``.

Flags override values from the INI-style config file.  Every JSON artifact
embeds the resolved configuration; ``generated_at`` is its only
run-dependent field.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .analysis import (
    LipschitzCertificate,
    bound_action_gap,
    bound_combined,
    bound_policy_gap,
    bound_report,
    bound_value_gap,
)
from .core import (
    ACOESolution,
    AssumptionError,
    ConvergenceError,
    DomainError,
    FiniteModel,
    StationaryPolicy,
    dumps,
    greedy,
)
from .environments import case_study_lipschitz_constants, make_model
from .evaluation import SWEEP_COLUMNS, EvalConfig, evaluate_policy, linear_trend, sweep_quantization
from .q_async import AsyncConfig, occupation_scheme, train_async
from .q_sync import SyncConfig, train_sync
from .quantization import QuantizationScheme, StateQuantizer, build_finite_model
from .solver import SolverConfig, shifted_fixed_point, solve

logger = logging.getLogger("avgq")

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 2, 3, 4
ROUTE_ALIASES = {"span": "span_rvi", "span_rvi": "span_rvi",
                 "shifted": "shifted_kernel", "shifted_kernel": "shifted_kernel"}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# parsing helpers


def float_list(text: str) -> list:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text: str) -> list:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def net_list(text: str) -> list:
    return [float_list(part) for part in str(text).split(";") if part.strip()]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])


def write_json(path: Path, payload: dict, config: dict) -> None:
    doc = {"generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(), "config": config}
    doc.update(payload)
    path.write_text(dumps(doc) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


# --------------------------------------------------------------------------
# shared option groups


def add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI-style config file; flags override its values")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker threads (sweep cells)")
    p.add_argument("-v", "--verbose", action="store_true")


def add_model(p: argparse.ArgumentParser, bins_default: int = 4) -> None:
    p.add_argument("--model", default="case_study",
                   help="case_study | halving | synthetic_finite | linear_map | iid_uniform")
    p.add_argument("--model-params", default="{}",
                   help="JSON object of model parameters (e.g. inline matrices)")
    p.add_argument("--bins", type=int, default=bins_default)
    p.add_argument("--net", type=float_list, default=None, help="action net, e.g. -1,0,1")


def resolve_model(args):
    try:
        params = json.loads(args.model_params) if isinstance(args.model_params, str) \
            else dict(args.model_params)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--model-params is not valid JSON: {exc}") from None
    model = make_model(args.model, **params)
    if model.support is not None and args.bins == len(model.support):
        scheme = QuantizationScheme.for_model(model, None, args.net)
    else:
        scheme = QuantizationScheme.for_model(model, args.bins, args.net)
    return model, scheme


def exact_reference(model, scheme):
    finite = build_finite_model(model, scheme, method="exact")
    return finite, solve(finite, SolverConfig(route="shifted_kernel") if finite.floor.sum() > 0
                         else SolverConfig(route="span_rvi"))


# --------------------------------------------------------------------------
# commands


def cmd_build(args, config):
    model, scheme = resolve_model(args)
    if args.method not in ("exact", "monte_carlo"):
        raise ConfigError("--method must be exact or monte_carlo")
    finite = build_finite_model(model, scheme, method=args.method,
                                samples_per_bin=args.samples, rng=args.seed)
    payload = finite.to_dict()
    payload["edges"] = scheme.edges.tolist()
    payload["representatives"] = scheme.quantizer.representatives_.tolist()
    write_json(args.out / "finite_model.json", payload, config)
    print(f"wrote {args.out / 'finite_model.json'} ({finite.num_states}x{finite.num_actions})")


def cmd_solve(args, config):
    doc = load_json(args.input)
    finite = FiniteModel.from_dict(doc)
    route = ROUTE_ALIASES.get(args.route)
    if route is None:
        raise ConfigError(f"unknown route {args.route!r}")
    sol = solve(finite, SolverConfig(route=route, tolerance=args.tol, max_iters=args.max_iters,
                                     reference_state=args.reference_state))
    payload = sol.to_dict()
    for key in ("edges", "action_values"):
        if key in doc:
            payload[key] = doc[key]
    write_json(args.out / "acoe.json", payload, config)
    print(f"gain {sol.gain!r} residual {sol.residual:.3g} ({route}, {sol.iterations} iterations)")


def cmd_train_sync(args, config):
    model, scheme = resolve_model(args)
    finite = ref = None
    if model.bin_kernel is not None:
        finite, ref = exact_reference(model, scheme)
    cfg = SyncConfig(num_sweeps=args.sweeps, seed=args.seed, snapshot_every=args.snapshot_every,
                     normalization=(args.y0, args.u0))
    res = train_sync(model, scheme, cfg, reference=ref, finite=finite)
    payload = {
        "algorithm": "sync",
        "num_states": scheme.n_bins,
        "num_actions": len(scheme.action_net),
        "q": res.q_hat.ravel().tolist(),
        "policy": greedy(res.q_hat).tolist(),
        "edges": scheme.edges.tolist(),
        "action_values": scheme.action_net.tolist(),
        "gain_estimate": res.curve[-1]["gain_estimate"],
        "span_to_ref": res.curve[-1]["span_to_ref"],
    }
    write_json(args.out / "qtable.json", payload, config)
    write_csv(args.out / "curve.csv", ("sweep", "span_to_ref", "span_successive", "gain_estimate"),
              res.curve)
    print(f"sync: {args.sweeps} sweeps, span to reference {fmt(payload['span_to_ref'])}")


def cmd_train_async(args, config):
    model, scheme = resolve_model(args)
    support = "all_bins" if args.shift_support == "all_bins" else int_list(args.shift_support)
    cfg = AsyncConfig(horizon=args.steps, delta=args.delta, shift_support=support, x0=args.x0,
                      seed=args.seed, snapshot_every=args.snapshot_every,
                      log_trajectory=args.log_trajectory or args.with_reference)
    res = train_async(model, scheme, cfg)
    ref_gain = None
    if args.with_reference:
        # Same seed, same trajectory: rerun with the occupation-weighted fixed point.
        finite = build_finite_model(model, occupation_scheme(res.log, scheme), method="exact")
        sol = solve(finite)
        ref_gain = sol.gain
        ref_q = shifted_fixed_point(sol, res.delta, res.support)
        cfg.log_trajectory = args.log_trajectory
        log = res.log
        res = train_async(model, scheme, cfg, reference_q=ref_q)
        res.log = log if args.log_trajectory else None
    payload = {
        "algorithm": "async",
        "num_states": scheme.n_bins,
        "num_actions": len(scheme.action_net),
        "q": res.q.ravel().tolist(),
        "visits": res.visits.ravel().tolist(),
        "policy": greedy(res.q).tolist(),
        "delta": res.delta,
        "shift_support": res.support.tolist(),
        "gain_estimate": res.gain_estimate,
        "reference_gain": ref_gain,
        "edges": scheme.edges.tolist(),
        "action_values": scheme.action_net.tolist(),
    }
    write_json(args.out / "qtable.json", payload, config)
    write_csv(args.out / "curve.csv", ("t", "gain_estimate", "sup_to_ref", "visits_min"), res.curve)
    if res.log is not None:
        lg = res.log
        rows = ({"t": t, "x": lg.x[t], "bin": int(lg.bin[t]), "action_index": int(lg.action_index[t]),
                 "cost": lg.cost[t], "x_next": lg.x_next[t]} for t in range(len(lg)))
        write_csv(args.out / "trajectory.csv", ("t", "x", "bin", "action_index", "cost", "x_next"),
                  rows)
    print(f"async: {args.steps} steps, gain estimate {res.gain_estimate!r}")


def load_policy(path, scheme_fallback) -> StationaryPolicy:
    doc = load_json(path)
    if "policy" in doc:
        actions = np.asarray(doc["policy"], dtype=int)
    else:
        M, K = int(doc["num_states"]), int(doc["num_actions"])
        actions = greedy(np.asarray(doc["q"], dtype=float).reshape(M, K))
    if "edges" in doc:
        edges = np.asarray(doc["edges"], dtype=float)
        quantizer = StateQuantizer(bounds=(edges[0], edges[-1]), edges=edges).fit()
    else:
        quantizer = scheme_fallback.quantizer
    values = doc.get("action_values")
    values = scheme_fallback.action_net if values is None else np.asarray(values, dtype=float)
    return StationaryPolicy(actions, quantizer, values)


def cmd_eval(args, config):
    model, scheme = resolve_model(args)
    policy = load_policy(args.policy, scheme)
    cfg = EvalConfig(horizon=args.horizon, burn_in=args.burn_in, num_rollouts=args.rollouts,
                     initial_states=args.x0, seed=args.seed)
    res = evaluate_policy(model, policy, cfg)
    write_json(args.out / "eval.json", res.to_dict(), config)
    print(f"average cost {res.mean!r} +/- {res.stderr!r}")


def cmd_bounds(args, config):
    cert = LipschitzCertificate(args.Kc, args.Kf)
    th = str(args.theorem)
    inputs = {"Kc": args.Kc, "Kf": args.Kf}
    if th == "6":
        bound = bound_value_gap(cert, _need(args.Lx, "--Lx"))
        inputs["Lx"] = args.Lx
    elif th == "7":
        bound = bound_policy_gap(cert, _need(args.Lx, "--Lx"), _need(args.mu, "--mu"))
        inputs.update(Lx=args.Lx, mu=args.mu)
    elif th == "5":
        bound = bound_action_gap(cert, _need(args.n, "--n"))
        inputs["n"] = args.n
    elif th == "combined":
        bound = bound_combined(cert, _need(args.Lx, "--Lx"), _need(args.mu, "--mu"),
                               _need(args.Lu, "--Lu"))
        inputs.update(Lx=args.Lx, mu=args.mu, Lu=args.Lu)
    else:
        raise ConfigError(f"unknown theorem {th!r}")
    write_json(args.out / "bounds.json", bound_report(th, inputs, bound, args.empirical_gap), config)
    print(float(f"{bound:.12g}"))


def _need(value, flag):
    if value is None:
        raise ConfigError(f"{flag} is required for this bound")
    return value


def cmd_sweep(args, config):
    model = make_model(args.model, **json.loads(args.model_params))
    cfg = EvalConfig(horizon=args.horizon, burn_in=args.burn_in, num_rollouts=args.rollouts,
                     initial_states=args.x0, seed=args.seed)
    cert = LipschitzCertificate(*case_study_lipschitz_constants()) \
        if args.Kc is None and args.model == "case_study" else (
            LipschitzCertificate(args.Kc, args.Kf) if args.Kc is not None else None)
    cells = [(M, net) for net in args.nets for M in args.bins_list]
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        parts = list(pool.map(lambda c: sweep_quantization(model, [c[0]], [c[1]], cfg, cert),
                              cells))
    rows = [r for part in parts for r in part]
    write_csv(args.out / "sweep.csv", SWEEP_COLUMNS, (r.as_dict() for r in rows))
    fits = {}
    for nid in dict.fromkeys(r.net_id for r in rows):
        sub = [r for r in rows if r.net_id == nid]
        if len(sub) >= 2:
            fits[nid] = linear_trend(sub).__dict__
    write_json(args.out / "sweep.json", {"rows": [r.as_dict() for r in rows], "linear_fit": fits},
               config)
    print(f"wrote {len(rows)} rows to {args.out / 'sweep.csv'}")


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avgq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="aggregate a model into a finite model")
    add_common(p)
    add_model(p)
    p.add_argument("--method", default="exact", help="exact | monte_carlo")
    p.add_argument("--samples", type=int, default=1000, help="samples per cell (monte_carlo)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", help="solve the ACOE of finite_model.json")
    add_common(p)
    p.add_argument("--in", dest="input", default="finite_model.json")
    p.add_argument("--route", default="shifted", help="span | shifted")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=1_000_000)
    p.add_argument("--reference-state", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train-sync", help="synchronous quantized Q-learning")
    add_common(p)
    add_model(p, bins_default=5)
    p.add_argument("--sweeps", type=int, default=10_000)
    p.add_argument("--snapshot-every", type=int, default=100)
    p.add_argument("--y0", type=int, default=0)
    p.add_argument("--u0", type=int, default=0)
    p.set_defaults(func=cmd_train_sync)

    p = sub.add_parser("train-async", help="asynchronous quantized Q-learning")
    add_common(p)
    add_model(p)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--x0", type=float, default=0.5)
    p.add_argument("--shift-support", default="all_bins", help="all_bins or bin list, e.g. 0,2")
    p.add_argument("--snapshot-every", type=int, default=1000)
    p.add_argument("--log-trajectory", action="store_true")
    p.add_argument("--with-reference", action="store_true",
                   help="rerun against the occupation-weighted fixed point to fill sup_to_ref")
    p.set_defaults(func=cmd_train_async)

    p = sub.add_parser("eval", help="Monte Carlo average cost of a stored policy")
    add_common(p)
    add_model(p)
    p.add_argument("--policy", required=True, help="acoe.json or qtable.json")
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--rollouts", type=int, default=8)
    p.add_argument("--x0", type=float_list, default=[0.5])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bounds", help="evaluate an a-priori error bound")
    add_common(p)
    p.add_argument("--theorem", default="7", help="5 | 6 | 7 | combined")
    p.add_argument("--Kc", type=float, required=False, default=None)
    p.add_argument("--Kf", type=float, required=False, default=None)
    p.add_argument("--Lx", type=float, default=None)
    p.add_argument("--Lu", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--n", type=float, default=None)
    p.add_argument("--empirical-gap", type=float, default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="evaluate lifted policies over bin counts and nets")
    add_common(p)
    p.add_argument("--model", default="case_study")
    p.add_argument("--model-params", default="{}")
    p.add_argument("--bins-list", type=int_list, default=[3, 4, 5, 8, 12, 20])
    p.add_argument("--nets", type=net_list, default=[[-1.0, 0.0, 1.0],
                                                     [-1.0, -0.5, 0.0, 0.5, 1.0]])
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--rollouts", type=int, default=8)
    p.add_argument("--x0", type=float_list, default=[0.5])
    p.add_argument("--Kc", type=float, default=None)
    p.add_argument("--Kf", type=float, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    return None


def apply_config_file(parser, argv):
    """Parse once to find ``--config``, then feed its values in as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise ConfigError(f"cannot read config file {args.config}")
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest == "in":
                dest = "input"
            if dest not in actions or dest in ("config", "help"):
                raise ConfigError(f"unknown config key [{section}] {key}")
            act = actions[dest]
            if act.const is True and act.nargs == 0:
                value = cp.getboolean(section, key)
            elif act.type is not None:
                value = act.type(raw)
            else:
                value = raw
            defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolved_config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "verbose", "out"):
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


_NEGATIVE_VALUE = re.compile(r"^-\.?\d")


def glue_negative_values(argv: Sequence[str]) -> list:
    """Turn ``--net -1,0,1`` into ``--net=-1,0,1`` so argparse keeps the value."""
    out = []
    for tok in argv:
        if out and _NEGATIVE_VALUE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = glue_negative_values(sys.argv[1:] if argv is None else argv)
    out_dir = None
    try:
        args = apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        config = resolved_config(args)
        args.out = out_dir
        args.func(args, config)
        return EXIT_OK
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    except AssumptionError as exc:
        return _fail(out_dir, exc, EXIT_ASSUMPTION)
    except ConvergenceError as exc:
        return _fail(out_dir, exc, EXIT_NUMERICAL)
    except (ConfigError, DomainError, ValueError, KeyError, TypeError) as exc:
        return _fail(out_dir, exc, EXIT_CONFIG)


def _fail(out_dir: Optional[Path], exc: Exception, code: int) -> int:
    msg = str(exc) or type(exc).__name__
    print(f"error: {msg}", file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(
                dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}) + "\n")
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
