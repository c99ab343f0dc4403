"""Command-line harness: simulate, sweep, convert, check, lowerbound.

Every command reads an optional JSON config (``--config``) whose keys match the
command's flags (dashes become underscores); flags given on the command line
override the file.  Output files default to ``$MECHLAB_OUT`` when set.

Exit codes: 0 success, 1 check failure, 2 config error, 3 inconsistent
buyer or broken run invariant, 4 precondition failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .algo1 import run_algorithm1, transcript_violations
from .buyer import BuyerStrategy
from .converters import direct_to_indirect, roundtrip_audit
from .core import DiscountSequence
from .direct_mech import audit_payment_bound, check_ic_pir
from .errors import (
    ComplianceLostError,
    FinalRoundEqualizationError,
    InconsistentBuyerError,
    MechLabError,
    PreconditionError,
)
from .lowerbound import TwoTypeInstance, closed_form_bound, optimal_two_type_regret
from .serialization import mechanism_from_dict, mechanism_to_dict, read_json, tree_to_dict, write_json

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PRECONDITION = 0, 1, 2, 3, 4
OUT_ENV = "MECHLAB_OUT"
LB_TOL = 1e-6

SIMULATE_COLUMNS = [
    "round", "phase", "lo_v", "hi_v", "delta", "epsilon", "delay",
    "chosen_a", "price", "instant_regret", "cum_regret",
]
SWEEP_COLUMNS = ["v", "T", "total_regret", "analytic_phase_bound"]


class ConfigError(MechLabError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _emit(text: str, out: Optional[str], default_name: str) -> None:
    path = out
    if path is None and os.environ.get(OUT_ENV):
        path = os.path.join(os.environ[OUT_ENV], default_name)
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# ---------------------------------------------------------------- config

def _float_list(s):
    if isinstance(s, str):
        return [float(x) for x in s.split(",") if x.strip()]
    return [float(x) for x in s]


def _int_list(s):
    if isinstance(s, str):
        return [int(x) for x in s.split(",") if x.strip()]
    return [int(x) for x in s]


# key -> (parser, default); None default means optional
SIMULATE_KEYS: dict[str, tuple[Callable, Any]] = {
    "ratio": (float, None),
    "gamma": (_float_list, None),
    "T": (int, None),
    "v": (float, None),
    "buyer": (str, "myopic"),
    "grid_size": (int, 41),
    "out": (str, None),
}
SWEEP_KEYS = {
    "ratio": (float, 0.5),
    "T": (_int_list, [250, 500, 1000, 2000]),
    "v": (_float_list, None),
    "v_start": (float, 0.0),
    "v_stop": (float, 1.0),
    "v_num": (int, 21),
    "buyer": (str, "myopic"),
    "grid_size": (int, 41),
    "workers": (int, 1),
    "out": (str, None),
}
CONVERT_KEYS = {
    "input": (str, None),
    "out_dir": (str, None),
    "audit": (bool, True),
    "tolerance": (float, 1e-9),
}
CHECK_KEYS = {
    "input": (str, None),
    "tolerance": (float, 1e-9),
}
LOWERBOUND_KEYS = {
    "pairs": (_float_list, [0.25, 0.5, 0.5, 1.0, 0.3, 0.9]),
    "out": (str, None),
}
COMMAND_KEYS = {
    "simulate": SIMULATE_KEYS,
    "sweep": SWEEP_KEYS,
    "convert": CONVERT_KEYS,
    "check": CHECK_KEYS,
    "lowerbound": LOWERBOUND_KEYS,
}


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def load_config(command: str, path: Optional[str], overrides: dict) -> dict:
    keys = COMMAND_KEYS[command]
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(raw) - set(keys))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
    cfg = {}
    for key, (conv, default) in keys.items():
        if overrides.get(key) is not None:
            cfg[key] = overrides[key]
        elif key in raw:
            try:
                value = raw[key]
                if conv is bool:
                    cfg[key] = value if isinstance(value, bool) else _parse_bool(str(value))
                else:
                    cfg[key] = conv(value)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        else:
            cfg[key] = default
    return cfg


def _discount(cfg: dict, T: Optional[int]) -> DiscountSequence:
    if cfg.get("gamma") is not None:
        gamma = cfg["gamma"]
        if T is not None and T != len(gamma):
            raise ConfigError(f"T={T} but gamma has {len(gamma)} entries")
        return DiscountSequence(tuple(gamma))
    if cfg.get("ratio") is None or T is None:
        raise ConfigError("need either gamma, or ratio together with T")
    return DiscountSequence.geometric(cfg["ratio"], T)


def _buyer(cfg: dict) -> BuyerStrategy:
    kind = cfg["buyer"].replace("-", "_").lower()
    if kind == "myopic":
        return BuyerStrategy.myopic()
    if kind in ("phase_dp", "tree_optimal"):
        return BuyerStrategy(kind, cfg["grid_size"])
    raise ConfigError(f"unknown buyer {cfg['buyer']!r}")


def _check_v(v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"v={v} outside [0, 1]")


# ---------------------------------------------------------------- commands

def simulate_rows(seq: DiscountSequence, buyer: BuyerStrategy, v: float) -> list[list]:
    run = run_algorithm1(seq, buyer, v)
    problems = transcript_violations(run)
    if problems:
        raise InconsistentBuyerError("; ".join(problems))
    phase_of = run.phase_of_round()
    rows = []
    cum = 0.0
    for t, c in enumerate(run.trajectory.contracts):
        ph = run.phases[phase_of[t]]
        inst = run.instant_regret[t]
        cum += inst
        rows.append([
            t + 1, ph.index, ph.lo_v, ph.hi_v, ph.params.delta, ph.params.epsilon,
            ph.params.delay, c.allocation, c.payment, inst, cum,
        ])
    return rows


def cmd_simulate(cfg: dict) -> int:
    if cfg["v"] is None:
        raise ConfigError("simulate needs v")
    _check_v(cfg["v"])
    seq = _discount(cfg, cfg["T"])
    rows = simulate_rows(seq, _buyer(cfg), cfg["v"])
    _emit(_csv_text(SIMULATE_COLUMNS, rows), cfg["out"], "simulate.csv")
    return EXIT_OK


def _sweep_cell(args) -> list:
    ratio, T, v, kind, grid = args
    seq = DiscountSequence.geometric(ratio, T)
    buyer = BuyerStrategy(kind, None if kind == "myopic" else grid)
    run = run_algorithm1(seq, buyer, v)
    problems = transcript_violations(run)
    if problems:
        raise InconsistentBuyerError(f"v={v}, T={T}: " + "; ".join(problems))
    return [v, T, math.fsum(run.instant_regret), run.phase_regret_bound]


def sweep_grid(cfg: dict) -> list[float]:
    if cfg["v"] is not None:
        grid = list(cfg["v"])
    else:
        if cfg["v_num"] < 1:
            raise ConfigError("v_num must be at least 1")
        grid = np.linspace(cfg["v_start"], cfg["v_stop"], cfg["v_num"]).tolist()
    if not grid:
        raise ConfigError("empty v range")
    for v in grid:
        _check_v(v)
    return grid


def cmd_sweep(cfg: dict) -> int:
    grid = sweep_grid(cfg)
    Ts = cfg["T"]
    if not Ts or any(T < 1 for T in Ts):
        raise ConfigError("T values must be positive")
    if not 0.0 < cfg["ratio"] <= 1.0:
        raise ConfigError("ratio must lie in (0, 1]")
    buyer = _buyer(cfg)
    cells = [(cfg["ratio"], T, v, buyer.kind, cfg["grid_size"]) for T in Ts for v in grid]
    workers = max(1, cfg["workers"])
    if workers == 1:
        rows = [_sweep_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))  # map keeps submission order
    _emit(_csv_text(SWEEP_COLUMNS, rows), cfg["out"], "sweep.csv")
    return EXIT_OK


def _load_mechanism(cfg: dict):
    if cfg["input"] is None:
        raise ConfigError("input mechanism file required")
    try:
        return mechanism_from_dict(read_json(cfg["input"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read mechanism {cfg['input']}: {exc}") from exc


def _print_report(rep, out=None) -> None:
    out = out or sys.stdout
    print(f"min_slack {_fmt(rep.min_slack)}", file=out)
    print(f"violations {len(rep.violations)}", file=out)
    for viol in rep.violations:
        print(f"  {viol.kind} v={_fmt(viol.v)} v_hat={_fmt(viol.v_hat)} t={viol.t} slack={_fmt(viol.slack)}", file=out)


def cmd_check(cfg: dict) -> int:
    mech, seq = _load_mechanism(cfg)
    rep = check_ic_pir(mech, seq, cfg["tolerance"])
    _print_report(rep)
    return EXIT_OK if rep.compliant else EXIT_CHECK


def cmd_convert(cfg: dict) -> int:
    mech, seq = _load_mechanism(cfg)
    rep = check_ic_pir(mech, seq, cfg["tolerance"])
    if not rep.compliant:
        print("input mechanism is not IC/PIR", file=sys.stderr)
        _print_report(rep, sys.stderr)
        return EXIT_PRECONDITION
    out_dir = cfg["out_dir"] or os.environ.get(OUT_ENV) or "."
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    tree, adjusted = direct_to_indirect(mech, seq, audit=cfg["audit"], tolerance=cfg["tolerance"])
    chain = roundtrip_audit(mech, seq, audit=False, tolerance=cfg["tolerance"])
    write_json(Path(out_dir) / "tree.json", tree_to_dict(tree))
    write_json(Path(out_dir) / "adjusted.json", mechanism_to_dict(adjusted, seq))
    rows = [
        [r.v, r.revenue_direct, r.revenue_adjusted, r.revenue_indirect, r.path_matches]
        for r in chain.rows
    ]
    text = _csv_text(["v", "rev_direct", "rev_adjusted", "rev_roundtrip", "path_matches"], rows)
    (Path(out_dir) / "revenue_chain.csv").write_text(text)
    sys.stdout.write(text)
    if not (chain.chain_holds and chain.paths_match):
        print("revenue chain broken", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def lowerbound_instances(pairs: list[float]) -> list[tuple[str, TwoTypeInstance]]:
    if len(pairs) % 2 or not pairs:
        raise ConfigError("pairs must list v_lo, v_hi alternately")
    seqs = [
        ("const2", DiscountSequence((1.0, 1.0))),
        ("half2", DiscountSequence((1.0, 0.5))),
        ("geo0.8_T5", DiscountSequence.geometric(0.8, 5)),
        ("geo0.8_T8", DiscountSequence.geometric(0.8, 8)),
    ]
    out = []
    for label, seq in seqs:
        for lo, hi in zip(pairs[::2], pairs[1::2]):
            out.append((label, TwoTypeInstance(lo, hi, seq)))
    return out


def lowerbound_rows(pairs: list[float]) -> list[list]:
    rows = []
    for label, inst in lowerbound_instances(pairs):
        value, witness = optimal_two_type_regret(inst)
        bound = closed_form_bound(inst.v_lo, inst.v_hi, inst.seq.t_gamma)
        compliant = check_ic_pir(witness, inst.seq).compliant and all(
            s >= -1e-9 for _, s in audit_payment_bound(witness, inst.seq)
        )
        rows.append([
            inst.v_lo, inst.v_hi, label, len(inst.seq), inst.seq.t_gamma,
            value, bound, value - bound, compliant,
        ])
    return rows


def cmd_lowerbound(cfg: dict) -> int:
    rows = lowerbound_rows(cfg["pairs"])
    header = ["v_lo", "v_hi", "gamma", "T", "t_gamma", "lp_value", "closed_form", "slack", "witness_ok"]
    text = _csv_text(header, rows)
    _emit(text, cfg["out"], "lowerbound.csv")
    if cfg["out"] is not None or os.environ.get(OUT_ENV):
        sys.stdout.write(text)
    ok = all(r[7] >= -LB_TOL and r[8] for r in rows)
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "convert": cmd_convert,
    "check": cmd_check,
    "lowerbound": cmd_lowerbound,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mechlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with default values for the flags below")
        for key, (conv, _) in keys.items():
            flag = "--" + key.replace("_", "-")
            kind = _parse_bool if conv is bool else conv
            p.add_argument(flag, dest=key, type=kind, default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.command, args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InconsistentBuyerError, ComplianceLostError) as exc:
        print(f"runtime inconsistency: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PreconditionError, FinalRoundEqualizationError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (MechLabError, ValueError) as exc:
        # validation failures in the domain types (bad gamma, bad tables) are input errors
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
