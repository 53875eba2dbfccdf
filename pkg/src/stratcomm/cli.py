"""Command-line front end: instance files in, CSV results and a run manifest out.

Exit codes: 0 success, 1 replay produced different bytes, 2 validation
error, 3 solver non-convergence, 4 resource cap.
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
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .channel import CapacityError, bsc, capacity, h2
from .prob import Distribution, Kernel, ValidationError
from .scenarios import (ProblemInstance, ResourceLimitError, SolverGrid, cooperative_region, mechanism_value,
                        nash_set, persuasion_value)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
SCENARIOS = ("cooperative", "persuasion", "mechanism", "nash")
MODES = ("honest", "strategic", "lemma1", "lemma2", "finite-n")
SIZE_KEYS = ("U", "X", "Y", "V")
TOP_KEYS = {"schema_version", "name", "sizes", "p_u", "channel", "d_e", "d_d", "solver", "simulator"}
# Value kinds of the optional blocks: "int" positive integer, "seed" nonnegative
# integer, "num" finite nonnegative number, "ints" one or more positive integers,
# "array" numeric array checked by the command that uses it.
SOLVER_KEYS = {"grid_res": "int", "refine_depth": "seed", "eps": "num"}
SIMULATOR_KEYS = {"n": "ints", "rate": "num", "trials": "int", "seed": "seed", "delta": "num",
                  "delta_channel": "num", "eta": "num", "p_w": "array", "q_uw": "array"}


# -- instance files ------------------------------------------------------------------

def _field_error(name: str, msg: str) -> ValidationError:
    return ValidationError(f"field {name!r}: {msg}")


def _matrix(doc: dict, name: str, shape: tuple[int, ...]) -> np.ndarray:
    if name not in doc:
        raise _field_error(name, "missing")
    try:
        arr = np.array(doc[name], dtype=float)
    except (TypeError, ValueError):
        raise _field_error(name, "must be numeric") from None
    if arr.shape != shape:
        raise _field_error(name, f"shape {arr.shape}, expected {shape} from 'sizes'")
    if not np.all(np.isfinite(arr)):
        raise _field_error(name, "non-finite entry")
    return arr


def _kind_ok(kind: str, val) -> bool:
    def is_int(v, low):
        return isinstance(v, int) and not isinstance(v, bool) and v >= low

    if kind == "int":
        return is_int(val, 1)
    if kind == "seed":
        return is_int(val, 0)
    if kind == "num":
        return isinstance(val, (int, float)) and not isinstance(val, bool) and math.isfinite(val) and val >= 0
    if kind == "ints":
        return is_int(val, 1) or (isinstance(val, list) and len(val) > 0 and all(is_int(v, 1) for v in val))
    try:
        return bool(np.all(np.isfinite(np.array(val, dtype=float))))
    except (TypeError, ValueError):
        return False


def parse_instance(doc) -> ProblemInstance:
    """Validate an instance document and build the problem it describes."""
    if not isinstance(doc, dict):
        raise _field_error("instance", "must be a JSON object")
    unknown = sorted(set(doc) - TOP_KEYS)
    if unknown:
        raise _field_error(unknown[0], "unknown field")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise _field_error("schema_version", f"must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    sizes = doc.get("sizes")
    if not isinstance(sizes, dict) or set(sizes) != set(SIZE_KEYS):
        raise _field_error("sizes", f"must map exactly {list(SIZE_KEYS)} to alphabet sizes")
    for k in SIZE_KEYS:
        if not isinstance(sizes[k], int) or isinstance(sizes[k], bool) or sizes[k] < 1:
            raise _field_error(f"sizes.{k}", f"must be a positive integer, got {sizes[k]!r}")
    nu, nx, ny, nv = (sizes[k] for k in SIZE_KEYS)
    p_u = _matrix(doc, "p_u", (nu,))
    channel = _matrix(doc, "channel", (nx, ny))
    d_e = _matrix(doc, "d_e", (nu, nv))
    d_d = _matrix(doc, "d_d", (nu, nv))
    for block, keys in (("solver", SOLVER_KEYS), ("simulator", SIMULATOR_KEYS)):
        extra = doc.get(block, {})
        if not isinstance(extra, dict):
            raise _field_error(block, "must be an object")
        bad = sorted(set(extra) - set(keys))
        if bad:
            raise _field_error(f"{block}.{bad[0]}", "unknown field")
        for key, val in extra.items():
            if not _kind_ok(keys[key], val):
                raise _field_error(f"{block}.{key}", f"invalid value {val!r}")
    for name, value, cls in (("p_u", p_u, Distribution), ("channel", channel, Kernel)):
        try:
            cls(value)
        except ValidationError as err:
            raise _field_error(name, str(err)) from None
    return ProblemInstance(p_u, channel, d_e, d_d, str(doc.get("name", "")))


def load_instance(path: str) -> tuple[ProblemInstance, dict]:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ValidationError(f"cannot read instance file {path!r}: {err.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValidationError(f"instance file {path!r} is not valid JSON: {err}") from None
    return parse_instance(doc), doc


def instance_document(inst: ProblemInstance, **blocks) -> dict:
    """Instance document for a problem, the inverse of ``parse_instance``."""
    doc = {
        "schema_version": SCHEMA_VERSION, "name": inst.name,
        "sizes": {"U": inst.n_u, "X": inst.channel.shape[0], "Y": inst.channel.shape[1], "V": inst.n_v},
        "p_u": inst.prior.tolist(), "channel": np.asarray(inst.channel.rows).tolist(),
        "d_e": inst.d_e.tolist(), "d_d": inst.d_d.tolist(),
    }
    doc.update({k: v for k, v in blocks.items() if v})
    return doc


# -- output -------------------------------------------------------------------------------

def fmt(x) -> str:
    """Shortest round-trip text for numbers, JSON for arrays, plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.ndarray):
        return json.dumps(x.tolist(), separators=(",", ":"))
    if isinstance(x, (list, dict)):
        return json.dumps(x, separators=(",", ":"), sort_keys=True)
    return "" if x is None else str(x)


def csv_bytes(header: list[str], rows: list[dict]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(r.get(h)) for h in header])
    return buf.getvalue().encode()


def write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- commands -------------------------------------------------------------------------------
# Each command returns {file name: (header, rows)} and a one-line summary.

def _grid(p: dict) -> SolverGrid:
    return SolverGrid(resolution=p["grid_res"], refine_depth=p["refine_depth"], eps=p["eps"],
                      workers=p["workers"])


def cmd_capacity(inst: ProblemInstance, p: dict):
    res = capacity(inst.channel)
    row = {"capacity": res.capacity, "lower": res.lower, "upper": res.upper, "residual": res.residual,
           "iterations": res.iterations, "optimal_input": np.asarray(res.optimal_input.probs)}
    header = ["capacity", "lower", "upper", "residual", "iterations", "optimal_input"]
    return {"capacity.csv": (header, [row])}, (f"capacity {res.capacity:.6f} bits, optimal input {fmt(row['optimal_input'])}, "
                                            f"residual {res.residual:.2e}")


SCENARIO_HEADER = ["scenario", "kind", "d_e", "d_d", "value", "lower", "upper", "encoder_slack", "decoder_slack",
                   "capacity", "grid_res", "refine_depth", "eps", "witness"]


def scenario_rows(inst: ProblemInstance, scenario: str, p: dict) -> list[dict]:
    grid = _grid(p)
    base = {"scenario": scenario, "capacity": inst.capacity, "grid_res": p["grid_res"],
            "refine_depth": p["refine_depth"], "eps": p["eps"]}
    rows = []
    if scenario == "cooperative":
        reg = cooperative_region(inst, grid)
        for pt, (lam, val) in zip(reg.envelope_points, reg.envelope):
            rows.append({**base, "kind": "envelope", "d_e": pt.d_e, "d_d": pt.d_d,
                         "value": val, "lower": val, "upper": val,
                         "witness": {"lambda": float(lam), "kernel_v_given_u": pt.witness["kernel"].tolist()}})
        rows.append({**base, "kind": "min_d_e", "value": reg.min_d_e, "lower": reg.min_d_e, "upper": reg.min_d_e})
        rows.append({**base, "kind": "min_d_d", "value": reg.min_d_d, "lower": reg.min_d_d, "upper": reg.min_d_d})
    elif scenario in ("persuasion", "mechanism"):
        res = persuasion_value(inst, grid) if scenario == "persuasion" else mechanism_value(inst, grid)
        d_e, d_d = (res.value, res.induced) if scenario == "persuasion" else (res.induced, res.value)
        rows.append({**base, "kind": "value", "d_e": d_e, "d_d": d_d, "value": res.value,
                     "lower": res.bracket.lower, "upper": res.bracket.upper,
                     "witness": {"q_uw": res.q_uw.tolist(), "v_given_w": res.v_given_w.tolist()}})
    elif scenario == "nash":
        ns = nash_set(inst, p["eps"], grid, seed=p["seed"])
        for i in range(len(ns)):
            e, d = ns.pairs[i]
            rows.append({**base, "kind": str(ns.source[i]), "d_e": e, "d_d": d,
                         "encoder_slack": ns.slacks[i, 0], "decoder_slack": ns.slacks[i, 1],
                         "witness": {"w_given_u": ns.w_given_u[i].tolist(), "v_given_w": ns.v_given_w[i].tolist()}})
    else:
        raise ValidationError(f"unknown scenario {scenario!r}")
    return rows


def cmd_scenario(inst: ProblemInstance, p: dict):
    rows = scenario_rows(inst, p["scenario"], p)
    return {f"scenario_{p['scenario']}.csv": (SCENARIO_HEADER, rows)}, f"{p['scenario']}: {len(rows)} rows"


def _bsc_for_capacity(c: float):
    if not 0 <= c <= 1:
        raise ValidationError(f"capacity sweep value {c} outside [0, 1] for a binary symmetric channel")
    if c >= 1:
        return bsc(0.0)
    if c <= 0:
        return bsc(0.5)
    return bsc(brentq(lambda x: 1 - h2(x) - c, 0.0, 0.5, xtol=1e-15))


SWEEP_HEADER = ["parameter", "x", "capacity", "scenario", "value", "lower", "upper", "induced", "count"]


def cmd_sweep(inst: ProblemInstance, p: dict):
    param, values = p["parameter"], p["values"]
    scenarios = ["nash"] if param == "eps" else p["scenarios"]
    if param in ("channel-noise", "capacity") and inst.channel.shape != (2, 2):
        raise ValidationError(f"a {param} sweep replaces the channel by a binary symmetric one; "
                              f"the instance channel is {inst.channel.shape}")
    rows, plot = [], []
    for x in values:
        q = dict(p)
        if param == "channel-noise":
            if not 0 <= x <= 1:
                raise ValidationError(f"crossover probability {x} outside [0, 1]")
            point = inst.with_channel(bsc(x))
        elif param == "capacity":
            point = inst.with_channel(_bsc_for_capacity(x))
        elif param == "eps":
            point = inst
            q["eps"] = x
        else:
            raise ValidationError(f"unknown sweep parameter {param!r}")
        for sc in scenarios:
            sub = scenario_rows(point, sc, q)
            row = {"parameter": param, "x": x, "capacity": point.capacity, "scenario": sc}
            if sc == "nash":
                best = min(sub, key=lambda r: r["d_e"])
                row.update(value=best["d_e"], lower=best["d_e"], upper=best["d_e"], induced=best["d_d"],
                           count=len(sub))
            elif sc == "cooperative":
                lo = next(r for r in sub if r["kind"] == "min_d_e")
                dd = next(r for r in sub if r["kind"] == "min_d_d")
                row.update(value=lo["value"], lower=lo["value"], upper=lo["value"], induced=dd["value"],
                           count=len(sub) - 2)
            else:
                r = sub[0]
                row.update(value=r["value"], lower=r["lower"], upper=r["upper"],
                           induced=r["d_d"] if sc == "persuasion" else r["d_e"], count=1)
            rows.append(row)
            plot.append({"scenario": sc, "x": x, "y": row["value"], "lower": row["lower"], "upper": row["upper"]})
    files = {"sweep.csv": (SWEEP_HEADER, rows), "sweep_plot.csv": (["scenario", "x", "y", "lower", "upper"], plot)}
    return files, f"{param} sweep: {len(rows)} rows"


SIM_HEADER = ["mode", "n", "rate", "trials", "seed", "quantity", "estimate", "se", "target", "detail"]


def _sim_ensemble(inst: ProblemInstance, p: dict):
    from .sim import EnsembleSimulator, design_scheme, run_ensemble

    n, rate = p["n"][0], p["rate"]
    design = design_scheme(inst, rate, _grid(p))
    sim = EnsembleSimulator(inst, design, n, delta=p["delta"], delta_channel=p["delta_channel"])
    rep = run_ensemble(sim, p["trials"], p["seed"], workers=p["workers"])
    s = rep.summary
    base = {"mode": p["mode"], "n": n, "rate": rate, "trials": p["trials"], "seed": p["seed"]}

    def col(name):
        c = rep.column(name).astype(float)
        return float(c.mean()), float(c.std(ddof=1) / math.sqrt(len(c)))

    rows = [
        {**base, "quantity": "d_e", "estimate": s["d_e"], "se": s["d_e_se"], "target": s["target_d_e"]},
        {**base, "quantity": "d_d", "estimate": s["d_d"], "se": s["d_d_se"], "target": s["target_d_d"]},
        {**base, "quantity": "decode_error", "estimate": s["decode_error"]},
        {**base, "quantity": "cover_failure", "estimate": s["cover_failure"]},
    ]
    if p["mode"] == "strategic":
        for name in ("honest_objective", "strategic_objective", "strategic_d_e", "strategic_d_d"):
            m, se = col(name)
            rows.append({**base, "quantity": name, "estimate": m, "se": se})
        rows += [
            {**base, "quantity": "strategic_violations", "estimate": s["strategic_violations"],
             "detail": rep.search_space},
            {**base, "quantity": "in_q", "estimate": s["in_q"]},
            {**base, "quantity": "packing", "estimate": s["packing"]},
            {**base, "quantity": "composite_bound", "estimate": s["composite_bound"]},
        ]
    return rows


def _simulator_array(inst_doc: dict, key: str):
    val = inst_doc.get("simulator", {}).get(key)
    return None if val is None else np.array(val, dtype=float)


def _sim_lemma(inst: ProblemInstance, p: dict, doc: dict):
    from .sim import lemma1_verify, lemma2_verify

    rows = []
    for n in p["n"]:
        if p["mode"] == "lemma1":
            p_w = _simulator_array(doc, "p_w")
            if p_w is None:
                p_w = np.full(inst.n_w, 1.0 / inst.n_w)
            try:
                Distribution(p_w)
            except ValidationError as err:
                raise _field_error("simulator.p_w", str(err)) from None
            rep = lemma1_verify(inst.prior, p_w, p["rate"], p["eta"], p["delta"], n, p["trials"], p["seed"])
        else:
            q = _simulator_array(doc, "q_uw")
            if q is None:
                raise _field_error("simulator.q_uw", "lemma2 needs the joint Q_UW to cover")
            if q.ndim != 2 or q.shape[0] != inst.n_u:
                raise _field_error("simulator.q_uw", f"shape {q.shape}, expected |U| = {inst.n_u} rows")
            try:
                Distribution(q.ravel())
            except ValidationError as err:
                raise _field_error("simulator.q_uw", str(err)) from None
            rep = lemma2_verify(q, p["eta"], p["delta"], n, p["trials"], p["seed"])
        rows.append({"mode": p["mode"], "n": n, "rate": rep.params["rate"], "trials": rep.trials, "seed": p["seed"],
                     "quantity": "event_probability", "estimate": rep.estimate, "se": rep.se,
                     "target": rep.exact, "detail": {"failures": rep.failures, "log2_bound": rep.params.get("log2_bound")}})
    return rows


def _sim_finite_n(inst: ProblemInstance, p: dict):
    from .scenarios import subadditivity_check
    from .sim import finite_n_game_value

    leaders = ["encoder", "decoder"] if p["leader"] == "both" else [p["leader"]]
    rows = []
    for leader in leaders:
        values = {}
        for n in p["n"]:
            res = finite_n_game_value(inst, n, leader, p["strategies"], _grid(p))
            values[n] = res.value
            rows.append({"mode": "finite-n", "n": n, "trials": 0, "seed": p["seed"], "quantity": f"{leader}_leader",
                         "estimate": res.value, "se": 0.0, "target": res.induced,
                         "detail": {"class": res.strategy_class, "evaluated": res.evaluated,
                                    "leader_table": res.leader_table.tolist()}})
        if p["strategies"] == "deterministic":
            rep = subadditivity_check(values)
            rows.append({"mode": "finite-n", "trials": 0, "seed": p["seed"], "quantity": f"{leader}_subadditive",
                         "estimate": int(rep.ok), "detail": {"checked": rep.checked}})
    return rows


def cmd_simulate(inst: ProblemInstance, p: dict, doc: dict):
    mode = p["mode"]
    if mode in ("honest", "strategic"):
        if p["rate"] is None:
            raise ValidationError("--rate is required for honest and strategic modes")
        if p["trials"] < 2:
            raise ValidationError("--trials must be >= 2 for standard errors")
        rows = _sim_ensemble(inst, p)
    elif mode in ("lemma1", "lemma2"):
        if mode == "lemma1" and p["rate"] is None:
            raise ValidationError("--rate is required for lemma1")
        rows = _sim_lemma(inst, p, doc)
    elif mode == "finite-n":
        rows = _sim_finite_n(inst, p)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return {f"simulate_{mode}.csv": (SIM_HEADER, rows)}, f"simulate {mode}: {len(rows)} rows"


# -- argument handling ----------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratcomm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("instance", help="instance JSON file")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--workers", type=int, default=1, help="worker threads; results do not depend on it")
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--grid-res", type=int, help="coarse grid steps per unit (default 50)")
    grid.add_argument("--refine-depth", type=int, help="refinement levels (default 2)")
    grid.add_argument("--eps", type=float, help="Nash tolerance (default 0.01)")
    grid.add_argument("--seed", type=int, help="root seed (default 0)")

    sub.add_parser("capacity", parents=[common], help="channel capacity")
    sc = sub.add_parser("scenario", parents=[common, grid], help="single-letter scenario values")
    sc.add_argument("--scenario", choices=SCENARIOS, required=True)
    sw = sub.add_parser("sweep", parents=[common, grid], help="scenario values along a parameter sweep")
    sw.add_argument("--parameter", choices=("channel-noise", "capacity", "eps"), required=True)
    sw.add_argument("--values", type=_floats, required=True, help="comma-separated sweep points")
    sw.add_argument("--scenarios", default="persuasion", help="comma-separated scenarios (ignored for eps)")
    sim = sub.add_parser("simulate", parents=[common, grid], help="block-coding simulation")
    sim.add_argument("--mode", choices=MODES, required=True)
    sim.add_argument("--n", type=_ints, help="blocklength, or a comma-separated ladder")
    sim.add_argument("--rate", type=float, help="code rate R in bits per symbol")
    sim.add_argument("--trials", type=int, help="Monte Carlo trials (default 1000)")
    sim.add_argument("--delta", type=float, help="typicality tolerance for the source")
    sim.add_argument("--delta-channel", type=float, help="typicality tolerance for channel decoding (default 0.16)")
    sim.add_argument("--eta", type=float, help="rate margin in the lemma checks (default 0.1)")
    sim.add_argument("--leader", choices=("encoder", "decoder", "both"), default="both")
    sim.add_argument("--strategies", choices=("auto", "deterministic", "mixed"), default="auto")
    rp = sub.add_parser("replay", help="re-run a manifest and compare output bytes")
    rp.add_argument("manifest", help="manifest.json of an earlier run")
    rp.add_argument("--out", required=True, help="output directory for the replayed run")
    rp.add_argument("--workers", type=int, default=1)
    return parser


def resolve(args: argparse.Namespace, doc: dict) -> dict:
    """Effective parameters: command-line flags over the instance's blocks over defaults."""
    solver = doc.get("solver", {})
    simulator = doc.get("simulator", {})

    def pick(name, block, key, default):
        val = getattr(args, name, None)
        return val if val is not None else block.get(key, default)

    p = {"command": args.command, "workers": args.workers}
    if args.workers < 1:
        raise ValidationError("--workers must be >= 1")
    if args.command != "capacity":
        p.update(grid_res=pick("grid_res", solver, "grid_res", 50),
                 refine_depth=pick("refine_depth", solver, "refine_depth", 2),
                 eps=pick("eps", solver, "eps", 0.01), seed=pick("seed", simulator, "seed", 0))
        for flag, key, low in (("--grid-res", "grid_res", 1), ("--refine-depth", "refine_depth", 0),
                               ("--eps", "eps", 0), ("--seed", "seed", 0)):
            if p[key] < low:
                raise ValidationError(f"{flag} must be >= {low}, got {p[key]}")
    if args.command == "scenario":
        p["scenario"] = args.scenario
    elif args.command == "sweep":
        p.update(parameter=args.parameter, values=list(args.values),
                 scenarios=[s.strip() for s in args.scenarios.split(",") if s.strip()])
        bad = [s for s in p["scenarios"] if s not in SCENARIOS]
        if bad:
            raise ValidationError(f"unknown scenario {bad[0]!r} in --scenarios")
    elif args.command == "simulate":
        n = args.n if args.n is not None else simulator.get("n")
        if n is None:
            raise ValidationError("--n is required (or simulator.n in the instance)")
        n = [n] if isinstance(n, int) else list(n)
        p.update(mode=args.mode, n=n, rate=pick("rate", simulator, "rate", None),
                 trials=pick("trials", simulator, "trials", 1000),
                 delta=pick("delta", simulator, "delta", 0.1 if args.mode in ("honest", "strategic") else 0.05),
                 delta_channel=pick("delta_channel", simulator, "delta_channel", 0.16),
                 eta=pick("eta", simulator, "eta", 0.1), leader=args.leader, strategies=args.strategies)
        if p["trials"] < 1:
            raise ValidationError("--trials must be >= 1")
    return p


def run(p: dict, inst: ProblemInstance, doc: dict, out: Path, argv: list[str], source: str) -> int:
    start = time.perf_counter()
    cmd = p["command"]
    if cmd == "capacity":
        files, summary = cmd_capacity(inst, p)
    elif cmd == "scenario":
        files, summary = cmd_scenario(inst, p)
    elif cmd == "sweep":
        files, summary = cmd_sweep(inst, p)
    else:
        files, summary = cmd_simulate(inst, p, doc)
    outputs = []
    for name, (header, rows) in files.items():
        data = csv_bytes(header, rows)
        write_atomic(out / name, data)
        outputs.append({"path": name, "sha256": sha256(data)})
    manifest = {
        "schema_version": SCHEMA_VERSION, "tool": "stratcomm", "version": __version__, "command": cmd,
        "argv": argv, "parameters": p, "seed": p.get("seed"), "instance": doc, "instance_source": source,
        "instance_sha256": sha256(json.dumps(doc, sort_keys=True).encode()),
        "wall_time_s": round(time.perf_counter() - start, 3), "outputs": outputs,
    }
    write_atomic(out / MANIFEST_NAME, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    print(summary)
    for o in outputs:
        print(f"wrote {out / o['path']}")
    return 0


def replay(manifest_path: str, out: Path, workers: int) -> int:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
        p = dict(manifest["parameters"])
        doc = manifest["instance"]
        expected = {o["path"]: o["sha256"] for o in manifest["outputs"]}
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as err:
        raise ValidationError(f"unreadable manifest {manifest_path!r}: {err}") from None
    if workers < 1:
        raise ValidationError("--workers must be >= 1")
    p["workers"] = workers
    inst = parse_instance(doc)
    run(p, inst, doc, out, ["replay", manifest_path], f"manifest {manifest_path}")
    status = 0
    for name, digest in expected.items():
        got = sha256((out / name).read_bytes())
        same = got == digest
        print(f"{name}: {'identical' if same else 'DIFFERS'}")
        status = status or (0 if same else 1)
    return status


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return replay(args.manifest, Path(args.out), args.workers)
        inst, doc = load_instance(args.instance)
        p = resolve(args, doc)
        return run(p, inst, doc, Path(args.out), argv, args.instance)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CapacityError as err:
        print(f"error: solver did not converge: {err}", file=sys.stderr)
        return 3
    except ResourceLimitError as err:
        print(f"error: resource cap: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
