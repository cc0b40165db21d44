"""Scenario files and the ``onebit`` command line.

Scenario files are JSON with 1-based agent and mode indices.  A name that
is not an existing path is looked up among the packaged scenarios
(``example1``, ``example2``, ``example1_published``).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import check_report, difference_equation_oracle, lambda_min_U, rate_slope, theorem_constants
from .channel import LinkConfig, NoiseModel
from .engine import EnsembleMetrics, SimConfig, run_replications
from .errors import ConsensusError, NumericalError, ValidationError
from .linsys import GainPair, LinearSystem, gain_identity_residuals, gains_for, to_brunovsky, zoh_discretize
from .topology import Graph, MarkovTopologyProcess

OUTPUT_DIR_ENV = "ONEBIT_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


class ParseError(ConsensusError):
    """Scenario or data file cannot be read or is not valid JSON."""


@dataclass(eq=False)
class Scenario:
    name: str
    config: SimConfig
    description: str = ""
    units: str = ""
    continuous: LinearSystem | None = None
    T: float | None = None
    b: np.ndarray | None = None
    published_gains: bool = False
    source: str = ""
    raw: dict = field(default_factory=dict, repr=False)


def _packaged(name: str) -> Path | None:
    stem = name[:-5] if name.endswith(".json") else name
    ref = resources.files("onebit_consensus") / "scenarios" / f"{stem}.json"
    return Path(str(ref)) if ref.is_file() else None


def resolve_scenario(path) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    found = _packaged(p.name)
    if found is None:
        raise ParseError(f"scenario {str(path)!r} not found on disk or among packaged scenarios")
    return found


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Loader:
    """Pulls typed fields out of the parsed JSON, pointing errors at the source line."""

    def __init__(self, data: dict, text: str, source: str):
        self.data, self.text, self.source = data, text, source

    def fail(self, key: str, msg: str, exc=ValidationError):
        line = _line_of(self.text, key.split(".")[-1].split("[")[0])
        where = f"{self.source}:{line}" if line else self.source
        raise exc(f"{where}: {key}: {msg}")

    def get(self, key: str, default=KeyError, within: dict | None = None, path: str | None = None):
        obj = self.data if within is None else within
        if key not in obj:
            if default is KeyError:
                self.fail(path or key, "required field is missing")
            return default
        return obj[key]

    def number(self, key, default=KeyError, positive=False, within=None, path=None):
        v = self.get(key, default, within, path)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.fail(path or key, f"expected a finite number, got {v!r}")
        if positive and not v > 0:
            self.fail(path or key, f"must be positive, got {v!r}")
        return float(v)

    def array(self, key, ndim, within=None, path=None, default=KeyError):
        v = self.get(key, default, within, path)
        if v is None:
            return None
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(path or key, "expected a numeric array")
        if arr.ndim != ndim or not np.all(np.isfinite(arr)):
            self.fail(path or key, f"expected a finite {ndim}-D numeric array")
        return arr

    def wrap(self, key: str, fn):
        """Run ``fn`` and re-raise library validation errors with the field location."""
        try:
            return fn()
        except ValidationError as exc:
            self.fail(key, str(exc), type(exc))


def _read_json(path: Path) -> tuple[dict, str]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return data, text


def _graphs(ld: _Loader, N: int | None) -> list[Graph]:
    specs = ld.get("graphs")
    if not isinstance(specs, list) or not specs:
        ld.fail("graphs", "expected a non-empty list of graphs")
    if N is None:
        top = 0
        for g in specs:
            for e in g.get("edges", []) if isinstance(g, dict) else []:
                if isinstance(e, list) and e:
                    top = max(top, *[int(v) for v in e if isinstance(v, (int, float))])
        N = top
    graphs = []
    for k, g in enumerate(specs):
        key = f"graphs[{k}].edges"
        if not isinstance(g, dict) or not isinstance(g.get("edges"), list):
            ld.fail(key, "each graph needs an 'edges' list")
        pairs = []
        for e in g["edges"]:
            if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
                ld.fail(key, f"edge {e!r} is not a pair of 1-based integers")
            pairs.append((e[0] - 1, e[1] - 1))
        if bool(g.get("undirected", True)):
            graphs.append(ld.wrap(key, lambda: Graph.undirected(N, pairs)))
        else:
            graphs.append(ld.wrap(key, lambda: Graph(N, tuple(pairs))))
    return graphs


def _thresholds(ld: _Loader, union: Graph) -> np.ndarray:
    block = ld.get("thresholds")
    if isinstance(block, (int, float)) and not isinstance(block, bool):
        block = {"default": block}
    if not isinstance(block, dict):
        ld.fail("thresholds", "expected a number or {default, overrides}")
    c = np.full(union.d, ld.number("default", within=block, path="thresholds.default"))
    index = {e: s for s, e in enumerate(union.edges)}
    for item in block.get("overrides", []):
        if not (isinstance(item, list) and len(item) == 3):
            ld.fail("overrides", f"override {item!r} must be [listener, source, c]")
        e = (int(item[0]) - 1, int(item[1]) - 1)
        if e not in index:
            ld.fail("overrides", f"edge ({item[0]}, {item[1]}) is not in the topology")
        c[index[e]] = float(item[2])
    return c


def _system(ld: _Loader):
    block = ld.get("system")
    if not isinstance(block, dict):
        ld.fail("system", "expected an object with kind, A, B")
    kind = block.get("kind", "discrete")
    A = ld.array("A", 2, within=block, path="system.A")
    B = ld.array("B", 1, within=block, path="system.B")
    sys_ = ld.wrap("system", lambda: LinearSystem(A, B, kind))
    if kind == "continuous":
        T = ld.number("T", positive=True, within=block, path="system.T")
        return sys_, T, ld.wrap("system", lambda: zoh_discretize(sys_, T))
    return None, None, sys_


def _canonical_b(sys_: LinearSystem, K2) -> np.ndarray:
    """Compression coefficients implied by a supplied ``K2`` (its canonical-frame row)."""
    try:
        P = to_brunovsky(sys_).P
    except ValidationError:
        return np.zeros(0)
    row = np.asarray(K2, dtype=float) @ np.linalg.inv(P)
    return row[:-1] / row[-1]


def scenario_from_dict(data: dict, text: str = "", source: str = "<scenario>", **overrides) -> Scenario:
    ld = _Loader(data, text or json.dumps(data, indent=2), source)
    cont, T, disc = _system(ld)

    has_gains, has_b = "gains" in data, "compression" in data
    if has_gains == has_b:
        ld.fail("gains", "give exactly one of 'gains' (K1, K2) or 'compression' (b)")
    if has_gains:
        g = ld.get("gains")
        K1 = ld.array("K1", 1, within=g, path="gains.K1")
        K2 = ld.array("K2", 1, within=g, path="gains.K2")
        gains = ld.wrap("gains", lambda: GainPair(K1, K2, _canonical_b(disc, K2), "original"))
        b = None
    else:
        b = ld.array("b", 1, within=ld.get("compression"), path="compression.b")
        gains = ld.wrap("compression", lambda: gains_for(disc, b).original)

    N = data.get("agents")
    x0 = ld.array("x0", 2)
    N = int(N) if N is not None else x0.shape[0]
    graphs = _graphs(ld, N)
    if "transition" in data:
        P = ld.array("transition", 2)
        topo = ld.wrap("transition", lambda: MarkovTopologyProcess(tuple(graphs), P))
        union = topo.union
    else:
        if len(graphs) != 1:
            ld.fail("transition", "several graphs need a transition matrix")
        topo = union = graphs[0]

    noise = ld.get("noise")
    sigma = ld.number("sigma", within=noise if isinstance(noise, dict) else {}, path="noise.sigma")
    link = ld.wrap("noise", lambda: LinkConfig(_thresholds(ld, union), NoiseModel(sigma)))

    zhat0 = data.get("zhat0", 0.0)
    zhat0 = ld.array("zhat0", 1) if isinstance(zhat0, list) else ld.number("zhat0", 0.0)
    t0 = data.get("t0")
    if t0 is not None and (isinstance(t0, bool) or not isinstance(t0, int)):
        ld.fail("t0", f"expected an integer, got {t0!r}")
    seed = data.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        ld.fail("seed", "a nonnegative integer seed is required")
    kwargs = dict(
        system=disc,
        gains=gains,
        topology=topo,
        link=link,
        beta=ld.number("beta"),
        gamma=ld.number("gamma"),
        M=ld.number("M", positive=True),
        x0=x0,
        zhat0=zhat0,
        t0=t0,
        horizon=int(data.get("horizon", 100_000)),
        seed=seed,
        replications=int(data.get("replications", 50)),
        initial_mode=int(data.get("initial_mode", 1)) - 1,
        gain_tol=ld.number("gain_tol", 1e-6, positive=True),
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = SimConfig(**kwargs)
    except ValidationError as exc:
        ld.fail(_config_field(str(exc)), str(exc), type(exc))
    return Scenario(
        name=str(data.get("name", Path(source).stem)),
        config=cfg,
        description=str(data.get("description", "")),
        units=str(data.get("units", "")),
        continuous=cont,
        T=T,
        b=b,
        published_gains=has_gains,
        source=source,
        raw=data,
    )


_CONFIG_FIELDS = (
    ("K2 x_i^0", "x0"),
    ("initial estimates", "zhat0"),
    ("t0", "t0"),
    ("gain identities", "gains"),
    ("connected", "graphs"),
    ("initial_mode", "initial_mode"),
    ("thresholds", "thresholds"),
    ("x0", "x0"),
)


def _config_field(msg: str) -> str:
    """Scenario field a SimConfig complaint belongs to, for the line number."""
    for needle, key in _CONFIG_FIELDS:
        if needle in msg:
            return key
    return "name"


def load_scenario(path, **overrides) -> Scenario:
    """Read, validate and assemble a scenario; keyword overrides replace SimConfig fields."""
    p = resolve_scenario(path)
    data, text = _read_json(p)
    return scenario_from_dict(data, text, str(p), **overrides)


# -- outputs -----------------------------------------------------------------

def trace_rows(metrics: EnsembleMetrics):
    """Rows ``t, m, agent, x_1..x_n, cons_err, V, R``.

    ``x`` and ``m`` come from replication 0; ``cons_err``, ``V`` and ``R`` are
    ensemble means.  Agents are 1-based, modes 1-based.
    """
    rep = metrics.representative
    for k, t in enumerate(metrics.t):
        for i in range(rep.x.shape[1]):
            yield [int(t), int(rep.m[k]) + 1, i + 1, *rep.x[k, i], metrics.cons_err[k, i], metrics.V[k], metrics.R[k]]


def write_trace_csv(metrics: EnsembleMetrics, dest) -> None:
    """Write the trace to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(metrics, dest)
    else:
        with open(dest, "w", newline="") as fh:
            _write_rows(metrics, fh)


def _write_rows(metrics, fh) -> None:
    n = metrics.representative.x.shape[2]
    w = csv.writer(fh)
    w.writerow(["t", "m", "agent", *[f"x_{j + 1}" for j in range(n)], "cons_err", "V", "R"])
    for row in trace_rows(metrics):
        # repr keeps every float bit so a re-read reproduces the columns exactly
        w.writerow([v if isinstance(v, int) else repr(float(v)) for v in row])


def read_trace_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: [] for h in header}
    for r in body:
        for h, v in zip(header, r):
            cols[h].append(v)
    out = {}
    for h, vals in cols.items():
        out[h] = np.array([int(v) for v in vals]) if h in ("t", "m", "agent") else np.array([float(v) for v in vals])
    return out


def summary(scn: Scenario, metrics: EnsembleMetrics, window=None) -> dict:
    cfg = scn.config
    t = metrics.t
    if window is None:
        window = (float(t[-1]) / 100.0, float(t[-1]))
    try:
        fit = rate_slope(metrics, "cons_err", window)
        slope, r2 = fit.slope, fit.r2
    except ValidationError:
        slope = r2 = None
    return {
        "scenario": scn.name,
        "slope": slope,
        "slope_r2": r2,
        "slope_window": list(window),
        "final_mse": float(metrics.max_cons_err[-1]),
        "max_abs_compressed": metrics.max_compressed,
        "params": {
            "beta": cfg.beta,
            "gamma": cfg.gamma,
            "M": cfg.M,
            "t0": cfg.t0,
            "horizon": cfg.horizon,
            "replications": cfg.replications,
            "seed": cfg.seed,
            "N": cfg.N,
            "n": cfg.system.n,
            "modes": cfg.process.h,
        },
    }


def _output_path(out: str | None) -> Path | None:
    if out is None:
        return None
    p = Path(out)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(obj, out: Path | None) -> None:
    text = json.dumps(obj, indent=2)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")


# -- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    scn = load_scenario(args.scenario, replications=args.reps, seed=args.seed, horizon=args.horizon)
    metrics = run_replications(scn.config)
    info = summary(scn, metrics)
    out = _output_path(args.out)
    if args.format == "csv":
        if out is None:
            write_trace_csv(metrics, sys.stdout)
        else:
            write_trace_csv(metrics, out)
            _emit(info, out.with_suffix(".summary.json"))
            print(json.dumps(info, indent=2))
    else:
        _emit(info, out)
    return EXIT_OK


def _constants(scn: Scenario):
    cfg = scn.config
    return theorem_constants(cfg.topology, cfg.link, cfg.M)


def cmd_check(args) -> int:
    scn = load_scenario(args.scenario)
    cfg = scn.config
    report = check_report(_constants(scn), cfg.beta, cfg.gamma)
    r_b, r_a = gain_identity_residuals(cfg.system.A, cfg.system.B, cfg.gains.K1, cfg.gains.K2)
    report["gain_residuals"] = {"K2B_minus_1": r_b, "K2_closed_loop_inf": r_a}
    report["t0"] = cfg.t0
    _emit(report, _output_path(args.out))
    return EXIT_OK


def cmd_discretize(args) -> int:
    scn = load_scenario(args.scenario)
    if scn.continuous is None:
        raise ValidationError("scenario system is already discrete; nothing to discretize")
    T = args.T if args.T is not None else scn.T
    d = zoh_discretize(scn.continuous, T)
    _emit({"T": T, "A_d": d.A.tolist(), "B_d": d.B.tolist()}, _output_path(args.out))
    return EXIT_OK


def _read_eta(path) -> np.ndarray:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{p}: {exc.strerror or exc}") from exc
    try:
        if text.lstrip().startswith("["):
            return np.asarray(json.loads(text), dtype=float).reshape(-1)
        return np.array([float(v) for v in text.split()])
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{p}: eta must be a JSON list or whitespace-separated numbers") from exc


def cmd_oracle(args) -> int:
    if args.b is not None:
        b = np.array([float(v) for v in args.b.split(",")]) if args.b else np.zeros(0)
    elif args.scenario is not None:
        scn = load_scenario(args.scenario)
        b = scn.b if scn.b is not None else scn.config.gains.b
    else:
        raise ValidationError("oracle needs --b or --scenario")
    eta = _read_eta(args.eta)
    res = difference_equation_oracle(b, eta, args.eta_limit)
    _emit({"b": b.tolist(), "xi": res.xi.tolist(), "xi_star": res.xi_star}, _output_path(args.out))
    return EXIT_OK


def cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",")]
    base = load_scenario(args.scenario)
    consts = _constants(base)
    rows = []
    for v in values:
        scn = load_scenario(args.scenario, replications=args.reps, seed=args.seed, horizon=args.horizon, **{args.param: v})
        cfg = scn.config
        metrics = run_replications(cfg)
        info = summary(scn, metrics)
        lam, regime = lambda_min_U(cfg.beta, cfg.gamma, consts)
        rows.append([v, info["slope"], info["slope_r2"], info["final_mse"], lam, regime])
    out = _output_path(args.out)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow([args.param, "slope", "r2", "final_mse", "lambda_min_U", "regime"])
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    finally:
        if out:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onebit", description="One-bit consensus simulator and analysis tools.")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_arg(p, required=True):
        p.add_argument("--scenario", required=required, help="scenario JSON path or packaged name")

    p = sub.add_parser("run", help="simulate a scenario and report the empirical rate")
    scenario_arg(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="theorem constants and beta/gamma admissibility")
    scenario_arg(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("discretize", help="zero-order-hold discretization of the scenario system")
    scenario_arg(p)
    p.add_argument("--T", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("oracle", help="iterate the compressed-to-original difference equation")
    scenario_arg(p, required=False)
    p.add_argument("--b", help="comma-separated b_1..b_{n-1}")
    p.add_argument("--eta", required=True, help="file with the eta sequence")
    p.add_argument("--eta-limit", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="rate slope over a grid of beta or gamma")
    scenario_arg(p)
    p.add_argument("--param", choices=("beta", "gamma"), required=True)
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
