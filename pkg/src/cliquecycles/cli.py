"""clique-cycles: generation, detection, sweeps, quantum emulation and exponent tables.

Every run prints its RunSpec as JSON on stderr.  Feeding that JSON back via
``clique-cycles --replay FILE`` repeats the run exactly.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import secrets
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import graphs, rhobound
from .detect import ALGORITHM_TAGS, load_constants, run_algorithm

log = logging.getLogger("cliquecycles")

SCHEMA_VERSION = 1
SUBCOMMANDS = ("gen", "detect", "bench", "rho", "qsim")
QUANTUM_TAGS = ("q_basic", "q_fast")
BENCH_FIELDS = ["schema_version", "n", "h", "directed", "planted", "t", "x", "delta", "algorithm",
                "median_rounds", "predicted_rounds", "runs", "answers_true", "seed"]
PREDICT_TAG = {"main": "main", "fvic": "fvic", "fvic_doubling": "fvic", "fc": "fc",
               "fc_doubling": "fc", "fmm": "fmm", "dlp": "dlp", "q_basic": "q_basic",
               "q_fast": "q_fast"}
THREADS_ENV = "CLIQUE_CYCLES_THREADS"


class RunSpecError(ValueError):
    pass


@dataclass
class RunSpec:
    subcommand: str
    seed: Optional[int] = None
    graph_file: Optional[str] = None
    gen: Optional[str] = None
    params: dict = field(default_factory=dict)
    algorithms: list = field(default_factory=list)
    h: int = 3
    directed: bool = False
    constants: str = "desk"
    p: Optional[float] = None
    a: Optional[float] = None
    sweep_n: list = field(default_factory=list)
    sweep_t: list = field(default_factory=list)
    runs: int = 1
    out: Optional[str] = None
    figures: bool = False
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "RunSpec":
        if self.subcommand not in SUBCOMMANDS:
            raise RunSpecError(f"unknown subcommand {self.subcommand!r}")
        if self.h < 3:
            raise RunSpecError("h must be at least 3")
        for algo in self.algorithms:
            if algo not in ALGORITHM_TAGS:
                raise RunSpecError(f"unknown algorithm {algo!r}; choose from {ALGORITHM_TAGS}")
        if self.subcommand == "qsim":
            bad = [a for a in self.algorithms if a not in QUANTUM_TAGS]
            if bad or self.h != 3:
                raise RunSpecError("qsim runs q_basic/q_fast on triangles only")
        if self.subcommand in ("gen", "detect", "qsim"):
            if (self.graph_file is None) == (self.gen is None):
                raise RunSpecError("give exactly one of --graph FILE or a generator")
            if self.gen is not None and self.gen not in graphs.GENERATOR_KINDS:
                raise RunSpecError(f"unknown generator {self.gen!r}")
        if self.subcommand == "gen" and self.out is None:
            raise RunSpecError("gen needs --out")
        if self.subcommand == "bench":
            if not self.sweep_n or not self.sweep_t:
                raise RunSpecError("bench needs --n and --t lists")
            if self.out is None:
                raise RunSpecError("bench needs --out")
        if self.subcommand == "rho" and self.out is None:
            raise RunSpecError("rho needs --out DIR")
        if self.runs < 1:
            raise RunSpecError("--runs must be positive")
        if self.figures and self.subcommand not in ("bench", "rho"):
            raise RunSpecError("--figures applies to bench and rho")
        load_constants(self.constants)
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunSpec":
        data = dict(data)
        if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise RunSpecError(f"RunSpec schema {data['schema_version']} is not supported")
        return cls(**data).validate()


# ------------------------------------------------------------------ parsing

def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    for conv in (int, float):
        try:
            return key, conv(val)
        except ValueError:
            pass
    if val.lower() in ("true", "false"):
        return key, val.lower() == "true"
    return key, val


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(sp, graph: bool = True):
    sp.add_argument("--seed", type=int, help="random seed (printed when omitted)")
    sp.add_argument("--h", type=int, default=3, help="cycle length")
    sp.add_argument("--directed", action="store_true")
    sp.add_argument("--constants", default="desk",
                    help="constants profile name or JSON file (default: desk)")
    sp.add_argument("--out", help="output path")
    if graph:
        sp.add_argument("--graph", help="edge-list file")
        sp.add_argument("--gen", help="generator kind, see `gen --help`")
        sp.add_argument("--n", type=int, help="vertex count for the generator")
        sp.add_argument("--param", type=_param, action="append", default=[],
                        metavar="KEY=VALUE", help="extra generator parameter")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clique-cycles", description=__doc__.splitlines()[0])
    ap.add_argument("--replay", metavar="RUNSPEC", help="repeat a run from its RunSpec JSON")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand")

    g = sub.add_parser("gen", help="write a generated graph and its cycle statistics")
    g.add_argument("kind", choices=graphs.GENERATOR_KINDS)
    g.add_argument("size", nargs="?", type=int, help="shorthand for --n")
    _add_common(g, graph=False)
    g.add_argument("--n", type=int)
    g.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")

    d = sub.add_parser("detect", help="run one detection algorithm")
    _add_common(d)
    d.add_argument("--algo", default="main", choices=ALGORITHM_TAGS)
    d.add_argument("--p", type=float, help="sampling probability for fvic/fc")
    d.add_argument("--a", type=float, help="balance exponent for fc")

    b = sub.add_parser("bench", help="sweep planted cycle counts, one CSV row per cell")
    _add_common(b, graph=False)
    b.add_argument("--gen", default="planted_disjoint_cycles",
                   help="generator; each --t value is passed as its `count`")
    b.add_argument("--n", type=_int_list, required=True, help="comma-separated n values")
    b.add_argument("--t", type=_int_list, required=True, help="comma-separated planted counts")
    b.add_argument("--algo", default="main", help="comma-separated algorithm tags")
    b.add_argument("--runs", type=int, default=3, help="seeds per cell")
    b.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    b.add_argument("--figures", action="store_true", help="also write a PNG next to the CSV")

    r = sub.add_parser("rho", help="write exponent table, fitted line and round-exponent curves")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--h", type=int, default=3)
    r.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    r.add_argument("--figures", action="store_true", help="also write PNGs")

    q = sub.add_parser("qsim", help="emulate a quantum triangle detector")
    _add_common(q)
    q.add_argument("--algo", default="q_fast", choices=QUANTUM_TAGS)
    return ap


def spec_from_args(args) -> RunSpec:
    cmd = args.subcommand
    params = dict(getattr(args, "param", []) or [])
    spec = RunSpec(subcommand=cmd, seed=args.seed, out=getattr(args, "out", None),
                   h=args.h, figures=getattr(args, "figures", False))
    if cmd == "rho":
        return spec.validate()
    spec.directed = args.directed
    spec.constants = args.constants
    if cmd == "bench":
        spec.gen = args.gen
        spec.sweep_n = args.n
        spec.sweep_t = args.t
        spec.algorithms = [a for a in args.algo.split(",") if a]
        spec.runs = args.runs
        spec.params = params
        return spec.validate()
    if cmd == "gen":
        spec.gen = args.kind
        n = args.n if args.n is not None else args.size
    else:
        spec.gen = args.gen
        spec.graph_file = args.graph
        n = args.n
        spec.algorithms = [args.algo]
        if cmd == "detect":
            spec.p, spec.a = args.p, args.a
    if spec.gen is not None:
        if n is not None:
            params["n"] = n
        if spec.directed:
            params["directed"] = True
        if spec.gen == "planted_disjoint_cycles":
            params.setdefault("h", spec.h)
    spec.params = params
    return spec.validate()


# ------------------------------------------------------------------ helpers

def _load_graph(spec: RunSpec) -> graphs.Graph:
    if spec.graph_file is not None:
        return graphs.read_edgelist(spec.graph_file)
    return graphs.generate(spec.gen, spec.params, spec.seed)


def _stats(g: graphs.Graph, h: int) -> Optional[dict]:
    try:
        return graphs.cycle_stats(g, h).as_dict()
    except graphs.OracleLimitError as exc:
        log.warning("cycle statistics omitted: %s", exc)
        return None


def _write_json(obj, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _predicted(algo: str, n: int, h: int, t: int, x: int, delta) -> float:
    tag = PREDICT_TAG[algo]
    if tag in ("fvic", "fc") and (t == 0 or delta is None):
        return float("nan")
    return rhobound.predicted_rounds(tag, n, h=h, t=t, x=x, delta=delta)


# ------------------------------------------------------------------ commands

def cmd_gen(spec: RunSpec) -> int:
    g = _load_graph(spec)
    graphs.write_edgelist(g, spec.out)
    stats = _stats(g, spec.h)
    side = {"schema_version": SCHEMA_VERSION, "n": g.n, "directed": g.directed,
            "edges": g.num_edges, "generator": spec.gen, "params": spec.params,
            "seed": spec.seed}
    if stats is not None:
        side.update(stats)
    _write_json(side, spec.out + ".stats.json")
    return 0


def _run_one(spec: RunSpec) -> dict:
    g = _load_graph(spec)
    if spec.algorithms[0] in QUANTUM_TAGS and (spec.h != 3 or g.directed):
        raise RunSpecError("quantum detectors handle undirected triangles only")
    const = load_constants(spec.constants)
    res = run_algorithm(spec.algorithms[0], g, spec.h, const, spec.seed, spec.p, spec.a)
    stats = _stats(g, spec.h) or {"t": None, "x": None, "delta": None}
    return res.to_json(schema_version=SCHEMA_VERSION, n=g.n, h=spec.h, directed=g.directed,
                       t=stats["t"], x=stats["x"], delta=stats["delta"], seed=spec.seed,
                       runspec=asdict(spec))


def cmd_detect(spec: RunSpec) -> int:
    _write_json(_run_one(spec), spec.out)
    return 0


cmd_qsim = cmd_detect


def _bench_cell(cell: dict) -> dict:
    """One (n, t, algorithm) cell; runs in a worker process."""
    n, t, algo = cell["n"], cell["t"], cell["algorithm"]
    h = cell["h"]
    params = dict(cell["params"], n=n, count=t)
    if cell["gen"] == "planted_disjoint_cycles":
        params.setdefault("h", h)
    if cell["directed"]:
        params["directed"] = True
    g = graphs.generate(cell["gen"], params, cell["seed"])
    st = graphs.cycle_stats(g, h)
    const = load_constants(cell["constants"])
    seeds = np.random.SeedSequence([cell["seed"], n, t]).generate_state(cell["runs"]).tolist()
    rounds, hits = [], 0
    for s in seeds:
        res = run_algorithm(algo, g, h, const, int(s))
        if algo in QUANTUM_TAGS:
            rounds.append(res.extra["charged_quantum_rounds"])
        else:
            rounds.append(res.rounds)
        hits += bool(res.answer)
    return {"schema_version": SCHEMA_VERSION, "n": n, "h": h, "directed": g.directed,
            "t": st.t, "x": st.x, "delta": "" if st.delta is None else st.delta,
            "algorithm": algo, "median_rounds": statistics.median(rounds),
            "predicted_rounds": _predicted(algo, n, h, st.t, st.x, st.delta),
            "runs": len(rounds), "answers_true": hits, "seed": cell["seed"],
            "_key": (n, t, algo)}


def _read_done(path: Path) -> tuple[list[dict], set]:
    if not path.exists() or path.stat().st_size == 0:
        return [], set()
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != set(BENCH_FIELDS):
        raise RunSpecError(f"{path} has a different CSV schema; use a new --out")
    return rows, {(int(r["n"]), int(r["planted"]), r["algorithm"]) for r in rows}


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise RunSpecError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def cmd_bench(spec: RunSpec) -> int:
    path = Path(spec.out)
    rows, done = _read_done(path)
    cells = [{"n": n, "t": t, "algorithm": algo, "h": spec.h, "gen": spec.gen,
              "params": spec.params, "directed": spec.directed, "constants": spec.constants,
              "runs": spec.runs, "seed": spec.seed}
             for n in spec.sweep_n for t in spec.sweep_t for algo in spec.algorithms
             if (n, t, algo) not in done]
    if done:
        log.info("resuming: %d cells done, %d left", len(done), len(cells))
    fresh = not rows
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        if fresh:
            writer.writeheader()
            fh.flush()

        def emit(row):
            n, t, _ = row.pop("_key")
            row["planted"] = t
            writer.writerow(row)
            fh.flush()
            rows.append({k: str(v) for k, v in row.items()})

        workers = min(thread_count(), max(1, len(cells)))
        try:
            if workers == 1:
                for c in cells:
                    emit(_bench_cell(c))
            else:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for row in pool.map(_bench_cell, cells):
                        emit(row)
        except KeyboardInterrupt:
            log.warning("interrupted; %d rows are in %s, rerun to resume", len(rows), path)
            return 130
    if spec.figures:
        from .plotting import plot_bench
        plot_bench(rows, path.with_suffix(".png"))
    return 0


def cmd_rho(spec: RunSpec) -> int:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    tab = rhobound.load_table()
    line = rhobound.fit_line(tab)
    flat = rhobound.minimal_slope_line(tab)
    with (out / "table.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "gamma", "omega", "y", "step", "line", "y_recomputed",
                    "step_recomputed", "line_fitted"])
        for i, row in enumerate(zip(tab.gamma, tab.omega, tab.y, tab.step, tab.line,
                                    tab.recomputed_y(), tab.recomputed_step(), line(tab.y))):
            w.writerow([i] + [f"{v:.10g}" for v in row])
    summary = {"schema_version": SCHEMA_VERSION, "A": line.A, "B": line.B, "root": line.root,
               "h": spec.h, "threshold_exponent": rhobound.threshold_exponent(spec.h, line),
               "delta_crossover": rhobound.delta_crossover(line=line),
               "minimal_slope_A": flat.A, "minimal_slope_B": float(flat.B),
               "rho": rhobound.RHO, "omega": rhobound.OMEGA}
    with (out / "line.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for k, v in summary.items():
            w.writerow([k, v])
    tau = np.linspace(0.0, 1.0, 101)
    curves = rhobound.exponent_curves(tau)
    with (out / "curves.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau"] + list(curves))
        for i, tv in enumerate(tau):
            w.writerow([f"{tv:.4f}"] + [f"{curves[k][i]:.8f}" for k in curves])
    if spec.figures:
        from .plotting import plot_exponent_curves, plot_step_and_line
        plot_exponent_curves(tau, curves, out / "curves.png")
        plot_step_and_line(tab.y, tab.step, line(tab.y), out / "step_line.png")
    return 0


COMMANDS = {"gen": cmd_gen, "detect": cmd_detect, "bench": cmd_bench, "rho": cmd_rho,
            "qsim": cmd_qsim}


def execute(spec: RunSpec) -> int:
    if spec.seed is None and spec.subcommand != "rho":
        spec.seed = secrets.randbits(32)
        print(f"seed: {spec.seed}", file=sys.stderr)
    print(f"runspec: {spec.to_json()}", file=sys.stderr)
    return COMMANDS[spec.subcommand](spec)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.replay:
            spec = RunSpec.from_dict(json.loads(Path(args.replay).read_text()))
        elif args.subcommand is None:
            ap.print_usage(sys.stderr)
            return 2
        else:
            spec = spec_from_args(args)
    except (RunSpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return execute(spec)
    except RunSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # simulator or algorithm failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
