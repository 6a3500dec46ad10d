"""Benchmark orchestration: policy x instance grids, perfect-information bounds,
gap KPIs and CSV reports."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .instance import Instance, generate_instance, load_instance, load_solomon
from .mdp import SimConfig, simulate
from .optkernel import solve_oprd_perfect, ub_trips
from .policies import PolicyConfig, make_policy

log = logging.getLogger(__name__)

SCHEMA = "doprd-kpi/1"
RHO_INDEPENDENT = ("me", "mh")


class ConsistencyError(ValueError):
    pass


# ---------------------------------------------------------------- KPIs


@dataclass(frozen=True)
class Gap:
    gap_best: float
    gap_ub: float
    is_best: bool


def compute_gaps(served: Mapping[str, int], ub_perfect: float) -> dict[str, Gap]:
    """Gap of every policy to the best policy and to the perfect-information bound."""
    if not served:
        raise ValueError("no policies to compare")
    best = max(served.values())
    if ub_perfect < best:
        raise ConsistencyError(f"upper bound {ub_perfect} below served count {best}")
    out = {}
    for p, n in served.items():
        if n < 0:
            raise ValueError(f"negative served count for {p}")
        gb = 0.0 if best == 0 else 1.0 - n / best
        gu = 0.0 if ub_perfect == 0 else 1.0 - n / ub_perfect
        out[p] = Gap(gb, gu, n == best)
    return out


def sensitivity_gamma(served: Mapping[tuple[str, int], int]) -> dict[tuple[str, int], float]:
    """Relative loss of each (policy, rho) against the best rho of the same policy."""
    best: dict[str, int] = defaultdict(int)
    for (p, _), n in served.items():
        best[p] = max(best[p], n)
    return {(p, r): (0.0 if best[p] == 0 else 1.0 - n / best[p]) for (p, r), n in served.items()}


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class BenchmarkConfig:
    instances: tuple[str, ...] = ()
    solomon: tuple[str, ...] = ()
    n: int | None = None
    betas: tuple[float, ...] = (0.5, 1.0, 1.5)
    deltas: tuple[float, ...] = (0.0, 0.5, 1.0)
    cs: tuple[float, ...] = (0.6, 0.8, 1.0, 1.2)
    seeds: tuple[int, ...] = (0,)
    horizon: float | None = None
    policies: tuple[str, ...] = ("pfa", "vfa", "me", "mh")
    rhos: tuple[int, ...] = (15,)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    overrides: Mapping[str, Mapping[str, object]] = field(default_factory=dict)
    ub_time_limit: float = 60.0
    jobs: int = 1

    def __post_init__(self):
        if not self.instances and not self.solomon:
            raise ValueError("config needs at least one instance file or Solomon file")
        if not self.policies:
            raise ValueError("config needs at least one policy")
        if self.ub_time_limit <= 0:
            raise ValueError("ub_time_limit must be positive")

    def policy_config(self, policy: str, rho: int) -> PolicyConfig:
        cfg = replace(self.policy, rho=rho)
        extra = self.overrides.get(policy)
        return replace(cfg, **extra) if extra else cfg


_POLICY_KEYS = {
    "scenarios": ("n_scenarios", int), "gamma": ("gamma", float), "phi": ("phi", float),
    "det_tl": ("det_time_limit", float), "sto_tl": ("sto_time_limit", float),
    "myopic_tl": ("myopic_time_limit", float), "pc": ("pc_enabled", "bool"),
    "pc_known_frac": ("pc_known_frac", float), "pc_time_frac": ("pc_time_frac", float),
    "t_d": ("t_d", float), "backend": ("backend", str), "rho": ("rho", int),
}


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _cast(v: str, kind):
    return _bool(v) if kind == "bool" else kind(v.strip())


def _list(v: str, kind) -> tuple:
    return tuple(_cast(x, kind) for x in v.split(",") if x.strip())


def parse_config(text: str) -> BenchmarkConfig:
    """Parse a flat `key = value` file. Lists are comma separated; `#` starts a comment.

    Policy parameters apply to every policy; prefix a key with a policy name
    (``pfa.scenarios = 10``) to override it for that policy only.
    """
    kw: dict[str, object] = {}
    pol: dict[str, object] = {}
    over: dict[str, dict[str, object]] = defaultdict(dict)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if "." in key:
                who, k = key.split(".", 1)
                name, kind = _POLICY_KEYS[k]
                over[who.lower()][name] = _cast(val, kind)
            elif key in ("instances", "solomon", "policies"):
                kw[key] = tuple(s.strip().lower() if key == "policies" else s.strip() for s in val.split(",") if s.strip())
            elif key in ("beta", "betas"):
                kw["betas"] = _list(val, float)
            elif key in ("delta", "deltas"):
                kw["deltas"] = _list(val, float)
            elif key in ("c", "cs"):
                kw["cs"] = _list(val, float)
            elif key in ("seed", "seeds"):
                kw["seeds"] = _list(val, int)
            elif key in ("rho", "rhos"):
                kw["rhos"] = _list(val, int)
            elif key == "n":
                kw["n"] = int(val)
            elif key == "horizon":
                kw["horizon"] = float(val)
            elif key in ("ub_time_limit", "ub_tl"):
                kw["ub_time_limit"] = float(val)
            elif key == "jobs":
                kw["jobs"] = int(val)
            elif key in _POLICY_KEYS:
                name, kind = _POLICY_KEYS[key]
                pol[name] = _cast(val, kind)
            else:
                raise KeyError(key)
        except KeyError as exc:
            raise ValueError(f"config line {lineno}: unknown key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None
    kw["policy"] = PolicyConfig(**pol)
    kw["overrides"] = dict(over)
    return BenchmarkConfig(**kw)


def load_config(path: str | Path) -> BenchmarkConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------- execution


@dataclass(frozen=True)
class KpiRow:
    instance: str
    policy: str
    served: int
    ub_perfect: int
    gap_best: float
    gap_ub: float
    runtime_s: float
    is_best: bool
    rho: int | None
    beta: float | None
    delta: float | None
    c: float | None
    seed: int
    ub_trips: int
    ub_status: str
    pc_fired: int
    status: str


@dataclass
class Cell:
    instance: Instance
    policy: str
    rho: int | None
    seed: int
    config: PolicyConfig


@dataclass
class BenchmarkResult:
    rows: list[KpiRow]
    runs: dict  # (instance, policy, rho) -> SimulationResult
    bounds: dict  # instance -> ExactResult
    failures: int

    @property
    def ok(self) -> bool:
        return self.failures == 0


def build_instances(cfg: BenchmarkConfig) -> list[Instance]:
    out = [load_instance(p) for p in cfg.instances]
    for path in cfg.solomon:
        data = load_solomon(path, cfg.n)
        for beta, delta, c, seed in itertools.product(cfg.betas, cfg.deltas, cfg.cs, cfg.seeds):
            out.append(generate_instance(data, beta, delta, c, seed, horizon=cfg.horizon))
    names = [i.name for i in out]
    if len(set(names)) != len(names):
        raise ValueError("instance names must be unique")
    return out


def _bound_job(inst: Instance, time_limit: float):
    rel = inst.releases()
    tr = inst.id_travel()
    trips = ub_trips(rel, tr, inst.deadline)
    res = solve_oprd_perfect(rel, tr, inst.deadline, max(trips.value, 1), time_limit, warm_start=trips.trips)
    return inst.name, trips, res


def _cell_job(cell: Cell):
    policy = make_policy(cell.policy, cell.config)
    res = simulate(cell.instance, policy, cell.seed, SimConfig(phi=cell.config.phi))
    return (cell.instance.name, cell.policy, cell.rho), res


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(*it) if isinstance(it, tuple) else fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fn, *it) if isinstance(it, tuple) else ex.submit(fn, it) for it in items]
        return [f.result() for f in futs]


def run_benchmark(cfg: BenchmarkConfig, jobs: int | None = None) -> BenchmarkResult:
    jobs = cfg.jobs if jobs is None else jobs
    insts = build_instances(cfg)
    bounds = {}
    ub_t = {}
    for name, trips, res in _map(_bound_job, [(i, cfg.ub_time_limit) for i in insts], jobs):
        bounds[name] = res
        ub_t[name] = trips.value
    cells = []
    for inst in insts:
        seed = inst.meta.seed
        for p in cfg.policies:
            rhos = [None] if p in RHO_INDEPENDENT else list(cfg.rhos)
            for rho in rhos:
                cells.append(Cell(inst, p, rho, seed, cfg.policy_config(p, rho if rho is not None else cfg.rhos[0])))
    runs = dict(_map(_cell_job, cells, jobs))

    rows: list[KpiRow] = []
    failures = 0
    for inst in insts:
        b = bounds[inst.name]
        ub = b.bound
        mine = [(k, r) for k, r in runs.items() if k[0] == inst.name]
        mine.sort(key=lambda kr: (cfg.policies.index(kr[0][1]), kr[0][2] or 0))
        good = {k: r.total_served for k, r in mine if r.status == "ok"}
        status = "ok"
        try:
            gaps = compute_gaps({f"{k[1]}:{k[2]}": v for k, v in good.items()}, ub) if good else {}
        except ConsistencyError as exc:
            log.error("%s: %s", inst.name, exc)
            gaps, status = {}, "bound_violation"
        meta = inst.meta
        for k, r in mine:
            g = gaps.get(f"{k[1]}:{k[2]}")
            row_status = r.status if r.status != "ok" else status
            if row_status != "ok":
                failures += 1
            rows.append(KpiRow(
                instance=inst.name, policy=k[1], served=r.total_served, ub_perfect=int(ub),
                gap_best=g.gap_best if g else float("nan"), gap_ub=g.gap_ub if g else float("nan"),
                runtime_s=r.runtime_s, is_best=bool(g and g.is_best), rho=k[2],
                beta=meta.beta, delta=meta.delta, c=meta.c, seed=meta.seed,
                ub_trips=ub_t[inst.name], ub_status=b.status, pc_fired=len(r.pc_events), status=row_status,
            ))
    return BenchmarkResult(rows, runs, bounds, failures)


# ---------------------------------------------------------------- reporting


def _fmt(v, normalize: bool, name: str) -> str:
    if name == "runtime_s":
        return "0.000" if normalize else f"{v:.3f}"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}" if name.startswith("gap") else f"{v:g}"
    return "" if v is None else str(v)


def details_csv(rows: Sequence[KpiRow], normalize_time: bool = False) -> str:
    names = [f.name for f in fields(KpiRow)]
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[n], normalize_time, n) for n in names])
    return buf.getvalue()


SUMMARY_COLUMNS = ["policy", "rho", "runs", "served_avg", "gap_best_pct", "gap_ub_pct", "runtime_avg_s", "freq"]


def summarize(rows: Iterable[KpiRow], keys: Sequence[str]) -> list[dict]:
    """Average KPIs per group plus an overall AVG group, over successful rows."""
    rows = [r for r in rows if r.status == "ok"]
    variants = list(dict.fromkeys((r.policy, r.rho) for r in rows))
    groups: dict[tuple, list[KpiRow]] = defaultdict(list)
    for r in rows:
        groups[tuple(getattr(r, k) for k in keys)].append(r)
    out = []
    for gk in [*sorted(groups), None]:
        members = rows if gk is None else groups[gk]
        head = dict(zip(keys, ("AVG",) * len(keys) if gk is None else gk))
        for pol, rho in variants:
            rs = [r for r in members if r.policy == pol and r.rho == rho]
            if not rs:
                continue
            m = len(rs)
            out.append({
                **head, "policy": pol, "rho": rho, "runs": m,
                "served_avg": sum(r.served for r in rs) / m,
                "gap_best_pct": 100 * sum(r.gap_best for r in rs) / m,
                "gap_ub_pct": 100 * sum(r.gap_ub for r in rs) / m,
                "runtime_avg_s": sum(r.runtime_s for r in rs) / m,
                "freq": sum(r.is_best for r in rs),
            })
    return out


def summary_csv(rows: Sequence[KpiRow], keys: Sequence[str], normalize_time: bool = False) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = list(keys) + SUMMARY_COLUMNS
    w.writerow(cols)
    for s in summarize(rows, keys):
        vals = []
        for c in cols:
            v = s[c]
            if c == "runtime_avg_s":
                vals.append("0.000" if normalize_time else f"{v:.3f}")
            elif c in ("served_avg", "gap_best_pct", "gap_ub_pct"):
                vals.append(f"{v:.4f}")
            else:
                vals.append("" if v is None else (f"{v:g}" if isinstance(v, float) else str(v)))
        w.writerow(vals)
    return buf.getvalue()


def sensitivity_rows(rows: Sequence[KpiRow]) -> list[dict]:
    """Average Gamma per (policy, rho) over instances, computed instance by instance."""
    per_inst: dict[str, dict[tuple[str, int], int]] = defaultdict(dict)
    for r in rows:
        if r.status == "ok" and r.rho is not None:
            per_inst[r.instance][(r.policy, r.rho)] = r.served
    acc: dict[tuple[str, int], list[float]] = defaultdict(list)
    for served in per_inst.values():
        for k, g in sensitivity_gamma(served).items():
            acc[k].append(g)
    return [
        {"policy": p, "rho": rho, "instances": len(v), "gamma_pct": 100 * sum(v) / len(v)}
        for (p, rho), v in sorted(acc.items())
    ]


def write_reports(result: BenchmarkResult, out_dir: str | Path, normalize_time: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "details.csv": details_csv(result.rows, normalize_time),
        "summary_beta_delta.csv": summary_csv(result.rows, ["beta", "delta"], normalize_time),
        "summary_c.csv": summary_csv(result.rows, ["c"], normalize_time),
    }
    if len({r.rho for r in result.rows if r.rho is not None}) > 1:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "rho", "instances", "gamma_pct"])
        for s in sensitivity_rows(result.rows):
            w.writerow([s["policy"], s["rho"], s["instances"], f"{s['gamma_pct']:.4f}"])
        files["sensitivity.csv"] = buf.getvalue()
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths
