"""Config-driven sweeps over (instance, scheme, p, c, restart) cells.

Every cell is an independent SPSA training run with its own seed, derived
by hashing the cell key. Records go to ``records.jsonl`` (one JSON object
per line, sorted by cell key) and aggregates to CSV. Aggregates are a pure
function of the records, so they can be rebuilt with :func:`aggregate`.

AR values in records and aggregates are taken at theta*, the best clean
iterate seen up to the checkpoint; the AR of the current iterate is kept
alongside as ``last_ar``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, spsa
from .sat import MAX_QUBITS, DimacsError, SatInstance, build_cost_diagonal, generate_random_instance, read_dimacs
from .schemes import KINDS, SchemeSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CHECKPOINTS = (50, 150, 400, 1000, 2000, 5000)
WORKERS_ENV = "QACOA_WORKERS"
RECORDS_FILE = "records.jsonl"
PARTIAL_FILE = "records.partial.jsonl"
AGGREGATE_FILE = "aggregate.csv"
AGGREGATE_BY_INSTANCE_FILE = "aggregate_by_instance.csv"


class ConfigError(ValueError):
    """Invalid run configuration, detected before any work starts."""


class AlignmentError(ValueError):
    """Two schemes do not cover the same (instance, p, j) cells."""

    def __init__(self, missing: list):
        self.missing = missing
        shown = ", ".join(map(str, missing[:10]))
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        super().__init__(f"grids do not align; missing cells: {shown}{more}")


@dataclass(frozen=True)
class InstanceSource:
    """Either random generation or a list of DIMACS files."""

    n_vars: int | None = None
    k: int | None = None
    alpha: tuple[float, ...] = ()
    count: int = 1
    seed: int = 0
    dimacs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.dimacs and self.n_vars is not None:
            raise ConfigError("instances: give either generation parameters or dimacs paths, not both")
        if not self.dimacs:
            if self.n_vars is None or self.k is None or not self.alpha:
                raise ConfigError("instances: n_vars, k and alpha are required for generation")
            if self.count < 1:
                raise ConfigError("instances: count must be >= 1")
            if self.n_vars > MAX_QUBITS:
                raise ConfigError(f"instances: n_vars={self.n_vars} exceeds {MAX_QUBITS}")

    def load(self) -> list[tuple[str, SatInstance]]:
        if self.dimacs:
            out = []
            for path in self.dimacs:
                try:
                    inst = read_dimacs(path)
                except (OSError, DimacsError) as exc:
                    raise ConfigError(f"instances: cannot load {path}: {exc}") from exc
                out.append((f"{Path(path).stem}-{inst.content_hash()}", inst))
            return out
        out = []
        for alpha in self.alpha:
            for i in range(self.count):
                try:
                    inst = generate_random_instance(self.n_vars, self.k, alpha, self.seed + i)
                except ValueError as exc:
                    raise ConfigError(f"instances: {exc}") from exc
                out.append((f"N{self.n_vars}-K{self.k}-a{alpha:g}-s{self.seed + i}", inst))
        return out

    def to_dict(self) -> dict:
        if self.dimacs:
            return {"dimacs": list(self.dimacs)}
        return {"n_vars": self.n_vars, "k": self.k, "alpha": list(self.alpha),
                "count": self.count, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSource":
        if "dimacs" in d:
            paths = d["dimacs"]
            return cls(dimacs=tuple([paths] if isinstance(paths, str) else paths))
        alpha = d.get("alpha", ())
        alpha = tuple(float(a) for a in (alpha if isinstance(alpha, (list, tuple)) else [alpha]))
        return cls(d.get("n_vars"), d.get("k"), alpha, int(d.get("count", 1)), int(d.get("seed", 0)))


@dataclass(frozen=True)
class RunConfig:
    instances: InstanceSource
    schemes: tuple[dict, ...]
    p: tuple[int, ...]
    c: tuple[int, ...] = (100,)
    spsa: spsa.SpsaConfig = field(default_factory=spsa.SpsaConfig)
    restarts: int = 5
    output_dir: str | None = None
    workers: int = 1
    checkpoints: tuple[int, ...] = CHECKPOINTS
    seed: int = 0
    # drop the scheme from the seed hash so all schemes share restarts' seeds
    common_random_numbers: bool = False
    store_traces: bool = False
    lle: bool = False
    name: str = "run"

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if not self.p:
            raise ConfigError("at least one depth p is required")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for s in self.schemes:
            if s.get("kind") not in KINDS:
                raise ConfigError(f"scheme {s!r}: kind must be one of {KINDS}")

    @property
    def active_checkpoints(self) -> tuple[int, ...]:
        js = sorted({j for j in self.checkpoints if 1 <= j <= self.spsa.j_max} | {self.spsa.j_max})
        return tuple(js)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "instances": self.instances.to_dict(),
            "schemes": [dict(s) for s in self.schemes],
            "p": list(self.p),
            "c": list(self.c),
            "spsa": self.spsa.to_dict(),
            "restarts": self.restarts,
            "checkpoints": list(self.checkpoints),
            "common_random_numbers": self.common_random_numbers,
            "store_traces": self.store_traces,
            "lle": self.lle,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            inst = InstanceSource.from_dict(d["instances"])
            sp = spsa.SpsaConfig(**d.get("spsa", {}))
            return cls(
                instances=inst,
                schemes=tuple(dict(s) for s in d["schemes"]),
                p=tuple(int(x) for x in d["p"]),
                c=tuple(int(x) for x in d.get("c", (100,))),
                spsa=sp,
                restarts=int(d.get("restarts", 5)),
                output_dir=d.get("output_dir"),
                workers=int(d.get("workers", 1)),
                checkpoints=tuple(int(x) for x in d.get("checkpoints", CHECKPOINTS)),
                seed=int(d.get("seed", 0)),
                common_random_numbers=bool(d.get("common_random_numbers", False)),
                store_traces=bool(d.get("store_traces", False)),
                lle=bool(d.get("lle", False)),
                name=str(d.get("name", "run")),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from exc

    @classmethod
    def from_toml(cls, path: str | os.PathLike) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def config_hash(self) -> str:
        """Hash of everything that affects results (not output_dir or workers)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Cell:
    instance_id: str
    spec: SchemeSpec
    restart: int
    seed: int

    @property
    def key(self) -> tuple:
        return (self.instance_id, KINDS.index(self.spec.kind), self.spec.label, self.spec.p, self.spec.c, self.restart)


def cell_seed(config_seed: int, instance_id: str, scheme: str, p: int, c: int, restart: int) -> int:
    blob = json.dumps([config_seed, instance_id, scheme, p, c, restart]).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") & (2**63 - 1)


def scheme_specs(config: RunConfig) -> list[SchemeSpec]:
    """Expand scheme entries over p and (for chaotic kinds without their own c) the c list."""
    out = []
    for entry in config.schemes:
        kind = entry["kind"]
        cs = [1] if kind == "standard" else ([int(entry["c"])] if "c" in entry else list(config.c))
        for p in config.p:
            for c in cs:
                try:
                    out.append(SchemeSpec(kind, int(p), c, int(entry.get("p_t", 1)), int(entry.get("T", 1))))
                except ValueError as exc:
                    raise ConfigError(f"scheme {entry!r} at p={p}: {exc}") from exc
    seen = set()
    unique = []
    for s in out:
        if s not in seen:
            seen.add(s)
            unique.append(s)
    return unique


def build_cells(config: RunConfig, instance_ids) -> list[Cell]:
    cells = []
    seeds: dict[int, tuple] = {}
    for iid in instance_ids:
        for spec in scheme_specs(config):
            # common random numbers share the stream across schemes and c at fixed p
            crn = config.common_random_numbers
            label, c = ("*", 0) if crn else (spec.label, spec.c)
            for r in range(config.restarts):
                s = cell_seed(config.seed, iid, label, spec.p, c, r)
                owner = (iid, label, spec.p, c, r)
                if s in seeds and seeds[s] != owner:
                    raise ConfigError(f"seed collision between cells {seeds[s]} and {owner}")
                seeds[s] = owner
                cells.append(Cell(iid, spec, r, s))
    return sorted(cells, key=lambda cell: cell.key)


_DIAG_CACHE: dict[str, object] = {}


def _diag_for(inst: SatInstance):
    h = inst.content_hash()
    if h not in _DIAG_CACHE:
        _DIAG_CACHE[h] = build_cost_diagonal(inst)
    return _DIAG_CACHE[h]


def execute_cell(cell: Cell, inst: SatInstance, cfg: spsa.SpsaConfig, checkpoints, config_hash: str,
                 store_traces: bool = False, lle: bool = False) -> dict:
    """Train one cell; never raises, failures end up in the record."""
    spec = cell.spec
    rec = {
        "config_hash": config_hash,
        "instance_id": cell.instance_id,
        "instance_hash": inst.content_hash(),
        "n_vars": inst.n_vars,
        "k": inst.k,
        "alpha": float(inst.alpha),
        "scheme": spec.label,
        "spec": spec.to_dict(),
        "p": spec.p,
        "c": spec.c,
        "restart": cell.restart,
        "seed": cell.seed,
    }
    try:
        diag = _diag_for(inst)
        trace = spsa.optimize(spec, diag, replace(cfg, seed=cell.seed))
        if trace.n_evals != 3 * cfg.j_max:
            raise RuntimeError(f"evaluation count {trace.n_evals} != 3 * j_max")
        rec.update(
            status="ok",
            error=None,
            a=trace.a,
            c0=trace.c0,
            theta0=trace.theta0.tolist(),
            best_theta=trace.best_theta.tolist(),
            final_theta=trace.final_theta.tolist(),
            best_f=trace.best_f,
            n_evals=trace.n_evals,
            n_calibration_evals=trace.n_calibration_evals,
            checkpoints=[trace.at(j) for j in checkpoints],
        )
        if store_traces:
            rec["trace"] = {"f": trace.f.tolist(), "ar": trace.ar.tolist(),
                            "misassignment": trace.misassignment.tolist()}
        if lle and spec.kind == "pure" and spec.p >= 2:
            rep = diagnostics.cost_lle_spectrum(spec, trace.best_theta, diag, spec.p)
            rec["lle"] = {"depths": rep.depths.tolist(), "cost_lle": rep.cost_lle.tolist(),
                          "phase_lle": rep.phase_lle.tolist(), "flags": rep.flags}
    except Exception as exc:  # recorded per cell, the sweep continues
        rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return rec


def _record_key(rec: dict) -> tuple:
    return (rec["instance_id"], KINDS.index(rec["spec"]["kind"]), rec["scheme"], rec["p"], rec["c"], rec["restart"])


def _check_output_dir(path: str | os.PathLike) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def resolve_workers(config: RunConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from exc
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
        return n
    return config.workers


@dataclass
class RunResult:
    records: list[dict]
    aggregate: list[dict]
    aggregate_by_instance: list[dict]
    output_dir: Path | None = None

    @property
    def n_failed(self) -> int:
        return sum(r["status"] != "ok" for r in self.records)


def _run_task(args):
    return execute_cell(*args)


def run(config: RunConfig, resume: bool = False) -> RunResult:
    """Execute every cell once and aggregate.

    All validation (instances, schemes, seeds, output directory) happens up
    front. With ``resume`` set, cells already present in the partial record
    file of the output directory are not rerun.
    """
    instances = config.instances.load()
    by_id = dict(instances)
    if len(by_id) != len(instances):
        raise ConfigError("duplicate instance ids")
    cells = build_cells(config, by_id)
    out = _check_output_dir(config.output_dir) if config.output_dir else None
    workers = resolve_workers(config)
    chash = config.config_hash()
    checkpoints = config.active_checkpoints

    done: dict[tuple, dict] = {}
    partial = out / PARTIAL_FILE if out else None
    if partial is not None:
        if resume and partial.exists():
            for line in partial.read_text().splitlines():
                rec = json.loads(line)
                if rec.get("config_hash") == chash and rec.get("status") == "ok":
                    done[_record_key(rec)] = rec
        else:
            partial.write_text("")
    todo = [cell for cell in cells if cell.key not in done]
    tasks = [(cell, by_id[cell.instance_id], config.spsa, checkpoints, chash, config.store_traces, config.lle)
             for cell in todo]

    sink = open(partial, "a") if partial is not None else None
    try:
        def collect(rec):
            done[_record_key(rec)] = rec
            if sink is not None:
                sink.write(json.dumps(rec) + "\n")
                sink.flush()

        if workers == 1 or len(tasks) <= 1:
            for t in tasks:
                collect(_run_task(t))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for rec in pool.map(_run_task, tasks, chunksize=1):
                    collect(rec)
    finally:
        if sink is not None:
            sink.close()

    records = sorted(done.values(), key=_record_key)
    agg = aggregate(records)
    agg_inst = aggregate(records, by_instance=True)
    if out is not None:
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        write_records(records, out / RECORDS_FILE)
        (out / AGGREGATE_FILE).write_text(rows_to_csv(agg))
        (out / AGGREGATE_BY_INSTANCE_FILE).write_text(rows_to_csv(agg_inst))
        partial.unlink()
    return RunResult(records, agg, agg_inst, out)


def write_records(records, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_records(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def summarize(values) -> dict:
    """Median/IQR and mean with a one-standard-error (68%) interval."""
    x = np.asarray(values, dtype=float)
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return {"n": int(x.size), "median_ar": float(med), "q25_ar": float(q25), "q75_ar": float(q75),
            "mean_ar": mean, "se_ar": se, "ci68_lo": mean - se, "ci68_hi": mean + se}


def aggregate(records, by_instance: bool = False, by_alpha: bool = False) -> list[dict]:
    """One row per (scheme, p, c, j), optionally split by instance or by alpha.

    Failed cells are skipped; ``n`` counts the runs that entered each row.
    """
    groups: dict[tuple, list] = {}
    for rec in records:
        if rec["status"] != "ok":
            continue
        head = ()
        if by_instance:
            head = (rec["instance_id"],)
        elif by_alpha:
            head = (rec["alpha"],)
        kind_order = KINDS.index(rec["spec"]["kind"])
        for cp in rec["checkpoints"]:
            key = head + (kind_order, rec["scheme"], rec["p"], rec["c"], cp["j"])
            groups.setdefault(key, []).append(cp)
    rows = []
    for key in sorted(groups):
        cps = groups[key]
        row = {}
        if by_instance:
            row["instance_id"] = key[0]
        elif by_alpha:
            row["alpha"] = key[0]
        _, scheme, p, c, j = key[len(key) - 5:]
        row.update(scheme=scheme, p=p, c=c, j=j)
        row.update(summarize([cp["ar"] for cp in cps]))
        row["mean_misassignment"] = float(np.mean([cp["misassignment"] for cp in cps]))
        row["mean_last_ar"] = float(np.mean([cp["last_ar"] for cp in cps]))
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def compare(records, baseline: str, other: str) -> list[dict]:
    """Mean-AR differences ``other - baseline`` per (instance, p, j).

    Standard errors add in quadrature. Cells present for one scheme but not
    the other raise :class:`AlignmentError`.
    """
    table = {}
    for row in aggregate(records, by_instance=True):
        if row["scheme"] in (baseline, other):
            table[row["scheme"], row["instance_id"], row["p"], row["j"]] = row
    grid_b = {k[1:] for k in table if k[0] == baseline}
    grid_o = {k[1:] for k in table if k[0] == other}
    if not grid_b and not grid_o:
        raise AlignmentError([f"no records for {baseline!r} or {other!r}"])
    missing = sorted([(baseline, *k) for k in grid_o - grid_b] + [(other, *k) for k in grid_b - grid_o])
    if missing:
        raise AlignmentError(missing)
    rows = []
    for iid, p, j in sorted(grid_b):
        b = table[baseline, iid, p, j]
        o = table[other, iid, p, j]
        rows.append({
            "instance_id": iid, "p": p, "j": j,
            "baseline": baseline, "other": other,
            "mean_diff": o["mean_ar"] - b["mean_ar"],
            "se_diff": math.hypot(o["se_ar"], b["se_ar"]),
            "n_baseline": b["n"], "n_other": o["n"],
        })
    return rows


def alpha_grid(n_vars: int, k: int, alpha_max: float | None = None) -> tuple[float, ...]:
    """``1/N, 2/N, ...`` up to 4 (K=2) or 8 (K=3) by default."""
    if alpha_max is None:
        alpha_max = 4.0 if k == 2 else 8.0
    n = int(math.floor(alpha_max * n_vars + 1e-9))
    return tuple(i / n_vars for i in range(1, n + 1))


def alpha_sweep(config: RunConfig) -> tuple[RunResult, list[dict]]:
    """Run and aggregate mean AR with standard error per alpha."""
    result = run(config)
    by_alpha = aggregate(result.records, by_alpha=True)
    if result.output_dir is not None:
        (result.output_dir / "aggregate_by_alpha.csv").write_text(rows_to_csv(by_alpha))
    return result, by_alpha


def _preset(name, n_vars, k, alpha, count, seed, schemes, p, c, restarts, j_max, **kw) -> RunConfig:
    return RunConfig(
        instances=InstanceSource(n_vars, k, tuple(alpha), count, seed),
        schemes=tuple(schemes),
        p=tuple(p),
        c=tuple(c),
        spsa=spsa.SpsaConfig(j_max=j_max),
        restarts=restarts,
        name=name,
        **kw,
    )


STD = {"kind": "standard"}
PURE = {"kind": "pure"}


def preset(name: str) -> RunConfig:
    """Scaled reproduction presets; counts are reachable at full scale via config."""
    if name == "fig2-small":
        return _preset(name, 5, 3, [4.2], 1, 0, [STD, PURE], [4, 12, 20], [1, 5, 100], 20, 1000,
                       store_traces=True)
    if name == "fig3-small":
        return _preset(name, 5, 3, [4.2], 1, 0, [STD, PURE], [1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20],
                       [1, 5, 100], 20, 1000)
    if name == "fig5-small":
        return _preset(name, 8, 3, [4.25], 5, 0, [STD, PURE], [1, 2, 4, 8, 12, 16, 20], [100], 5, 1000)
    if name == "fig5-small-k2":
        return _preset(name, 8, 2, [1.0], 5, 0, [STD, PURE], [1, 2, 4, 8, 12, 16, 20], [100], 5, 1000)
    if name == "hybrid-delayed":
        return _preset(name, 8, 3, [4.25], 5, 0, [STD, PURE, {"kind": "delayed", "p_t": 8}],
                       [10, 12, 16, 20], [100], 5, 5000)
    if name == "hybrid-iterated":
        return _preset(name, 8, 3, [4.25], 5, 0, [STD, PURE, {"kind": "iterated", "T": 10}],
                       [10, 12, 16, 20], [100], 5, 5000)
    if name in ("alpha-sweep-k2", "alpha-sweep-k3"):
        k = 2 if name.endswith("k2") else 3
        return _preset(name, 8, k, alpha_grid(8, k), 5, 0, [PURE], [8], [100], 5, 5000)
    raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")


PRESETS = ("fig2-small", "fig3-small", "fig5-small", "fig5-small-k2", "hybrid-delayed",
           "hybrid-iterated", "alpha-sweep-k2", "alpha-sweep-k3")
