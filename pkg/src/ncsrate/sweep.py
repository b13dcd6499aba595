"""Sweeps over delays and performance levels, and their on-disk outputs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coding import SimulationDivergedError, operational_rate_point
from .lqg import d_inf
from .plant import InvalidPlantError, TwoByTwoPlant, benchmark_plant
from .snr import InfeasibleError, build_youla_program, phi_of_D

__all__ = [
    "ConfigError",
    "SweepConfig",
    "SweepRow",
    "SweepResult",
    "CSV_COLUMNS",
    "run_sweep",
    "emit_outputs",
    "point_seed",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "h",
    "D",
    "phi",
    "rate_lower_bits",
    "rate_operational_bits",
    "sigma_z_analytic",
    "sigma_z_emp",
    "sigma_eta_sq",
    "delta",
    "n_q",
    "seed",
    "steps",
    "status",
)
BOUND_SLACK_BITS = 0.05


class ConfigError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class SweepConfig:
    """Everything that determines a sweep.

    ``D`` values are ``d_inf(h)`` times ``count`` log-spaced multipliers in
    ``[d_min, d_max]``.
    """

    plant: TwoByTwoPlant = field(default_factory=benchmark_plant)
    delays: tuple = (0, 1, 2, 3, 4)
    d_min: float = 1.05
    d_max: float = 100.0
    d_count: int = 25
    grid_n: int = 2**14
    n_q: int | None = None
    n_q_max: int = 256
    simulate: bool = False
    steps: int = 10**6
    seed: int = 0
    markov_order: int = 1
    verify_di: bool = False

    def __post_init__(self):
        if not self.delays:
            raise ConfigError("delays must be nonempty")
        if any(int(h) != h or h < 0 for h in self.delays):
            raise ConfigError("delays must be nonnegative integers")
        if not (1.0 < self.d_min <= self.d_max):
            raise ConfigError("D multipliers must satisfy 1 < d_min <= d_max")
        if self.d_count < 1:
            raise ConfigError("d_count must be positive")
        if self.grid_n < 8 or self.grid_n & (self.grid_n - 1):
            raise ConfigError("grid_n must be a power of two")
        if self.n_q is not None and not (1 <= self.n_q <= self.n_q_max):
            raise ConfigError("n_q must lie in [1, n_q_max]")
        if self.steps < 2000:
            raise ConfigError("steps must be at least 2000")
        if self.markov_order < 0:
            raise ConfigError("markov_order must be nonnegative")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def multipliers(self) -> np.ndarray:
        if self.d_count == 1:
            return np.array([self.d_min])
        return np.logspace(math.log10(self.d_min), math.log10(self.d_max), self.d_count)

    def to_dict(self) -> dict:
        return {
            "plant": self.plant.to_dict(),
            "delays": [int(h) for h in self.delays],
            "D_grid": {"min_multiplier": self.d_min, "max_multiplier": self.d_max, "count": self.d_count},
            "solver": {"grid_N": self.grid_n, "n_q": self.n_q, "n_q_max": self.n_q_max},
            "simulation": {
                "enabled": self.simulate,
                "steps": self.steps,
                "seed": self.seed,
                "markov_order": self.markov_order,
            },
            "verify_di": self.verify_di,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {"plant", "delays", "D_grid", "solver", "simulation", "verify_di"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        kw = {}
        try:
            if "plant" in d and d["plant"] != "benchmark":
                kw["plant"] = TwoByTwoPlant.from_dict(d["plant"])
            if "delays" in d:
                kw["delays"] = tuple(int(h) for h in d["delays"])
            g = d.get("D_grid", {})
            kw.update(
                {k: conv(g[src]) for k, src, conv in (("d_min", "min_multiplier", float), ("d_max", "max_multiplier", float), ("d_count", "count", int)) if src in g}
            )
            s = d.get("solver", {})
            if "grid_N" in s:
                kw["grid_n"] = int(s["grid_N"])
            if "n_q" in s:
                kw["n_q"] = None if s["n_q"] is None else int(s["n_q"])
            if "n_q_max" in s:
                kw["n_q_max"] = int(s["n_q_max"])
            m = d.get("simulation", {})
            for k, src, conv in (("simulate", "enabled", bool), ("steps", "steps", int), ("seed", "seed", int), ("markov_order", "markov_order", int)):
                if src in m:
                    kw[k] = conv(m[src])
            if "verify_di" in d:
                kw["verify_di"] = bool(d["verify_di"])
        except (InvalidPlantError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(data)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def point_seed(base: int, h: int, index: int) -> int:
    """Per-point simulation seed derived from the sweep seed."""
    return int(np.random.SeedSequence([int(base), int(h), int(index)]).generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class SweepRow:
    h: int
    D: float
    d_inf: float
    phi: float = math.nan
    rate_lower_bits: float = math.nan
    rate_operational_bits: float = math.nan
    sigma_z_analytic: float = math.nan
    sigma_z_emp: float = math.nan
    sigma_eta_sq: float = math.nan
    delta: float = math.nan
    n_q: int | None = None
    seed: int | None = None
    steps: int | None = None
    status: str = "ok"
    phi_unshaped: float = math.nan
    ci_rate: float = math.nan
    ci_var: float = math.nan
    di_bits: float = math.nan
    message: str = ""


@dataclass(frozen=True)
class SweepResult:
    rows: list
    provenance: dict

    @property
    def n_failed(self) -> int:
        return sum(r.status != "ok" for r in self.rows)

    def bound_violations(self) -> list:
        """Rows whose operational rate undercuts the lower bound beyond estimator slack."""
        return [
            r for r in self.rows
            if r.status == "ok" and math.isfinite(r.rate_operational_bits) and r.rate_lower_bits > r.rate_operational_bits + BOUND_SLACK_BITS
        ]

    def di_violations(self) -> list:
        """Rows where the entropy rate falls below the directed-information estimate."""
        return [
            r for r in self.rows
            if r.status == "ok" and math.isfinite(r.di_bits) and r.rate_operational_bits < r.di_bits - BOUND_SLACK_BITS
        ]


_PROGRAMS: dict = {}


def _program(cfg: SweepConfig, h: int):
    key = (cfg.plant.to_json(), h, cfg.grid_n, cfg.n_q_max)
    if key not in _PROGRAMS:
        _PROGRAMS.clear()
        _PROGRAMS[key] = build_youla_program(cfg.plant, h, N=cfg.grid_n, n_q_max=cfg.n_q_max)
    return _PROGRAMS[key]


def _point(task) -> SweepRow:
    cfg, h, index, D, dinf = task
    seed = point_seed(cfg.seed, h, index) if cfg.simulate else None
    base = dict(h=h, D=D, d_inf=dinf, seed=seed, steps=cfg.steps if cfg.simulate else None)
    program = _program(cfg, h)
    try:
        rp = phi_of_D(program, D, cfg.n_q, floor=dinf, realize=cfg.simulate)
    except InfeasibleError as exc:
        return SweepRow(**base, status="infeasible", message=str(exc))
    except (ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return SweepRow(**base, status="error", message=str(exc))
    row = dict(
        base,
        phi=rp.phi,
        rate_lower_bits=rp.rate_lower_bits,
        sigma_z_analytic=rp.sigma_z_sq,
        sigma_eta_sq=rp.sigma_eta_sq,
        n_q=rp.n_q,
        phi_unshaped=rp.phi_unshaped,
    )
    if not cfg.simulate:
        return SweepRow(**row)
    try:
        op = operational_rate_point(cfg.plant, h, D, rp, cfg.steps, seed, m=cfg.markov_order, verify_di=cfg.verify_di)
    except SimulationDivergedError as exc:
        return SweepRow(**row, status="diverged", message=str(exc))
    return SweepRow(
        **row,
        rate_operational_bits=op.rate_bits,
        sigma_z_emp=op.sigma_z_emp,
        delta=op.delta,
        ci_rate=op.ci_rate,
        ci_var=op.ci_var,
        di_bits=op.di_bits,
    )


def run_sweep(config: SweepConfig, jobs: int = 1) -> SweepResult:
    """Floors, lower-bound curves and (optionally) operational points.

    Per-point failures are recorded in the row's ``status`` and the sweep
    continues.  Rows are sorted by ``(h, D)``.
    """
    tasks = []
    floors = {}
    for h in sorted(set(int(h) for h in config.delays)):
        floors[h] = d_inf(config.plant, h).value
        log.info("h=%d: d_inf=%.6g", h, floors[h])
        for i, m in enumerate(config.multipliers):
            tasks.append((config, h, i, float(m * floors[h]), floors[h]))
    if jobs > 1 and len(tasks) > 1:
        # consecutive tasks share a delay, so chunks reuse cached programs
        chunk = max(1, len(tasks) // (4 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_point, tasks, chunksize=chunk))
    else:
        rows = [_point(t) for t in tasks]
    rows.sort(key=lambda r: (r.h, r.D))
    prov = {
        "config_sha256": config.digest(),
        "seed": int(config.seed),
        "version": __version__,
        "d_inf": {str(h): v for h, v in floors.items()},
    }
    return SweepResult(rows, prov)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if not math.isfinite(x) else repr(x)
    return str(x)


def emit_outputs(result: SweepResult, out_dir, config: SweepConfig | None = None) -> dict:
    """Write ``sweep.csv``, ``sweep.json`` and ``plot.dat`` into ``out_dir``.

    Raises
    ------
    OSError
        If the destination cannot be created or written.
    """
    if not result.rows:
        raise ValueError("nothing to write: empty sweep result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    paths = {"csv": out / "sweep.csv", "json": out / "sweep.json", "plot": out / "plot.dat"}
    paths["csv"].write_text(buf.getvalue())
    doc = {
        "provenance": result.provenance,
        "config": config.to_dict() if config is not None else None,
        "rows": [{k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in asdict(r).items()} for r in result.rows],
    }
    paths["json"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    lines = []
    for h in sorted({r.h for r in result.rows}):
        if lines:
            lines += ["", ""]
        lines.append(f"# h={h}  columns: D rate_lower_bits rate_operational_bits")
        for r in result.rows:
            if r.h == h:
                lines.append(" ".join([_fmt(r.D), _fmt(r.rate_lower_bits) or "nan", _fmt(r.rate_operational_bits) or "nan"]))
    paths["plot"].write_text("\n".join(lines) + "\n")
    return paths
