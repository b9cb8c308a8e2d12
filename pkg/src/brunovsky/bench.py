"""Random systems with prescribed controllability indices and the method comparison experiment."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import ortho_group

from .conditioning import OptimizerSettings
from .core import BrunovskyError, LinearSystem, TransformTriple, brunovsky_target, validate_system
from .luenberger import luenberger_pipeline, modified_ctrb_matrix
from .parametrization import PivotedQR
from .pipeline import proposed_pipeline

log = logging.getLogger(__name__)

SENTINEL = 1e300
CSV_COLUMNS = ("trial", "seed", "method", "cond_ctrb", "cond_TG", "err_Ab", "err_Bb", "nilpotency", "wall_ms", "failed")
METHODS = ("proposed", "luenberger")

# conditioning of the ground-truth state transform in "dynamics" mode
BASE_TRANSFORM_COND = 10.0


def _log_spectrum(n: int, cond: float, rng) -> np.ndarray:
    s = np.logspace(0.0, np.log10(cond), n) / np.sqrt(cond)
    rng.shuffle(s)
    return s


def _base_draw(n: int, m: int, t_cond: float, rng):
    U1 = ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    U2 = ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    T0 = U1 @ np.diag(_log_spectrum(n, t_cond, rng)) @ U2.T
    F_dir = rng.standard_normal((m, n))
    G0 = np.eye(m) + 0.5 * rng.standard_normal((m, m)) / np.sqrt(m)
    while np.linalg.cond(G0) > 1e2:
        G0 = np.eye(m) + 0.5 * rng.standard_normal((m, m)) / np.sqrt(m)
    return T0, F_dir, G0


def system_from_triple(mu, T0, F0, G0) -> LinearSystem:
    """The pair mapped to ``brunovsky_target(mu)`` by ``(T0, F0, G0)``.

    ``A = T0^-1 A_b T0 - B F0``, ``B = T0^-1 B_b G0^-1``.
    """
    target = brunovsky_target(mu)
    fact = PivotedQR(T0)
    B = fact.solve(target.B_b) @ np.linalg.inv(G0)
    A = fact.solve(target.A_b @ T0) - B @ F0
    return validate_system(A, B)


def cond_ctrb(sys: LinearSystem) -> float:
    """Condition number of the square modified controllability matrix."""
    try:
        return float(np.linalg.cond(modified_ctrb_matrix(sys).C_bar))
    except BrunovskyError:
        return np.inf


def generate_system(mu: Sequence[int], cond_target: float, seed, mode: str = "dynamics"):
    """Random controllable pair with indices ``mu`` and its ground-truth triple.

    ``mode="transform"`` puts the whole conditioning into ``T0`` (singular
    spectrum log-uniform with ratio ``cond_target``, standard normal ``F0``).
    ``mode="dynamics"`` keeps ``kappa(T0) <= 10`` and scales a random feedback
    ``F0 = alpha * N(0, 1)`` until the modified controllability matrix reaches
    ``cond_target``; the system is then ill-conditioned while well-conditioned
    Brunovsky transformations exist.
    """
    mu = brunovsky_target(mu).mu
    if cond_target < 1:
        raise ValueError("cond_target must be >= 1")
    rng = np.random.default_rng(seed)
    n, m = sum(mu), len(mu)
    if mode == "transform":
        T0, F_dir, G0 = _base_draw(n, m, cond_target, rng)
        F0 = F_dir
    elif mode == "dynamics":
        T0, F_dir, G0 = _base_draw(n, m, min(cond_target, BASE_TRANSFORM_COND), rng)
        alpha = _calibrate_feedback(mu, T0, F_dir, G0, cond_target)
        F0 = alpha * F_dir
    else:
        raise ValueError(f"unknown generator mode {mode!r}")
    sys = system_from_triple(mu, T0, F0, G0)
    return sys, TransformTriple(T0, F0, G0, mu)


def _calibrate_feedback(mu, T0, F_dir, G0, cond_target, iters: int = 40) -> float:
    """Bisection on ``log alpha`` for ``kappa(C_bar) = cond_target``."""
    target = np.log(cond_target)

    def excess(log_alpha):
        sys = system_from_triple(mu, T0, np.exp(log_alpha) * F_dir, G0)
        return np.log(cond_ctrb(sys)) - target

    lo, hi = -8.0, 12.0
    if excess(lo) >= 0:
        return 0.0
    if excess(hi) <= 0:
        return float(np.exp(hi))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return float(np.exp(lo))


@dataclass
class TrialRecord:
    trial: int
    seed: int
    method: str
    cond_ctrb: float
    cond_TG: float
    err_Ab: float
    err_Bb: float
    nilpotency: float
    wall_ms: float
    failed: bool
    error: str = ""

    def row(self) -> list:
        return [self.trial, self.seed, self.method, *(repr(float(getattr(self, c))) for c in CSV_COLUMNS[3:9]), int(self.failed)]


def _sentinel(x: float) -> tuple[float, bool]:
    x = float(x)
    return (x, False) if np.isfinite(x) and x < SENTINEL else (SENTINEL, True)


def triple_metrics(sys: LinearSystem, triple: TransformTriple):
    """``kappa(T) kappa(G)``, Brunovsky errors and ``||A_hat^mu||`` of a triple on ``sys``."""
    target = brunovsky_target(triple.mu)
    with np.errstate(all="ignore"):
        A_hat = np.linalg.solve(triple.T.T, (triple.T @ (sys.A + sys.B @ triple.F)).T).T
        B_hat = triple.T @ sys.B @ triple.G
        err_A = np.linalg.norm(A_hat - target.A_b)
        err_B = np.linalg.norm(B_hat - target.B_b)
        nil = np.linalg.norm(np.linalg.matrix_power(A_hat, triple.mu[0]))
        cond_TG = np.linalg.cond(triple.T) * np.linalg.cond(triple.G)
    return cond_TG, err_A, err_B, nil


def run_trial(
    sys: LinearSystem,
    method: str | Callable[[LinearSystem], TransformTriple],
    trial: int = 0,
    seed: int = 0,
    settings: OptimizerSettings | None = None,
    timing: bool = False,
    expected_mu: Sequence[int] | None = None,
) -> TrialRecord:
    """Run one method on ``sys`` and measure it against the Brunovsky target.

    ``method`` is ``"proposed"``, ``"luenberger"`` or a callable returning a
    :class:`TransformTriple`. Numerical failures become sentinel rows.
    """
    kappa_C = cond_ctrb(sys)
    name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
    t0 = time.perf_counter()
    try:
        if method == "proposed":
            triple = proposed_pipeline(sys, settings=settings).triple
        elif method == "luenberger":
            triple = luenberger_pipeline(sys)
        elif callable(method):
            triple = method(sys)
        else:
            raise ValueError(f"unknown method {method!r}")
        wall = (time.perf_counter() - t0) * 1e3
        if expected_mu is not None and tuple(triple.mu) != tuple(expected_mu):
            raise BrunovskyError(f"method found indices {triple.mu}, expected {tuple(expected_mu)}")
        cond_TG, err_A, err_B, nil = triple_metrics(sys, triple)
        error = ""
    except (BrunovskyError, np.linalg.LinAlgError) as exc:
        wall = (time.perf_counter() - t0) * 1e3
        cond_TG = err_A = err_B = nil = np.inf
        error = f"{type(exc).__name__}: {exc}"
    values = [_sentinel(v) for v in (kappa_C, cond_TG, err_A, err_B, nil)]
    failed = bool(error) or any(flag for _, flag in values[1:])
    return TrialRecord(
        trial=trial,
        seed=int(seed),
        method=name,
        cond_ctrb=values[0][0],
        cond_TG=values[1][0],
        err_Ab=values[2][0],
        err_Bb=values[3][0],
        nilpotency=values[4][0],
        wall_ms=round(wall, 3) if timing else 0.0,
        failed=failed,
        error=error,
    )


@dataclass
class BenchConfig:
    trials: int = 100
    n: int = 15
    m: int = 4
    indices: tuple[int, ...] = (5, 5, 3, 2)
    cond_range: tuple[float, float] = (1e2, 1e12)
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    mode: str = "dynamics"
    workers: int = 1
    timing: bool = False
    optimizer: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indices = tuple(int(k) for k in self.indices)
        self.cond_range = tuple(float(c) for c in self.cond_range)
        self.methods = tuple(self.methods)

    def validate(self) -> None:
        if sum(self.indices) != self.n or len(self.indices) != self.m:
            raise ValueError(f"indices {list(self.indices)} must have {self.m} entries summing to n = {self.n}")
        if list(self.indices) != sorted(self.indices, reverse=True) or min(self.indices) < 1:
            raise ValueError("indices must be descending positive integers")
        lo, hi = self.cond_range
        if not 1 <= lo <= hi:
            raise ValueError("cond range must satisfy 1 <= lo <= hi")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {list(METHODS)}")
        if self.mode not in ("dynamics", "transform"):
            raise ValueError(f"unknown generator mode {self.mode!r}")
        OptimizerSettings.from_dict(self.optimizer)


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    """Independent per-trial seeds spawned from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


def cond_targets(config: BenchConfig) -> np.ndarray:
    lo, hi = config.cond_range
    if config.trials == 1:
        return np.array([lo])
    return np.logspace(np.log10(lo), np.log10(hi), config.trials)


def _run_one(args) -> list[TrialRecord]:
    trial, seed, cond, config = args
    settings = OptimizerSettings.from_dict(config.optimizer)
    sys, _ = generate_system(config.indices, cond, seed, config.mode)
    return [
        run_trial(sys, method, trial, seed, settings, config.timing, expected_mu=config.indices)
        for method in config.methods
    ]


@dataclass
class BenchResult:
    config: BenchConfig
    records: list[TrialRecord]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()

    def summary(self) -> dict:
        out = {"config": asdict(self.config), "methods": {}}
        for method in self.config.methods:
            rows = [r for r in self.records if r.method == method]
            entry = {"trials": len(rows), "failed": sum(r.failed for r in rows)}
            for metric in ("cond_TG", "err_Ab", "err_Bb", "nilpotency"):
                vals = np.array([getattr(r, metric) for r in rows])
                q = np.quantile(vals, [0.05, 0.25, 0.5, 0.75, 0.95])
                entry[metric] = {"median": float(q[2]), "q05": float(q[0]), "q25": float(q[1]),
                                 "q75": float(q[3]), "q95": float(q[4]), "max": float(vals.max())}
            out["methods"][method] = entry
        return out

    def write(self, out_dir, plot_script: bool = True) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out_dir / "trials.csv", "summary": out_dir / "summary.json"}
        paths["csv"].write_text(self.csv_text())
        paths["summary"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        if plot_script:
            paths["plot"] = out_dir / "plot.gp"
            paths["plot"].write_text(plot_script_text("trials.csv", self.config.methods))
        return paths


def run_benchmark(config: BenchConfig | None = None) -> BenchResult:
    """All trials of the comparison, rows sorted by ``cond_ctrb`` (then trial, method)."""
    config = config or BenchConfig()
    config.validate()
    seeds = trial_seeds(config.seed, config.trials)
    jobs = [(i, s, c, config) for i, (s, c) in enumerate(zip(seeds, cond_targets(config)))]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]
    order = {m: i for i, m in enumerate(config.methods)}
    records.sort(key=lambda r: (r.cond_ctrb, r.trial, order[r.method]))
    n_failed = sum(r.failed for r in records)
    if n_failed:
        log.info("%d of %d trial rows failed", n_failed, len(records))
    return BenchResult(config, records)


def plot_script_text(csv_name: str, methods: Sequence[str]) -> str:
    """Gnuplot script drawing the four comparison panels from the trial CSV."""
    panels = [
        ("cond_ctrb", 4, "condition number of the controllability matrix"),
        ("cond_TG", 5, "kappa(T) * kappa(G)"),
        ("err_Ab + err_Bb", "($6+$7)", "Brunovsky pair error"),
        ("nilpotency", 8, "||A_hat^mu||_F"),
    ]
    colors = {"proposed": "blue", "luenberger": "red"}
    lines = [
        "# trials sorted by cond_ctrb; one curve per method",
        "set datafile separator ','",
        "set terminal pngcairo size 1200,900",
        "set output 'comparison.png'",
        "set multiplot layout 2,2",
        "set logscale y",
        "set format y '10^{%L}'",
        "set xlabel 'trial (sorted by cond_ctrb)'",
    ]
    for title, col, label in panels:
        lines.append(f"set title '{label}'")
        plots = []
        for method in methods:
            expr = col if isinstance(col, str) else f"${col}"
            plots.append(
                f"'< grep ,{method}, {csv_name}' using 0:{expr} with linespoints "
                f"lc rgb '{colors.get(method, 'black')}' title '{method}'"
            )
        lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"
