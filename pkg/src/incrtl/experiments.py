"""Simulation experiments behind the gain and robustness curves.

Each experiment sweeps one parameter and reports, per sweep value and series,
the per-replicate values (transfer gain or test MSE). Defaults reproduce the
published setups; every default can be overridden.

=============  ===================  =========================================
name           swept parameter      series
=============  ===================  =========================================
alpha          n_T in 5..30         AnalyticWeights, EstimatedWeights (gain)
meanshift      n_T in 5..30         TrueMeanShift, SampleMeanShift (gain)
correlation    c in 0.0..0.9        ols, dp, dsft, dsft-nl (test MSE)
shift          mu_T - mu_S          ols, dp, dsft, dsft-nl (test MSE)
nonadditive    n_T                  ols, dp, dsft, dsft-nl (test MSE)
=============  ===================  =========================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .bench import fit_method
from .errors import IncrtlError, InvalidSpec
from .gain import GainMode, empirical_gain, replicate_datasets
from .simgen import GeneratorKind, GeneratorSpec, part_seeds, sample, sweep

EXPERIMENTS = ("alpha", "meanshift", "correlation", "shift", "nonadditive")
METHOD_SERIES = ("ols", "dp", "dsft", "dsft-nl")

DEFAULTS = {
    "alpha": dict(kind="baseline", n_S=100, n_T=5, grid=(5, 10, 15, 20, 25, 30)),
    "meanshift": dict(kind="shifted", n_S=100, n_T=5, grid=(5, 10, 15, 20, 25, 30)),
    "correlation": dict(kind="correlated", n_S=100, n_T=8, grid=tuple(round(0.1 * i, 1) for i in range(10))),
    "shift": dict(kind="distribution_shift", n_S=200, n_T=15, grid=(0.0, 0.5, 1.0, 2.0)),
    "nonadditive": dict(kind="nonadditive", n_S=1000, n_T=10, grid=(10, 20, 30, 50, 100)),
}
X_NAMES = {"alpha": "n_T", "meanshift": "n_T", "correlation": "c", "shift": "shift", "nonadditive": "n_T"}


@dataclass(frozen=True)
class CurvePoint:
    x: float
    series: str
    values: np.ndarray  # per replicate

    @property
    def mean(self) -> float:
        return float(np.nanmean(self.values))

    @property
    def std(self) -> float:
        v = self.values[np.isfinite(self.values)]
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    @property
    def n(self) -> int:
        return int(np.isfinite(self.values).sum())

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.n) if self.n else float("nan")


@dataclass(frozen=True)
class SimulationResult:
    name: str
    x_name: str
    points: tuple[CurvePoint, ...]
    seed: int

    def point(self, x: float, series: str) -> CurvePoint:
        for p in self.points:
            if p.series == series and np.isclose(p.x, x):
                return p
        raise KeyError((x, series))

    def xs(self) -> list[float]:
        seen: list[float] = []
        for p in self.points:
            if p.x not in seen:
                seen.append(p.x)
        return seen

    def rows(self) -> list[dict]:
        return [
            {self.x_name: _fmt_x(p.x), "series": p.series, "mean": repr(p.mean), "std": repr(p.std), "N": p.n}
            for p in self.points
        ]


def _fmt_x(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def joint_se(a: CurvePoint, b: CurvePoint) -> float:
    return float(np.hypot(a.stderr, b.stderr))


def base_spec(name: str, seed: int, n_S=None, n_T=None, n_test: int = 1000) -> GeneratorSpec:
    d = DEFAULTS[name]
    kind = GeneratorKind(d["kind"])
    kw = dict(kind=kind, n_S=n_S or d["n_S"], n_T=n_T or d["n_T"], n_test=n_test, seed=seed)
    return GeneratorSpec(**kw)


def method_mse(spec: GeneratorSpec, test, n_replicates: int, methods=METHOD_SERIES) -> dict[str, np.ndarray]:
    """Per-replicate test MSE of each method on shared training draws."""
    products = ((1, 2, 3),) if spec.kind is GeneratorKind.NON_ADDITIVE else ()

    def one(i: int) -> list[float]:
        source, target = replicate_datasets(spec, i)
        out = []
        for m in methods:
            try:
                model = fit_method(m, source, target, products)
            except IncrtlError:
                out.append(float("nan"))
                continue
            r = test.y - model.predict(test.X)
            out.append(float(np.mean(r * r)))
        return out

    mat = np.array(parallel_map(one, range(n_replicates)))
    return {m: mat[:, j] for j, m in enumerate(methods)}


def run_experiment(
    name: str,
    seed: int = 0,
    n_replicates: int = 200,
    n_test: int = 1000,
    n_S: int | None = None,
    n_T: int | None = None,
    grid=None,
) -> SimulationResult:
    """Run one named experiment; see the module table for what each sweeps."""
    if name not in EXPERIMENTS:
        raise InvalidSpec(f"unknown experiment {name!r}; choose one of {EXPERIMENTS}")
    grid = tuple(DEFAULTS[name]["grid"] if grid is None else grid)
    base = base_spec(name, seed, n_S, n_T, n_test)
    test_seed = part_seeds(seed)[2]
    points: list[CurvePoint] = []

    if name in ("alpha", "meanshift"):
        modes = (
            (GainMode.ANALYTIC_WEIGHTS, GainMode.ESTIMATED_WEIGHTS)
            if name == "alpha"
            else (GainMode.TRUE_MEAN_SHIFT, GainMode.SAMPLE_MEAN_SHIFT)
        )
        test = sample(base, "test", test_seed)
        for spec in sweep(base, "n_T", grid):
            for mode in modes:
                rep = empirical_gain(spec, test, n_replicates, mode)
                points.append(CurvePoint(spec.n_T, mode.value, rep.per_replicate))
        return SimulationResult(name, X_NAMES[name], tuple(points), seed)

    if name == "correlation":
        specs = sweep(base, "c", grid)
        xs = [s.c for s in specs]
    elif name == "shift":
        shifted = base.replace(mu_target=base.mu_source)
        specs = sweep(shifted, "mu_target", [base.mu_source + g for g in grid])
        xs = list(grid)
    else:
        specs = sweep(base, "n_T", grid)
        xs = [s.n_T for s in specs]
    for x, spec in zip(xs, specs):
        # one test set per setting, drawn from that setting's target law
        test = sample(spec, "test", test_seed)
        for m, vals in method_mse(spec, test, n_replicates).items():
            points.append(CurvePoint(x, m, vals))
    return SimulationResult(name, X_NAMES[name], tuple(points), seed)


def write_result(result: SimulationResult, path) -> None:
    from .modelio import atomic_write_csv

    atomic_write_csv(path, (result.x_name, "series", "mean", "std", "N"), result.rows())
