"""Benchmark harness: CSV ingestion, feature removal, split protocols, method comparison.

A benchmark removes the ``n_new_features`` inputs most correlated with the
label from the source rows, fits every requested method on each run's
source/target pair and scores test RMSE. Methods are compared pairwise with
the signed-rank test, corrected across the family of pairs.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import parallel_map
from .dsft import DsftConfig, fit_dsft_pipeline
from .errors import (
    EmptyDataset,
    IncrtlError,
    InsufficientRows,
    InvalidSpec,
    IoError,
    ParseError,
    TooFewPairs,
    TooManyFeatures,
)
from .estimators import Dataset, FittedModel, fit_data_pooling, fit_ols, predict
from .simgen import GeneratorKind, GeneratorSpec, derive_seed, generate, make_rng, part_seeds, sample
from .wilcoxon import wilcoxon_signed_rank

METHODS = ("ols", "dp", "dsft", "dsft-nl")
CORRECTIONS = ("none", "holm", "bonferroni")

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


# -- experiment description -----------------------------------------------------------


@dataclass(frozen=True)
class CsvSource:
    path: str
    label_column: str
    intercept: bool = True
    nonadditive: bool = False
    product_coef: float = 1.0


@dataclass(frozen=True)
class GeneratorSource:
    spec: GeneratorSpec


@dataclass(frozen=True)
class SmallData:
    """Fixed source and test sets, one disjoint target set per run."""

    n_S: int
    n_T: int
    n_test: int
    runs: int


@dataclass(frozen=True)
class LargeData:
    """Fresh split per run: test fraction, ``n_T`` target rows, the rest is source."""

    n_T: int
    runs: int
    test_frac: float = 0.10


@dataclass(frozen=True)
class ExperimentSpec:
    data: CsvSource | GeneratorSource
    protocol: SmallData | LargeData
    n_new_features: int = 1
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    name: str = "experiment"
    correction: str = "holm"
    significance: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.protocol.runs < 1:
            raise InvalidSpec("runs must be >= 1")
        if self.n_new_features < 1:
            raise InvalidSpec("n_new_features must be >= 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise InvalidSpec(f"unknown methods {unknown}; choose from {METHODS}")
        if self.correction not in CORRECTIONS:
            raise InvalidSpec(f"correction must be one of {CORRECTIONS}")
        if self.seed < 0:
            raise InvalidSpec("seed must be non-negative")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


# -- ingestion ------------------------------------------------------------------------


def load_csv(path, label_column: str) -> Dataset:
    """Read a headed, comma-separated numeric table. Non-numeric or missing cells are rejected."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmptyDataset(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise InvalidSpec(f"label column {label_column!r} not in header of {path}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise EmptyDataset(f"{path} has a header but no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(i, "<row>", f"{len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if not _NUMBER.match(cell):
                raise ParseError(i, header[j], cell)
            values[i, j] = float(cell)
    lab = header.index(label_column)
    feats = [j for j in range(len(header)) if j != lab]
    if not feats:
        raise EmptyDataset(f"{path} has no feature columns")
    return Dataset(values[:, feats], values[:, lab], None, tuple(header[j] for j in feats))


def write_csv_dataset(path, data: Dataset, label_column: str = "y") -> None:
    """Write features then label with 17 significant digits (exact round trip)."""
    from .modelio import atomic_write_text

    names = data.columns or tuple(f"x{j}" for j in range(data.d))
    lines = [",".join((*names, label_column))]
    for xrow, yv in zip(data.X, data.y):
        lines.append(",".join(f"{v:.17g}" for v in (*xrow, yv)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def pearson_abs(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``|corr(X_j, y)|`` per column; constant columns get 0."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    num = Xc.T @ yc
    den = np.sqrt(np.einsum("ij,ij->j", Xc, Xc)) * math.sqrt(float(yc @ yc))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.minimum(np.abs(r), 1.0)


def rank_new_features(data: Dataset, k: int) -> list[int]:
    """Indices of the ``k`` columns most correlated (in absolute value) with the label.

    Ties keep the lower column index first.
    """
    if not 1 <= k < data.d:
        raise TooManyFeatures(f"cannot mark {k} of {data.d} features as new")
    r = pearson_abs(data.X, data.y)
    order = np.lexsort((np.arange(data.d), -r))
    return [int(j) for j in order[:k]]


@dataclass(frozen=True)
class PreparedData:
    """A table with historical columns first and its derived-product bookkeeping."""

    data: Dataset
    new_features: tuple[str, ...]
    products: tuple[tuple[int, int, int], ...] = ()


def prepare_table(raw: Dataset, src: CsvSource, n_new: int) -> PreparedData:
    """Reorder columns to (intercept, historical, new[, product]) for the source/target split."""
    new_idx = rank_new_features(raw, n_new)
    hist_idx = [j for j in range(raw.d) if j not in new_idx]
    names = raw.columns or tuple(f"x{j}" for j in range(raw.d))
    X = raw.X[:, hist_idx + new_idx]
    cols = [names[j] for j in hist_idx + new_idx]
    y = raw.y.copy()
    if src.intercept:
        X = np.hstack([np.ones((raw.n, 1)), X])
        cols = ["1"] + cols
    d_hist = len(hist_idx) + int(src.intercept)
    products: tuple[tuple[int, int, int], ...] = ()
    if src.nonadditive:
        if not hist_idx:
            raise InvalidSpec("non-additive scenario needs at least one historical feature")
        r = pearson_abs(raw.X, raw.y)
        best_hist = max(hist_idx, key=lambda j: (r[j], -j))
        i = int(src.intercept) + hist_idx.index(best_hist)
        j = d_hist  # top-ranked new feature
        prod = X[:, i] * X[:, j]
        X = np.hstack([X, prod[:, None]])
        cols.append(f"{cols[i]}*{cols[j]}")
        y = y + src.product_coef * prod
        products = ((i, j, X.shape[1] - 1),)
    return PreparedData(Dataset(X, y, d_hist, tuple(cols)), tuple(names[j] for j in new_idx), products)


# -- splitting ------------------------------------------------------------------------


def split_indices(n_total: int, spec: ExperimentSpec, run_index: int):
    """Row indices ``(source, target, test)`` of one run."""
    proto = spec.protocol
    if isinstance(proto, SmallData):
        needed = proto.n_S + proto.n_test + proto.runs * proto.n_T
        if needed > n_total:
            raise InsufficientRows(needed, n_total)
        perm = make_rng(derive_seed(spec.seed, 0)).permutation(n_total)
        src = perm[: proto.n_S]
        test = perm[proto.n_S : proto.n_S + proto.n_test]
        pool = perm[proto.n_S + proto.n_test :]
        tgt = pool[run_index * proto.n_T : (run_index + 1) * proto.n_T]
        return src, tgt, test
    n_test = int(math.floor(proto.test_frac * n_total + 0.5))
    needed = n_test + proto.n_T + 1
    if needed > n_total:
        raise InsufficientRows(needed, n_total)
    perm = make_rng(derive_seed(spec.seed, 1, run_index)).permutation(n_total)
    test = perm[:n_test]
    tgt = perm[n_test : n_test + proto.n_T]
    src = perm[n_test + proto.n_T :]
    return src, tgt, test


def split(data: Dataset, spec: ExperimentSpec, run_index: int) -> tuple[Dataset, Dataset, Dataset]:
    """Source (historical columns only), target and test sets of one run."""
    src, tgt, test = split_indices(data.n, spec, run_index)
    return data.take(src).historical(), data.take(tgt), data.take(test)


def _generator_run(gen: GeneratorSpec, spec: ExperimentSpec, run_index: int):
    proto = spec.protocol
    if isinstance(proto, SmallData):
        g = gen.replace(n_S=proto.n_S, n_T=proto.n_T, n_test=proto.n_test)
        s_src, _, s_test = part_seeds(spec.seed)
        source = sample(g, "source", s_src)
        test = sample(g, "test", s_test)
        target = sample(g, "target", derive_seed(spec.seed, 2, run_index))
        return source, target, test
    g = gen.replace(n_T=proto.n_T, seed=derive_seed(spec.seed, 1, run_index))
    return generate(g)


# -- running --------------------------------------------------------------------------


def fit_method(method: str, source: Dataset, target: Dataset, products=()) -> FittedModel:
    if method == "ols":
        return fit_ols(target)
    if method == "dp":
        return fit_data_pooling(source, target)[0]
    if method == "dsft":
        return fit_dsft_pipeline(source, target, DsftConfig(), products)
    if method == "dsft-nl":
        return fit_dsft_pipeline(source, target, DsftConfig(kernel="rbf"), products)
    raise InvalidSpec(f"unknown method {method!r}")


def rmse(model: FittedModel, test: Dataset) -> float:
    r = test.y - predict(model, test.X)
    return float(np.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class PairTest:
    method_a: str
    method_b: str
    p_value: float
    p_corrected: float
    significant: bool
    n_pairs: int


@dataclass(frozen=True)
class BenchResult:
    name: str
    methods: tuple[str, ...]
    rmse: np.ndarray  # (runs, methods); NaN marks a failed fit
    tests: tuple[PairTest, ...]
    correction: str = "holm"
    errors: dict = field(default_factory=dict, compare=False)

    def mean(self, method: str) -> float:
        return float(np.nanmean(self.rmse[:, self.methods.index(method)]))

    def std(self, method: str) -> float:
        return float(np.nanstd(self.rmse[:, self.methods.index(method)]))

    def test(self, a: str, b: str) -> PairTest | None:
        for t in self.tests:
            if {t.method_a, t.method_b} == {a, b}:
                return t
        return None

    def significantly_better(self, a: str, b: str) -> bool:
        """True when ``a`` has significantly lower RMSE than ``b``."""
        t = self.test(a, b)
        return bool(t is not None and t.significant and self.mean(a) < self.mean(b))


def correct_p_values(p_values, method: str) -> np.ndarray:
    p = np.asarray(p_values, dtype=np.float64)
    out = np.full_like(p, np.nan)
    ok = np.isfinite(p)
    if method == "none" or not ok.any():
        out[ok] = p[ok]
        return out
    from statsmodels.stats.multitest import multipletests

    out[ok] = multipletests(p[ok], method=method)[1]
    return out


def pairwise_tests(rmse_matrix: np.ndarray, methods, correction: str, level: float) -> tuple[PairTest, ...]:
    pairs, raw, counts = [], [], []
    for i in range(len(methods)):
        for j in range(i + 1, len(methods)):
            a, b = rmse_matrix[:, i], rmse_matrix[:, j]
            keep = np.isfinite(a) & np.isfinite(b)
            try:
                p = wilcoxon_signed_rank(a[keep], b[keep])
            except TooFewPairs:
                p = float("nan")
            pairs.append((methods[i], methods[j]))
            raw.append(p)
            counts.append(int(keep.sum()))
    corrected = correct_p_values(raw, correction)
    return tuple(
        PairTest(a, b, p, float(pc), bool(np.isfinite(pc) and pc < level), n)
        for (a, b), p, pc, n in zip(pairs, raw, corrected, counts)
    )


def run_benchmark(spec: ExperimentSpec, base_dir=None) -> BenchResult:
    """Run every method on every run and compare them on test RMSE."""
    products: tuple = ()
    if isinstance(spec.data, CsvSource):
        path = Path(spec.data.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        prepared = prepare_table(load_csv(path, spec.data.label_column), spec.data, spec.n_new_features)
        products = prepared.products
        # fail early on impossible splits
        split_indices(prepared.data.n, spec, 0)

        def draw(r):
            return split(prepared.data, spec, r)

    else:
        gen = spec.data.spec
        if gen.kind is GeneratorKind.NON_ADDITIVE:
            products = ((1, 2, 3),)

        def draw(r):
            return _generator_run(gen, spec, r)

    errors: dict = {}

    def one_run(r: int) -> list[float]:
        source, target, test = draw(r)
        row = []
        for m in spec.methods:
            try:
                row.append(rmse(fit_method(m, source, target, products), test))
            except IncrtlError as exc:
                errors[(r, m)] = str(exc)
                row.append(float("nan"))
        return row

    matrix = np.array(parallel_map(one_run, range(spec.protocol.runs)), dtype=np.float64)
    tests = pairwise_tests(matrix, spec.methods, spec.correction, spec.significance)
    return BenchResult(spec.name, spec.methods, matrix, tests, spec.correction, errors)


# -- reporting --------------------------------------------------------------------------


RESULTS_COLUMNS = ("dataset", "method", "run", "rmse")
SUMMARY_COLUMNS = ("dataset", "method", "mean_rmse", "std_rmse")
TESTS_COLUMNS = ("method_a", "method_b", "p_value", "significant_after_correction")


def write_outputs(result: BenchResult, out_dir) -> None:
    from .modelio import atomic_write_csv

    out_dir = Path(out_dir)
    results = [
        {"dataset": result.name, "method": m, "run": r, "rmse": repr(float(result.rmse[r, j]))}
        for r in range(result.rmse.shape[0])
        for j, m in enumerate(result.methods)
    ]
    summary = [
        {"dataset": result.name, "method": m, "mean_rmse": repr(result.mean(m)), "std_rmse": repr(result.std(m))}
        for m in result.methods
    ]
    tests = [
        {
            "method_a": t.method_a,
            "method_b": t.method_b,
            "p_value": repr(t.p_value),
            "significant_after_correction": str(t.significant).lower(),
        }
        for t in result.tests
    ]
    atomic_write_csv(out_dir / "results.csv", RESULTS_COLUMNS, results)
    atomic_write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary)
    atomic_write_csv(out_dir / "tests.csv", TESTS_COLUMNS, tests)


def _fmt(x: float) -> str:
    return f"{x:.3g}"


def markdown_table(result: BenchResult) -> str:
    """One-row table of mean +- std per method.

    The name gets ``*`` when DP and OLS do not differ significantly and ``†``
    when OLS is significantly better. A method cell is underlined
    (``<u>..</u>``) when it beats ``dsft-nl`` and DP significantly, and
    italicised when it beats ``dsft`` and DP significantly.
    """
    name = result.name
    ms = result.methods
    if "dp" in ms and "ols" in ms:
        t = result.test("dp", "ols")
        if t is not None and not t.significant:
            name += "*"
        elif result.significantly_better("ols", "dp"):
            name += "†"
    cells = []
    for m in ms:
        cell = f"{_fmt(result.mean(m))} ± {_fmt(result.std(m))}"
        if "dp" in ms and m in ("dp", "dsft-nl") and "dsft-nl" in ms:
            other = "dsft-nl" if m == "dp" else "dp"
            if result.significantly_better(m, other):
                cell = f"<u>{cell}</u>"
        if "dp" in ms and m in ("dp", "dsft") and "dsft" in ms:
            other = "dsft" if m == "dp" else "dp"
            if result.significantly_better(m, other):
                cell = f"*{cell}*"
        cells.append(cell)
    head = "| Dataset | " + " | ".join(ms) + " |"
    sep = "|" + "---|" * (len(ms) + 1)
    row = f"| {name} | " + " | ".join(cells) + " |"
    return "\n".join([head, sep, row])


# -- config files ---------------------------------------------------------------------


def _gen_from_table(t: dict) -> GeneratorSpec:
    allowed = {f.name for f in dataclasses.fields(GeneratorSpec)} - {"extra", "seed"}
    kw = {k: v for k, v in t.items() if k in allowed}
    unknown = set(t) - allowed - {"source", "seed"}
    if unknown:
        raise InvalidSpec(f"unknown generator keys {sorted(unknown)}")
    if "theta" in kw:
        kw["theta"] = tuple(kw["theta"])
    return GeneratorSpec(**kw, seed=int(t.get("seed", 0)))


def experiment_from_dict(cfg: dict) -> ExperimentSpec:
    try:
        data = cfg["data"]
        proto = cfg["protocol"]
    except KeyError as exc:
        raise InvalidSpec(f"config is missing the [{exc.args[0]}] table") from exc
    src = data.get("source")
    if src == "csv":
        data_spec: CsvSource | GeneratorSource = CsvSource(
            path=str(data["path"]),
            label_column=str(data["label_column"]),
            intercept=bool(data.get("intercept", True)),
            nonadditive=bool(data.get("nonadditive", False)),
            product_coef=float(data.get("product_coef", 1.0)),
        )
    elif src == "generator":
        data_spec = GeneratorSource(_gen_from_table(data))
    else:
        raise InvalidSpec(f"data.source must be 'csv' or 'generator', got {src!r}")
    kind = proto.get("kind")
    try:
        if kind == "small":
            protocol: SmallData | LargeData = SmallData(
                int(proto["n_S"]), int(proto["n_T"]), int(proto["n_test"]), int(proto["runs"])
            )
        elif kind == "large":
            protocol = LargeData(int(proto["n_T"]), int(proto["runs"]), float(proto.get("test_frac", 0.10)))
        else:
            raise InvalidSpec(f"protocol.kind must be 'small' or 'large', got {kind!r}")
    except KeyError as exc:
        raise InvalidSpec(f"protocol is missing {exc.args[0]!r}") from exc
    return ExperimentSpec(
        data=data_spec,
        protocol=protocol,
        n_new_features=int(cfg.get("n_new_features", 1)),
        methods=tuple(cfg.get("methods", METHODS)),
        seed=int(cfg.get("seed", 0)),
        name=str(cfg.get("name", "experiment")),
        correction=str(cfg.get("correction", "holm")),
        significance=float(cfg.get("significance", 0.05)),
    )


def experiment_to_dict(spec: ExperimentSpec) -> dict:
    out: dict = {
        "name": spec.name,
        "seed": spec.seed,
        "methods": list(spec.methods),
        "n_new_features": spec.n_new_features,
        "correction": spec.correction,
        "significance": spec.significance,
    }
    if isinstance(spec.data, CsvSource):
        out["data"] = {"source": "csv", **dataclasses.asdict(spec.data)}
    else:
        g = spec.data.spec
        out["data"] = {
            "source": "generator",
            "kind": g.kind.value,
            "theta": list(g.theta),
            "sigma": g.sigma,
            "n_S": g.n_S,
            "n_T": g.n_T,
            "n_test": g.n_test,
            "seed": g.seed,
            "c": g.c,
            "mu_source": g.mu_source,
            "mu_target": g.mu_target,
            "product_coef": g.product_coef,
        }
    p = spec.protocol
    if isinstance(p, SmallData):
        out["protocol"] = {"kind": "small", "n_S": p.n_S, "n_T": p.n_T, "n_test": p.n_test, "runs": p.runs}
    else:
        out["protocol"] = {"kind": "large", "n_T": p.n_T, "runs": p.runs, "test_frac": p.test_frac}
    return out


def load_experiment(path) -> ExperimentSpec:
    import tomli

    path = Path(path)
    try:
        cfg = tomli.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise InvalidSpec(f"malformed config {path}: {exc}") from exc
    return experiment_from_dict(cfg)


def dump_experiment(spec: ExperimentSpec) -> str:
    import tomli_w

    return tomli_w.dumps(experiment_to_dict(spec))
