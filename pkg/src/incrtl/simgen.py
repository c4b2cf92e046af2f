"""Seeded synthetic source/target/test generators.

Every generator draws an intercept column, one historical input ``X1`` and one
new input ``X2`` (plus, for the non-additive kind, the product ``X1*X2``) and
labels ``y = theta . (1, X1, X2) + w`` with ``w ~ N(0, sigma^2)``. Source rows
only keep the historical columns.

Seeding: ``generate`` splits ``spec.seed`` into three independent Philox
streams (source, target, test) with ``numpy.random.SeedSequence``; see
:func:`derive_seed` for sub-seeds.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec, UnknownParam
from .estimators import Dataset

_SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 64-bit sub-seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & _SEED_MASK, *(int(k) & _SEED_MASK for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _SEED_MASK))


class GeneratorKind(str, enum.Enum):
    BASELINE_LINEAR = "baseline"
    SHIFTED_NEW_FEATURE = "shifted"
    CORRELATED_INPUTS = "correlated"
    DISTRIBUTION_SHIFT = "distribution_shift"
    NON_ADDITIVE = "nonadditive"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: GeneratorKind = GeneratorKind.BASELINE_LINEAR
    theta: tuple[float, ...] = (2.0, 2.0, -2.0)
    sigma: float = 1.0
    n_S: int = 100
    n_T: int = 10
    n_test: int = 1000
    seed: int = 0
    c: float = 0.0
    mu_source: float = 1.0
    mu_target: float = 1.0
    product_coef: float = 1.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
        validate(self)

    def replace(self, **changes) -> "GeneratorSpec":
        return dataclasses.replace(self, **changes)

    @property
    def d_S(self) -> int:
        return 2

    @property
    def d_T(self) -> int:
        return 4 if self.kind is GeneratorKind.NON_ADDITIVE else 3


def validate(spec: GeneratorSpec) -> None:
    if len(spec.theta) != 3:
        raise InvalidSpec(f"theta must be (intercept, X1, X2), got {spec.theta}")
    if not spec.sigma > 0:
        raise InvalidSpec("sigma must be positive")
    for name in ("n_S", "n_T", "n_test"):
        if int(getattr(spec, name)) < 1:
            raise InvalidSpec(f"{name} must be positive")
    if not 0.0 <= spec.c < 1.0:
        raise InvalidSpec(f"correlation c must lie in [0, 1), got {spec.c}")
    if spec.seed < 0:
        raise InvalidSpec("seed must be non-negative")


def _inputs(spec: GeneratorSpec, rng: np.random.Generator, n: int, domain: str) -> np.ndarray:
    """Draw ``(X1, X2)`` for one domain ('source' or 'target')."""
    kind = spec.kind
    if kind is GeneratorKind.CORRELATED_INPUTS:
        cov = np.array([[1.0, spec.c], [spec.c, 1.0]])
        L = np.linalg.cholesky(cov)
        return np.array([0.0, 1.0]) + rng.standard_normal((n, 2)) @ L.T
    Z = rng.standard_normal((n, 2))
    if kind is GeneratorKind.SHIFTED_NEW_FEATURE:
        Z[:, 1] += 1.0
    elif kind is GeneratorKind.DISTRIBUTION_SHIFT:
        Z[:, 1] += spec.mu_source if domain == "source" else spec.mu_target
    return Z


def sample(spec: GeneratorSpec, part: str, seed: int, n: int | None = None) -> Dataset:
    """Draw one part ('source', 'target' or 'test') from its own stream."""
    if part not in ("source", "target", "test"):
        raise InvalidSpec(f"unknown part {part!r}")
    if n is None:
        n = {"source": spec.n_S, "target": spec.n_T, "test": spec.n_test}[part]
    rng = make_rng(seed)
    domain = "source" if part == "source" else "target"
    Z = _inputs(spec, rng, n, domain)
    w = spec.sigma * rng.standard_normal(n)
    ones = np.ones((n, 1))
    X = np.hstack([ones, Z])
    y = X @ np.asarray(spec.theta) + w
    if spec.kind is GeneratorKind.NON_ADDITIVE:
        prod = Z[:, 0] * Z[:, 1]
        y = y + spec.product_coef * prod
        X = np.hstack([X, prod[:, None]])
    if part == "source":
        return Dataset(X[:, : spec.d_S], y, spec.d_S, ("1", "X1"))
    names = ("1", "X1", "X2", "X1*X2")[: X.shape[1]]
    return Dataset(X, y, spec.d_S, names)


def part_seeds(seed: int) -> tuple[int, int, int]:
    """Independent stream seeds for the source, target and test parts."""
    children = np.random.SeedSequence(int(seed) & _SEED_MASK).spawn(3)
    return tuple(int(c.generate_state(1, dtype=np.uint64)[0]) for c in children)  # type: ignore[return-value]


def generate(spec: GeneratorSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Source, target and test datasets for ``spec``; deterministic in ``spec.seed``."""
    s_src, s_tgt, s_test = part_seeds(spec.seed)
    return (
        sample(spec, "source", s_src),
        sample(spec, "target", s_tgt),
        sample(spec, "test", s_test),
    )


def true_variances(spec: GeneratorSpec) -> tuple[float, float]:
    """Population ``(sigma2, sigma2_S)``: target label noise and inflated source noise.

    The source noise adds the variance of the unobserved terms; for the
    correlated kind this is the marginal (independence) value.
    """
    sigma2 = spec.sigma**2
    t2 = spec.theta[2]
    if spec.kind is GeneratorKind.NON_ADDITIVE:
        # Var(t2*X2 + b*X1*X2) = t2^2 + b^2 for independent standard normals
        return sigma2, sigma2 + t2**2 + spec.product_coef**2
    return sigma2, sigma2 + t2**2


def true_new_feature_mean(spec: GeneratorSpec) -> np.ndarray:
    """Target-domain population mean of the new columns."""
    if spec.kind is GeneratorKind.NON_ADDITIVE:
        return np.zeros(2)
    mu = {
        GeneratorKind.BASELINE_LINEAR: 0.0,
        GeneratorKind.SHIFTED_NEW_FEATURE: 1.0,
        GeneratorKind.CORRELATED_INPUTS: 1.0,
        GeneratorKind.DISTRIBUTION_SHIFT: spec.mu_target,
    }[spec.kind]
    return np.array([mu])


_SWEEPABLE = {
    "n_T": None,
    "c": GeneratorKind.CORRELATED_INPUTS,
    "mu_target": GeneratorKind.DISTRIBUTION_SHIFT,
}


def sweep(spec: GeneratorSpec, param: str, values) -> list[GeneratorSpec]:
    """Copies of ``spec`` differing in ``param``; the i-th gets seed ``derive_seed(seed, i)``."""
    if param not in _SWEEPABLE:
        raise UnknownParam(f"cannot sweep {param!r}; choose one of {sorted(_SWEEPABLE)}")
    needed = _SWEEPABLE[param]
    if needed is not None and spec.kind is not needed:
        raise InvalidSpec(f"{param} only applies to the {needed.value} generator")
    cast = int if param == "n_T" else float
    return [
        spec.replace(**{param: cast(v)}, seed=derive_seed(spec.seed, i)) for i, v in enumerate(values)
    ]


def make_standin_table(n_total: int = 1030, d: int = 8, seed: int = 2024) -> tuple[np.ndarray, np.ndarray]:
    """A tabular regression stand-in with mixed, mildly correlated, non-Gaussian inputs.

    Used by the bundled table-layout benchmark config when the real files are
    not at hand.
    """
    rng = make_rng(seed)
    latent = rng.standard_normal((n_total, 2))
    cols = []
    for j in range(d):
        mix = 0.4 * latent[:, j % 2]
        if j % 4 == 0:
            base = rng.gamma(2.0, 1.0, n_total)
        elif j % 4 == 1:
            base = rng.uniform(-2.0, 2.0, n_total)
        elif j % 4 == 2:
            base = rng.standard_normal(n_total)
        else:
            base = rng.exponential(1.0, n_total)
        cols.append(10.0 * (base + mix) + j)
    X = np.column_stack(cols)
    coefs = rng.uniform(-1.0, 1.0, d)
    y = 5.0 + (X - X.mean(axis=0)) @ coefs * 0.3 + rng.standard_normal(n_total) * 3.0
    return X, y
