"""Exact checkers for the intersection-sum bound and its indicator form.

For sets ``S_1..S_d`` of ``[n]`` whose pairwise intersections satisfy
``frac(S_i & S_j) <= alpha frac(S_i) frac(S_j)`` and whose union has fraction
``eps`` with ``alpha eps < 1``, the sum of ``frac(S_i)`` is at most
``eps / (1 - alpha eps)``.  The indicator version: for ``X`` in ``{0,1}^d``
with ``E X_i X_j <= eps E X_i E X_j``, the sum of ``E X_i`` is at most
``1 / (1 - eps)``.

Everything is integer counting compared through ``Fraction``; the only
inexact step is converting the float ``alpha``/``eps`` to a fraction, which
is exact for binary floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass
class SetSystem:
    n: int
    subsets: list[np.ndarray]

    def __post_init__(self):
        m = np.zeros((len(self.subsets), self.n), dtype=bool)
        for i, s in enumerate(self.subsets):
            s = np.asarray(s, dtype=np.int64)
            if len(s) and (s.min() < 0 or s.max() >= self.n):
                raise ValueError("subset entries must lie in [0, n)")
            m[i, s] = True
        self._m = m
        self.subsets = [np.flatnonzero(row) for row in m]

    @classmethod
    def from_membership(cls, m: np.ndarray) -> "SetSystem":
        m = np.asarray(m, dtype=bool)
        return cls(m.shape[1], [np.flatnonzero(row) for row in m])

    @property
    def d(self) -> int:
        return len(self.subsets)

    def membership(self) -> np.ndarray:
        return self._m.copy()

    def counts(self) -> tuple[np.ndarray, np.ndarray, int]:
        """(sizes, pairwise intersection sizes, union size)."""
        m = self._m.astype(float)  # float matmul is exact for these counts
        sizes = m.sum(axis=1).astype(np.int64)
        inter = np.rint(m @ m.T).astype(np.int64)
        return sizes, inter, int(np.count_nonzero(self._m.any(axis=0)))

    def fractions(self) -> dict:
        sizes, inter, union = self.counts()
        return {"sets": sizes / self.n, "pairs": inter / self.n, "union": union / self.n}


@dataclass
class CheckResult:
    applicable: bool
    holds: bool
    lhs: float
    rhs: float


def _pairwise_ok(inter: np.ndarray, sizes: np.ndarray, n: int, coef: Fraction) -> bool:
    """``n * |A & B| <= coef * |A| |B|`` for all ``i != j``, in exact integers."""
    d = len(sizes)
    if d < 2:
        return True
    off = ~np.eye(d, dtype=bool)
    lhs = inter.astype(object)[off] * (coef.denominator * n)
    rhs = np.outer(sizes, sizes).astype(object)[off] * coef.numerator
    return bool(np.all(lhs <= rhs))


def intersection_sum_check(sys: SetSystem, alpha: float) -> CheckResult:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    a = Fraction(alpha)
    sizes, inter, union = sys.counts()
    n = sys.n
    eps = Fraction(union, n)
    lhs = Fraction(int(sizes.sum()), n)
    if a * eps >= 1 or not _pairwise_ok(inter, sizes, n, a):
        return CheckResult(False, True, float(lhs), float("nan"))
    rhs = eps / (1 - a * eps)
    return CheckResult(True, lhs <= rhs, float(lhs), float(rhs))


def pairwise_expectation_check(samples: np.ndarray, eps: float) -> CheckResult:
    """Rows of ``samples`` are draws of ``X``; moments are empirical."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    x = np.asarray(samples).astype(float)
    if x.ndim != 2:
        raise ValueError("samples must be an n x d matrix")
    n = x.shape[0]
    sizes = x.sum(axis=0).astype(np.int64)
    inter = np.rint(x.T @ x).astype(np.int64)
    lhs = Fraction(int(sizes.sum()), n) if n else Fraction(0)
    if not _pairwise_ok(inter, sizes, n, Fraction(eps)):
        return CheckResult(False, True, float(lhs), float("nan"))
    rhs = 1 / (1 - Fraction(eps))
    return CheckResult(True, lhs <= rhs, float(lhs), float(rhs))


# --------------------------------------------------------------------------- random instances

@dataclass
class SetSuiteConfig:
    n: int = 1000
    max_d: int = 20
    alpha_range: tuple[float, float] = (1.5, 40.0)
    correlation_prob: float = 0.3  # chance a set copies a slice of an earlier one
    max_attempts_factor: int = 20


def random_set_system(rng: np.random.Generator, cfg: SetSuiteConfig) -> tuple[SetSystem, float]:
    d = int(rng.integers(1, cfg.max_d + 1))
    alpha = float(rng.uniform(*cfg.alpha_range))
    eps_target = rng.uniform(0.0, 0.95 / alpha)
    p = np.minimum(1.0, eps_target * rng.dirichlet(np.ones(d)) * rng.uniform(0.5, 1.5, size=d))
    m = rng.random((d, cfg.n)) < p[:, None]
    for i in range(1, d):
        if rng.random() < cfg.correlation_prob:
            # copy a random share of an earlier set into this one
            donor = m[int(rng.integers(i))]
            m[i] |= donor & (rng.random(cfg.n) < rng.random())
    return SetSystem.from_membership(m), alpha


def random_indicator_matrix(rng: np.random.Generator, cfg: SetSuiteConfig) -> tuple[np.ndarray, float]:
    """Mostly one-hot rows with a sprinkling of two-hot rows, sized near the bound."""
    d = int(rng.integers(1, cfg.max_d + 1))
    n = cfg.n
    eps = float(rng.uniform(0.05, 0.95))
    q = rng.uniform(0.05, 1.0)  # probability a row is nonzero
    r = rng.uniform(0.0, 1.2) * eps * q * q / 2  # probability a row is two-hot
    x = np.zeros((n, d), dtype=bool)
    hot = rng.random(n) < q
    x[np.flatnonzero(hot), rng.integers(0, d, size=int(hot.sum()))] = True
    if d > 1:
        two = np.flatnonzero(rng.random(n) < r)
        x[two, rng.integers(0, d, size=len(two))] = True
    return x, eps


def run_suite(n_systems: int = 10_000, n_matrices: int = 10_000, seed: int = 0,
              cfg: SetSuiteConfig | None = None) -> dict:
    """Generate until the requested number of applicable instances is reached."""
    cfg = cfg or SetSuiteConfig()
    rng = np.random.default_rng(seed)
    out = {}
    for name, target, make, check in (
        ("intersection_sum", n_systems, random_set_system, intersection_sum_check),
        ("pairwise_expectation", n_matrices, random_indicator_matrix, pairwise_expectation_check),
    ):
        applicable = violations = attempts = 0
        tightest = 0.0
        while applicable < target and attempts < cfg.max_attempts_factor * max(target, 1):
            attempts += 1
            inst, param = make(rng, cfg)
            res = check(inst, param)
            if not res.applicable:
                continue
            applicable += 1
            violations += not res.holds
            if res.rhs > 0:
                tightest = max(tightest, res.lhs / res.rhs)
        out[name] = {"applicable": applicable, "attempts": attempts, "violations": violations,
                     "max_lhs_over_rhs": tightest, "passed": violations == 0 and applicable >= target}
    out["passed"] = all(v["passed"] for v in out.values() if isinstance(v, dict))
    return out
