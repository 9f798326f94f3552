"""Prior densities and the ancillary covariance construction.

The ancillary matrix Gamma has dimension ``2 * n_t`` and is ordered arm by
arm, outcome within arm: index ``2 * k + j`` holds outcome ``j`` (0 for the
surrogate, 1 for the final outcome) of treatment ``k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import betaln

PSD_TOL = 1e-10


@dataclass(frozen=True)
class CorrelationPrior:
    """Prior on a correlation via ``(rho + 1) / 2 ~ Beta(alpha, beta)``."""

    alpha: float = 1.5
    beta: float = 1.5

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Beta parameters must be > 0")

    def log_density(self, rho: float) -> float:
        return correlation_log_prior(rho, self.alpha, self.beta)

    def sample(self, rng: np.random.Generator, size=None):
        return 2.0 * rng.beta(self.alpha, self.beta, size) - 1.0

    def cdf(self, rho):
        from scipy.stats import beta as beta_dist

        return beta_dist.cdf((np.asarray(rho) + 1.0) / 2.0, self.alpha, self.beta)


def correlation_log_prior(rho: float, alpha: float = 1.5, beta: float = 1.5) -> float:
    """log density of rho when (rho+1)/2 ~ Beta(alpha, beta); -inf off (-1, 1)."""
    if not -1.0 < rho < 1.0:
        return -math.inf
    r = 0.5 * (rho + 1.0)
    return (
        (alpha - 1.0) * math.log(r)
        + (beta - 1.0) * math.log1p(-r)
        - betaln(alpha, beta)
        - math.log(2.0)
    )


@dataclass(frozen=True)
class UniformSdPrior:
    """Standard deviation ~ Uniform(lo, hi)."""

    lo: float = 0.0
    hi: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi:
            raise ValueError("need 0 <= lo < hi")

    def log_density(self, sd: float) -> float:
        if not self.lo < sd < self.hi:
            return -math.inf
        return -math.log(self.hi - self.lo)


@dataclass(frozen=True)
class ExchangeableVariancePrior:
    """``gamma^2 ~ N(0, v) I(0,)`` with ``v ~ Gamma(shape, rate)``.

    ``v`` is a variance by default. With ``v_is_precision`` the normal's
    second argument is read as a precision instead (BUGS ``dnorm``).
    """

    shape: float = 1.0
    rate: float = 0.01
    v_is_precision: bool = False

    def hyper_log_density(self, v: float) -> float:
        if not v > 0:
            return -math.inf
        return (
            self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
            + (self.shape - 1.0) * math.log(v)
            - self.rate * v
        )

    def log_density_sd(self, gamma, v: float) -> float:
        """Summed log density of standard deviations ``gamma`` given ``v``.

        Includes the ``2 * gamma`` Jacobian from variance to sd.
        """
        g = np.asarray(gamma, dtype=float)
        if not v > 0 or np.any(g <= 0):
            return -math.inf
        var = 1.0 / v if self.v_is_precision else v
        s = g * g
        per = math.log(2.0) - 0.5 * math.log(2.0 * math.pi * var) - s * s / (2.0 * var)
        return float(np.sum(per + np.log(2.0 * g)))


@dataclass(frozen=True)
class SdPrior:
    """Serializable selector between the two SD prior families."""

    kind: str = "uniform"
    lo: float = 0.0
    hi: float = 2.0
    shape: float = 1.0
    rate: float = 0.01

    def resolve(self):
        if self.kind == "uniform":
            return UniformSdPrior(self.lo, self.hi)
        if self.kind == "half_normal_with_gamma_hyperprior":
            return ExchangeableVariancePrior(self.shape, self.rate)
        raise ValueError(f"unknown SD prior kind {self.kind!r}")


def n_angles(dim: int) -> int:
    return dim * (dim - 1) // 2


def angle_pairs(dim: int) -> list[tuple[int, int]]:
    """(row, column) of each angle in flat order: column by column, rows top-down."""
    return [(i, j) for j in range(1, dim) for i in range(j)]


def cholesky_factor(angles, dim: int) -> np.ndarray:
    """Upper-triangular L with unit-norm columns from spherical angles.

    Column ``j`` is ``(cos a0, sin a0 cos a1, ..., sin a0 ... sin a_{j-1})``
    where ``a_i`` is the angle at (row i, column j).
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (n_angles(dim),):
        raise ValueError(f"expected {n_angles(dim)} angles for dim {dim}, got {angles.shape}")
    if np.any(angles <= 0.0) or np.any(angles >= math.pi):
        raise ValueError("angles must lie in (0, pi)")
    L = np.zeros((dim, dim))
    L[0, 0] = 1.0
    a = angles.tolist()
    pos = 0
    for j in range(1, dim):
        s = 1.0
        for i in range(j):
            L[i, j] = math.cos(a[pos]) * s
            s *= math.sin(a[pos])
            pos += 1
        L[j, j] = s
    return L


def build_cholesky_correlation(angles, dim: int) -> np.ndarray:
    """Correlation matrix R = L^T L from spherical angles."""
    L = cholesky_factor(angles, dim)
    return L.T @ L


@dataclass(frozen=True)
class AncillaryGamma:
    n_t: int
    sds: np.ndarray
    angles: np.ndarray
    corr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sds = np.asarray(self.sds, dtype=float)
        if sds.shape != (2 * self.n_t,):
            raise ValueError(f"need {2 * self.n_t} standard deviations")
        if np.any(sds < 0):
            raise ValueError("standard deviations must be >= 0")
        object.__setattr__(self, "sds", sds)
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        object.__setattr__(self, "corr", build_cholesky_correlation(self.angles, 2 * self.n_t))

    @property
    def matrix(self) -> np.ndarray:
        return self.sds[:, None] * self.corr * self.sds[None, :]


def between_cov_from_ancillary(sds: np.ndarray, corr: np.ndarray, k: int, l: int) -> np.ndarray:
    """2x2 between-studies covariance of contrast (k, l) from arm-level sds and correlations."""
    g = sds
    i1k, i2k, i1l, i2l = 2 * k, 2 * k + 1, 2 * l, 2 * l + 1
    t11 = g[i1k] ** 2 + g[i1l] ** 2 - 2.0 * corr[i1k, i1l] * g[i1k] * g[i1l]
    t22 = g[i2k] ** 2 + g[i2l] ** 2 - 2.0 * corr[i2k, i2l] * g[i2k] * g[i2l]
    t12 = (
        g[i1k] * g[i2k] * corr[i1k, i2k]
        - g[i1k] * g[i2l] * corr[i1k, i2l]
        - g[i1l] * g[i2k] * corr[i1l, i2k]
        + g[i1l] * g[i2l] * corr[i1l, i2l]
    )
    return np.array([[t11, t12], [t12, t22]])


def gamma_to_between_cov(gamma: AncillaryGamma, contrast: tuple[int, int]) -> np.ndarray:
    """Between-studies covariance of treatment contrast ``(k, l)`` (0-based indices)."""
    k, l = contrast
    if k == l or not (0 <= k < gamma.n_t and 0 <= l < gamma.n_t):
        raise ValueError(f"invalid contrast {contrast} for {gamma.n_t} treatments")
    return between_cov_from_ancillary(gamma.sds, gamma.corr, k, l)


def cov_to_tau_rho(cov: np.ndarray) -> tuple[float, float, float]:
    t1 = math.sqrt(max(cov[0, 0], 0.0))
    t2 = math.sqrt(max(cov[1, 1], 0.0))
    rho = cov[0, 1] / (t1 * t2) if t1 > 0 and t2 > 0 else float("nan")
    return t1, t2, rho


@dataclass
class ConsistencyReport:
    violations: list[dict]
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def second_order_consistency_check(
    covs: Mapping[tuple, np.ndarray], tol: float = 0.0
) -> ConsistencyReport:
    """Check the triangle inequalities on heterogeneity SDs for every treatment triple.

    ``covs`` maps unordered treatment pairs (any hashable labels; either order)
    to 2x2 between-studies covariance matrices. Triples with a missing pair
    raise ``KeyError``. Only the inequalities are verified; whether some PSD
    ancillary matrix reproduces the covariance identity is not checked.
    """
    taus: dict[frozenset, np.ndarray] = {}
    for pair, cov in covs.items():
        a, b = pair
        c = np.asarray(cov, dtype=float)
        taus[frozenset((a, b))] = np.sqrt(np.clip(np.diag(c), 0.0, None))
    labels = sorted({x for p in taus for x in p}, key=str)
    violations = []
    checked = 0
    for trio in itertools.combinations(labels, 3):
        pairs = [frozenset(p) for p in itertools.combinations(trio, 2)]
        have = [p in taus for p in pairs]
        if not any(have):
            continue
        if not all(have):
            missing = [tuple(sorted(p, key=str)) for p, h in zip(pairs, have) if not h]
            raise KeyError(f"missing contrast(s) {missing} in triple {trio}")
        for b, k, l in itertools.permutations(trio):
            t_bk = taus[frozenset((b, k))]
            t_bl = taus[frozenset((b, l))]
            t_kl = taus[frozenset((k, l))]
            for j in range(2):
                checked += 1
                lower = abs(t_bl[j] - t_bk[j])
                upper = t_bl[j] + t_bk[j]
                if not (lower <= t_kl[j] + tol and t_kl[j] <= upper + tol):
                    violations.append(
                        {"triple": (b, k, l), "outcome": j + 1, "tau_kl": float(t_kl[j]),
                         "lower": float(lower), "upper": float(upper)}
                    )
    return ConsistencyReport(violations, checked)
