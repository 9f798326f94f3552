"""Synthetic evidence networks drawn from the marginal bivariate normal model."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data_model import Dataset, StudyRecord


@dataclass(frozen=True)
class ContrastSpec:
    base: str
    exp: str
    d1: float
    d2: float
    tau1: float
    tau2: float
    rho: float
    n_studies: int = 10

    def __post_init__(self):
        if self.base == self.exp:
            raise ValueError("contrast needs two distinct treatments")
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError("between-studies SDs must be >= 0")
        if abs(self.rho) > 1:
            raise ValueError("|rho| must be <= 1")
        if self.n_studies < 1:
            raise ValueError("n_studies must be >= 1")

    @property
    def label(self) -> str:
        return f"{self.base}{self.exp}"


@dataclass(frozen=True)
class ScenarioSpec:
    """Contrasts plus within-study settings.

    Within-study SDs are drawn per study and outcome from
    ``Uniform(se_lo[j], se_hi[j])``.
    """

    contrasts: tuple[ContrastSpec, ...]
    se_lo: tuple[float, float] = (0.15, 0.15)
    se_hi: tuple[float, float] = (0.25, 0.25)
    rho_w: float = 0.6
    seed: int | None = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "contrasts", tuple(
            c if isinstance(c, ContrastSpec) else ContrastSpec(**c) for c in self.contrasts))
        object.__setattr__(self, "se_lo", tuple(float(x) for x in self.se_lo))
        object.__setattr__(self, "se_hi", tuple(float(x) for x in self.se_hi))
        if not self.contrasts:
            raise ValueError("scenario needs at least one contrast")
        if len(self.se_lo) != 2 or len(self.se_hi) != 2:
            raise ValueError("se_lo and se_hi need one value per outcome")
        for lo, hi in zip(self.se_lo, self.se_hi):
            if not 0 < lo <= hi:
                raise ValueError("within-study SD range must satisfy 0 < lo <= hi")
        if abs(self.rho_w) > 1:
            raise ValueError("|rho_w| must be <= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        data["contrasts"] = tuple(ContrastSpec(**c) for c in data["contrasts"])
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))

    def with_seed(self, seed: int) -> "ScenarioSpec":
        d = self.to_dict()
        d["seed"] = seed
        return ScenarioSpec.from_dict(d)


def simulate(spec: ScenarioSpec, seed: int | None = None) -> Dataset:
    """Draw one dataset; ``seed`` overrides ``spec.seed``.

    Each study's estimates are bivariate normal around the contrast means with
    covariance equal to within-study plus between-studies covariance. The
    drawn within-study SDs are recorded as the standard errors.
    """
    seed = spec.seed if seed is None else seed
    if seed is None:
        raise ValueError("a seed is required")
    rng = np.random.default_rng(seed)
    lo = np.array(spec.se_lo)
    hi = np.array(spec.se_hi)
    studies = []
    for c in spec.contrasts:
        width = len(str(c.n_studies))
        width = max(width, 2)
        for i in range(c.n_studies):
            s = rng.uniform(lo, hi)
            cov = np.array([
                [s[0] ** 2 + c.tau1 ** 2, s[0] * s[1] * spec.rho_w + c.tau1 * c.tau2 * c.rho],
                [0.0, s[1] ** 2 + c.tau2 ** 2],
            ])
            cov[1, 0] = cov[0, 1]
            y = rng.multivariate_normal([c.d1, c.d2], cov, method="eigh")
            studies.append(StudyRecord(
                study_id=f"{c.label}_{i + 1:0{width}d}", treat_base=c.base, treat_exp=c.exp,
                y1=float(y[0]), se1=float(s[0]), y2=float(y[1]), se2=float(s[1]),
                rho_w=spec.rho_w,
            ))
    return Dataset.from_studies(studies)


def _scenario1() -> ScenarioSpec:
    return ScenarioSpec(
        contrasts=(
            ContrastSpec("A", "B", 1.0, 2.0, 0.3, 0.6, 0.98),
            ContrastSpec("B", "C", 2.0, 1.0, 0.6, 0.3, 0.98),
            ContrastSpec("A", "C", 3.0, 3.0, 0.6, 0.6, 0.98),
        ),
        se_lo=(0.15, 0.15), se_hi=(0.25, 0.25), rho_w=0.6, name="scenario1",
    )


def _scenario2() -> ScenarioSpec:
    return ScenarioSpec(
        contrasts=(
            ContrastSpec("A", "B", 1.0, 1.0, 0.2, 0.3, 0.98),
            ContrastSpec("B", "C", 2.0, 2.0, 0.25, 0.25, 0.0),
            ContrastSpec("A", "C", 3.0, 3.0, 0.3, 0.2, 0.98),
        ),
        se_lo=(0.05, 0.05), se_hi=(0.15, 0.15), rho_w=0.98, name="scenario2",
    )


BUILTINS = {"scenario1": _scenario1, "scenario2": _scenario2}


def builtin_scenario(name: str, seed: int | None = None) -> ScenarioSpec:
    try:
        spec = BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(BUILTINS)}") from None
    return spec if seed is None else spec.with_seed(seed)
