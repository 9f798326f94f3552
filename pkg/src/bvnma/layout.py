"""Flat parameter vectors: named blocks, bounds and unconstrained transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

REAL, POSITIVE, CORR, ANGLE = "real", "positive", "corr", "angle"

_BOUNDS = {
    REAL: (-math.inf, math.inf),
    POSITIVE: (0.0, math.inf),
    CORR: (-1.0, 1.0),
    ANGLE: (0.0, math.pi),
}
_CODES = {REAL: 0, POSITIVE: 1, CORR: 2, ANGLE: 3}


@dataclass(frozen=True)
class Block:
    name: str
    names: tuple[str, ...]
    kind: str
    upper: float | None = None  # prior upper bound for positive parameters

    @property
    def size(self) -> int:
        return len(self.names)


class ParameterLayout:
    """Ordered, disjoint blocks covering a flat parameter vector.

    Transforms to the unconstrained scale: identity for means, log for
    standard deviations, atanh for correlations and a scaled logit for
    angles.
    """

    def __init__(self, blocks):
        self.blocks = tuple(blocks)
        self.names: tuple[str, ...] = tuple(n for b in self.blocks for n in b.names)
        if len(set(self.names)) != len(self.names):
            raise ValueError("parameter names must be unique")
        self.slices: dict[str, slice] = {}
        kinds, lo, hi = [], [], []
        pos = 0
        for b in self.blocks:
            if b.kind not in _CODES:
                raise ValueError(f"unknown parameter kind {b.kind!r}")
            self.slices[b.name] = slice(pos, pos + b.size)
            pos += b.size
            kinds += [_CODES[b.kind]] * b.size
            blo, bhi = _BOUNDS[b.kind]
            if b.upper is not None:
                bhi = b.upper
            lo += [blo] * b.size
            hi += [bhi] * b.size
        self.size = pos
        self.codes = np.array(kinds, dtype=np.int8)
        self.lower = np.array(lo)
        self.upper = np.array(hi)
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return self.size

    def index(self, name: str) -> int:
        return self._index[name]

    def block(self, theta: np.ndarray, name: str) -> np.ndarray:
        return theta[..., self.slices[name]]

    def has_block(self, name: str) -> bool:
        return name in self.slices

    def in_bounds(self, theta: np.ndarray) -> np.ndarray:
        """Open-interval bound check (positive parameters may also be 0)."""
        t = np.asarray(theta)
        pos = self.codes == _CODES[POSITIVE]
        low_ok = np.where(pos, t >= self.lower, t > self.lower)
        return low_ok & (t < self.upper) & np.isfinite(t)

    # transforms work elementwise given the kind codes of the affected entries
    @staticmethod
    def forward(z: np.ndarray, codes: np.ndarray) -> np.ndarray:
        """Unconstrained -> constrained."""
        z = np.asarray(z, dtype=float)
        out = z.copy()
        m = codes == 1
        out[m] = np.exp(z[m])
        m = codes == 2
        out[m] = np.tanh(z[m])
        m = codes == 3
        out[m] = math.pi / (1.0 + np.exp(-z[m]))
        return out

    @staticmethod
    def inverse(x: np.ndarray, codes: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x.copy()
        with np.errstate(divide="ignore"):
            m = codes == 1
            out[m] = np.log(x[m])
            m = codes == 2
            out[m] = np.arctanh(x[m])
            m = codes == 3
            p = x[m] / math.pi
            out[m] = np.log(p) - np.log1p(-p)
        return out

    @staticmethod
    def log_jacobian(z: np.ndarray, codes: np.ndarray) -> np.ndarray:
        """Elementwise log |d constrained / d unconstrained|."""
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        m = codes == 1
        out[m] = z[m]
        m = codes == 2
        a = np.abs(z[m])
        out[m] = 2.0 * (math.log(2.0) - a - np.log1p(np.exp(-2.0 * a)))
        m = codes == 3
        zz = z[m]
        # log(pi) + log sigmoid(z) + log sigmoid(-z)
        out[m] = math.log(math.pi) - np.logaddexp(0.0, -zz) - np.logaddexp(0.0, zz)
        return out

    def to_unconstrained(self, theta: np.ndarray) -> np.ndarray:
        return self.inverse(theta, self.codes)

    def from_unconstrained(self, z: np.ndarray) -> np.ndarray:
        return self.forward(z, self.codes)


def forward_scalar(z: float, code: int) -> float:
    if code == 0:
        return z
    if code == 1:
        return math.exp(z) if z < 700.0 else math.inf
    if code == 2:
        return math.tanh(z)
    if z < -700.0:
        return 0.0
    return math.pi / (1.0 + math.exp(-z))


def log_jacobian_scalar(z: float, code: int) -> float:
    if code == 0:
        return 0.0
    if code == 1:
        return z
    if code == 2:
        a = abs(z)
        return 2.0 * (math.log(2.0) - a - math.log1p(math.exp(-2.0 * a)))
    a = abs(z)
    # log(pi) + log sigmoid(z) + log sigmoid(-z)
    return math.log(math.pi) - a - 2.0 * math.log1p(math.exp(-a))
