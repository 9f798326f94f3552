"""Log-posteriors of BRMA and the bivariate network meta-analysis variants.

Every variant shares one hierarchy: per-study true effects ``mu_i`` around a
group mean with a 2x2 between-studies covariance, and a bivariate normal
within-study likelihood with known covariance. Variants differ in

* the mean structure: a single pooled mean (``brma``) or contrast means
  derived from basic parameters through first-order consistency;
* the covariance structure: one common matrix (``brma``, ``1d``, ``2d``),
  a free matrix per contrast (``1a``, ``2a``), or matrices induced by an
  ancillary arm-level covariance (``1b``, ``1c``, ``2b``, ``2c``);
* the prior on basic parameters: independent normals (``1x``) or the
  exchangeable arm-effect model (``2x``).

For the ``2x`` variants the unidentifiable arm effects are integrated out
analytically: arm effects ``theta_k ~ N(eta, Omega / 2)`` iid imply
``cov(d_1k, d_1l) = Omega`` if ``k == l`` and ``Omega / 2`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data_model import Dataset, DataValidationError, contrast_label
from .layout import ANGLE, CORR, POSITIVE, REAL, Block, ParameterLayout
from .priors import (
    CorrelationPrior,
    ExchangeableVariancePrior,
    UniformSdPrior,
    angle_pairs,
    between_cov_from_ancillary,
    cholesky_factor,
)
from .sampler import Target

VARIANTS = ("brma", "nma_1a", "nma_1b", "nma_1c", "nma_1d",
            "nma_2a", "nma_2b", "nma_2c", "nma_2d")

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "brma"
    mean_prior_sd: float | None = None
    sd_prior: UniformSdPrior = field(default_factory=UniformSdPrior)
    correlation_prior: CorrelationPrior = field(default_factory=CorrelationPrior)
    omega_prior: UniformSdPrior = field(default_factory=UniformSdPrior)
    variance_prior: ExchangeableVariancePrior = field(default_factory=ExchangeableVariancePrior)
    # 2x variants: "arm" keeps the cross-covariance Omega/2 between basic
    # parameters implied by exchangeable arm effects; "independent" treats
    # each basic-parameter pair as an independent N2(0, Omega) draw.
    basic_prior: str = "arm"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown model variant {self.variant!r}; choose from {VARIANTS}")
        if self.basic_prior not in ("arm", "independent"):
            raise ValueError("basic_prior must be 'arm' or 'independent'")
        if self.mean_prior_sd is not None and not self.mean_prior_sd > 0:
            raise ValueError("mean_prior_sd must be > 0")

    @property
    def prior_sd(self) -> float:
        if self.mean_prior_sd is not None:
            return self.mean_prior_sd
        return math.sqrt(1e4) if self.variant == "brma" else math.sqrt(1e3)

    @property
    def covariance(self) -> str:
        v = self.variant
        if v in ("brma", "nma_1d", "nma_2d"):
            return "common"
        if v in ("nma_1a", "nma_2a"):
            return "contrast"
        return "ancillary"

    @property
    def exchangeable_variances(self) -> bool:
        return self.variant in ("nma_1c", "nma_2c")

    @property
    def exchangeable_treatments(self) -> bool:
        return self.variant.startswith("nma_2")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mean_prior_sd"] = self.prior_sd
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        data = dict(data)
        kw = {}
        for key, typ in (("sd_prior", UniformSdPrior), ("correlation_prior", CorrelationPrior),
                         ("omega_prior", UniformSdPrior),
                         ("variance_prior", ExchangeableVariancePrior)):
            if key in data:
                val = data.pop(key)
                kw[key] = val if isinstance(val, typ) else typ(**val)
        unknown = set(data) - {"variant", "mean_prior_sd", "basic_prior"}
        if unknown:
            raise ValueError(f"unknown model spec field(s): {sorted(unknown)}")
        return cls(**data, **kw)

    def with_overrides(self, overrides: dict) -> "ModelSpec":
        merged = self.to_dict()
        if self.mean_prior_sd is None and "mean_prior_sd" not in overrides:
            merged["mean_prior_sd"] = None
        for k, v in overrides.items():
            if isinstance(v, dict) and isinstance(merged.get(k), dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        return ModelSpec.from_dict(merged)


def _bvn_logpdf_terms(u1, u2, q11, q12, q22, logdet):
    return -LOG_2PI - 0.5 * logdet - 0.5 * (q11 * u1 * u1 + 2.0 * q12 * u1 * u2 + q22 * u2 * u2)


def log_likelihood(dataset: Dataset, mu: np.ndarray) -> float:
    """Within-study log-likelihood of all studies given true effects ``mu`` (n x 2).

    Studies without a final-outcome estimate contribute the marginal density
    of the surrogate estimate only.
    """
    w = WithinStudy(dataset)
    return float(np.sum(w.terms(np.asarray(mu, dtype=float))))


class WithinStudy:
    """Precomputed within-study precisions for the bivariate likelihood."""

    def __init__(self, dataset: Dataset):
        st = dataset.studies
        self.y1 = np.array([s.y1 for s in st])
        self.se1 = np.array([s.se1 for s in st])
        self.has2 = np.array([s.has_final for s in st])
        self.y2 = np.array([s.y2 if s.has_final else 0.0 for s in st])
        self.se2 = np.array([s.se2 if s.has_final else 1.0 for s in st])
        self.rho_w = np.array([s.rho_w for s in st])
        v11 = self.se1 ** 2
        v22 = self.se2 ** 2
        v12 = self.se1 * self.se2 * self.rho_w
        det = v11 * v22 - v12 ** 2
        bad = self.has2 & ~(det > 0)
        if bad.any():
            ids = [st[i].study_id for i in np.flatnonzero(bad)]
            raise DataValidationError(f"singular within-study covariance (|rho_w| = 1) in {ids}")
        det = np.where(self.has2, det, 1.0)
        self.p11 = np.where(self.has2, v22 / det, 1.0 / v11)
        self.p12 = np.where(self.has2, -v12 / det, 0.0)
        self.p22 = np.where(self.has2, v11 / det, 0.0)
        self.const = np.where(
            self.has2, -LOG_2PI - 0.5 * np.log(det), -0.5 * LOG_2PI - np.log(self.se1)
        )

    def terms(self, mu: np.ndarray) -> np.ndarray:
        return self.terms_split(mu[:, 0], mu[:, 1])

    def terms_split(self, mu1, mu2) -> np.ndarray:
        r1 = self.y1 - mu1
        r2 = np.where(self.has2, self.y2 - mu2, 0.0)
        return self.const - 0.5 * (self.p11 * r1 * r1 + 2.0 * self.p12 * r1 * r2
                                   + self.p22 * r2 * r2)


class SurrogateModel(Target):
    """Hierarchical bivariate model for one dataset and one :class:`ModelSpec`."""

    def __init__(self, dataset: Dataset, spec: ModelSpec | str = "brma"):
        if isinstance(spec, str):
            spec = ModelSpec(spec)
        self.dataset = dataset
        self.spec = spec
        self.within = WithinStudy(dataset)
        net = dataset.network
        self.n = len(dataset.studies)
        self.n_t = net.n_treatments
        self.treatments = net.treatments
        studies = dataset.studies

        if spec.variant == "brma":
            self.groups = ["all"]
            self.group_of = np.zeros(self.n, dtype=int)
            self.sign = np.ones(self.n)
            self.group_pairs = None
        else:
            self.groups = list(net.contrasts)
            gi = {c: i for i, c in enumerate(self.groups)}
            self.group_of = np.array([gi[s.contrast] for s in studies], dtype=int)
            self.sign = np.array([float(s.orientation) for s in studies])
            self.group_pairs = np.array(
                [(net.index(a), net.index(b)) for a, b in self.groups], dtype=int
            )
        self.G = len(self.groups)
        self.onehot = np.zeros((self.G, self.n))
        self.onehot[self.group_of, np.arange(self.n)] = 1.0
        self.group_n = self.onehot.sum(axis=1)
        self.layout = self._build_layout()
        L = self.layout
        self.mu1_idx = np.arange(L.slices["mu1"].start, L.slices["mu1"].stop)
        self.mu2_idx = np.arange(L.slices["mu2"].start, L.slices["mu2"].stop)
        self.latent_blocks = (self.mu1_idx, self.mu2_idx)
        self.n_hyper = L.slices["mu1"].start
        mean_blocks = {"beta", "d1", "d2", "omega", "rho_t"}
        self._mean_idx = np.array(
            [i for b in L.blocks if b.name in mean_blocks for i in range(L.slices[b.name].start,
                                                                        L.slices[b.name].stop)],
            dtype=int)
        self._cov_idx = np.array(
            [i for i in range(self.n_hyper) if i not in set(self._mean_idx.tolist())], dtype=int)
        self._mean_cache: dict = {}
        self._cov_cache: dict = {}
        if spec.exchangeable_treatments:
            m = self.n_t - 1
            if spec.basic_prior == "arm":
                # C = (I + J) / 2 has inverse 2 (I - J / (m + 1))
                self._cinv = 2.0 * (np.eye(m) - np.ones((m, m)) / (m + 1.0))
                self._logdet_c = math.log(m + 1.0) - m * math.log(2.0)
            else:
                self._cinv = np.eye(m)
                self._logdet_c = 0.0
        if spec.covariance == "ancillary":
            dim = 2 * self.n_t
            # rows (group, outcome) of contrast_out - contrast_in at arm level
            E = np.zeros((2 * self.G, dim))
            for g, (k, l) in enumerate(self.group_pairs):
                for j in range(2):
                    E[2 * g + j, 2 * l + j] = 1.0
                    E[2 * g + j, 2 * k + j] = -1.0
            self._contrast_map = E
            self._even = np.arange(0, 2 * self.G, 2)

    # --- layout -----------------------------------------------------------
    def _build_layout(self) -> ParameterLayout:
        s = self.spec
        sd_hi = s.sd_prior.hi
        blocks = []
        others = self.treatments[1:]
        if s.variant == "brma":
            blocks.append(Block("beta", ("beta1", "beta2"), REAL))
        else:
            blocks.append(Block("d1", tuple(f"d1[{t}]" for t in others), REAL))
            blocks.append(Block("d2", tuple(f"d2[{t}]" for t in others), REAL))
        cov = s.covariance
        if cov == "common":
            blocks += [Block("tau1", ("tau1",), POSITIVE, sd_hi),
                       Block("tau2", ("tau2",), POSITIVE, sd_hi),
                       Block("rho", ("rho",), CORR)]
        elif cov == "contrast":
            labs = [contrast_label(c) for c in self.groups]
            blocks += [Block("tau1", tuple(f"tau1[{c}]" for c in labs), POSITIVE, sd_hi),
                       Block("tau2", tuple(f"tau2[{c}]" for c in labs), POSITIVE, sd_hi),
                       Block("rho", tuple(f"rho[{c}]" for c in labs), CORR)]
        else:
            names = tuple(f"gamma{j + 1}[{t}]" for t in self.treatments for j in range(2))
            upper = None if s.exchangeable_variances else sd_hi
            blocks.append(Block("gamma", names, POSITIVE, upper))
            dim = 2 * self.n_t
            blocks.append(Block("angle", tuple(f"angle[{i},{j}]" for i, j in angle_pairs(dim)),
                                ANGLE))
            if s.exchangeable_variances:
                blocks.append(Block("v", ("v1", "v2"), POSITIVE))
        if s.exchangeable_treatments:
            blocks += [Block("omega", ("omega1", "omega2"), POSITIVE, s.omega_prior.hi),
                       Block("rho_t", ("rho_t",), CORR)]
        ids = [st.study_id for st in self.dataset.studies]
        blocks += [Block("mu1", tuple(f"mu1[{i}]" for i in ids), REAL),
                   Block("mu2", tuple(f"mu2[{i}]" for i in ids), REAL)]
        return ParameterLayout(blocks)

    # --- structural pieces ------------------------------------------------
    def basic_parameters(self, theta) -> np.ndarray:
        """(n_t, 2) treatment effects relative to the reference (first row zero)."""
        L = self.layout
        D = np.zeros((self.n_t, 2))
        D[1:, 0] = theta[L.slices["d1"]]
        D[1:, 1] = theta[L.slices["d2"]]
        return D

    def group_means(self, theta) -> np.ndarray:
        """(G, 2) means of canonically oriented true effects for each group."""
        if self.spec.variant == "brma":
            return np.asarray(theta[self.layout.slices["beta"]], dtype=float)[None, :]
        D = self.basic_parameters(theta)
        return D[self.group_pairs[:, 1]] - D[self.group_pairs[:, 0]]

    def contrast_mean(self, theta, base: str, exp: str) -> np.ndarray:
        """Mean effect of ``exp`` versus ``base`` on both outcomes (first-order consistency)."""
        D = self.basic_parameters(theta)
        return D[self.treatments.index(exp)] - D[self.treatments.index(base)]

    def ancillary(self, theta):
        L = self.layout
        g = np.asarray(theta[L.slices["gamma"]], dtype=float)
        ang = np.asarray(theta[L.slices["angle"]], dtype=float)
        if np.any(ang <= 0) or np.any(ang >= math.pi):
            return g, None
        Lc = cholesky_factor(ang, 2 * self.n_t)
        return g, Lc.T @ Lc

    def group_covariances(self, theta):
        """Entries (t11, t12, t22) of each group's covariance, arrays of length G.

        Returns None when a covariance parameter is out of bounds.
        """
        L = self.layout
        cov = self.spec.covariance
        if cov == "ancillary":
            g, R = self.ancillary(theta)
            if R is None or g.min() <= 0:
                return None
            E = self._contrast_map
            T = E @ (np.outer(g, g) * R) @ E.T
            i = self._even
            return T[i, i], T[i, i + 1], T[i + 1, i + 1]
        tau1 = theta[L.slices["tau1"]]
        tau2 = theta[L.slices["tau2"]]
        rho = theta[L.slices["rho"]]
        if np.any(tau1 <= 0) or np.any(tau2 <= 0) or np.any(np.abs(rho) >= 1):
            return None
        t11 = tau1 * tau1
        t22 = tau2 * tau2
        t12 = tau1 * tau2 * rho
        if cov == "common":
            ones = np.ones(self.G)
            return t11 * ones, t12 * ones, t22 * ones
        return t11, t12, t22

    def between_covariances(self, theta, all_pairs: bool = False) -> dict:
        """Between-studies covariance per contrast (labels), as 2x2 arrays.

        ``all_pairs`` adds unobserved treatment pairs for ancillary models.
        """
        if all_pairs and self.spec.covariance == "ancillary":
            g, R = self.ancillary(theta)
            out = {}
            for a in range(self.n_t):
                for b in range(a + 1, self.n_t):
                    key = (self.treatments[a], self.treatments[b])
                    out[key] = between_cov_from_ancillary(g, R, a, b)
            return out
        cov = self.group_covariances(theta)
        if cov is None:
            raise ValueError("covariance parameters out of bounds")
        t11, t12, t22 = cov
        keys = self.groups if self.spec.variant != "brma" else ["all"]
        return {k: np.array([[t11[i], t12[i]], [t12[i], t22[i]]]) for i, k in enumerate(keys)}

    # --- Target interface -------------------------------------------------
    def initial_values(self) -> np.ndarray:
        L = self.layout
        w = self.within
        theta = np.zeros(L.size)
        theta[self.mu1_idx] = w.y1
        theta[self.mu2_idx] = np.where(w.has2, w.y2, 0.0)
        if self.spec.variant == "brma":
            theta[L.slices["beta"]] = [w.y1.mean(), w.y2[w.has2].mean()]
        else:
            X = np.zeros((self.n, self.n_t - 1))
            for i, s in enumerate(self.dataset.studies):
                kb = self.treatments.index(s.treat_base)
                ke = self.treatments.index(s.treat_exp)
                if ke > 0:
                    X[i, ke - 1] += 1.0
                if kb > 0:
                    X[i, kb - 1] -= 1.0
            d1 = np.linalg.lstsq(X, w.y1, rcond=None)[0]
            d2 = np.linalg.lstsq(X[w.has2], w.y2[w.has2], rcond=None)[0]
            theta[L.slices["d1"]] = d1
            theta[L.slices["d2"]] = d2
        for name in ("tau1", "tau2", "gamma"):
            if L.has_block(name):
                theta[L.slices[name]] = 0.1
        if L.has_block("angle"):
            theta[L.slices["angle"]] = math.pi / 2.0
        if L.has_block("v"):
            theta[L.slices["v"]] = 1.0
        if L.has_block("omega"):
            D = self.basic_parameters(theta)[1:]
            rms = np.sqrt(np.mean(D ** 2, axis=0))
            hi = self.spec.omega_prior.hi
            theta[L.slices["omega"]] = np.clip(rms, 0.1, 0.9 * hi)
        return theta

    def oriented_mu(self, theta):
        mu1 = theta[self.mu1_idx] * self.sign
        mu2 = theta[self.mu2_idx] * self.sign
        return mu1, mu2

    def latent_stats(self, theta):
        m1, m2 = self.oriented_mu(theta)
        A = self.onehot
        return (A @ m1, A @ m2, A @ (m1 * m1), A @ (m1 * m2), A @ (m2 * m2))

    # Hyperparameter updates change one block at a time, so the mean part
    # and the covariance part are cached on the raw parameter values.
    def _mean_part(self, theta):
        key = theta[self._mean_idx].tobytes()
        hit = self._mean_cache.get(key)
        if hit is None:
            if len(self._mean_cache) > 16:
                self._mean_cache.clear()
            lp = self.log_prior_mean(theta)
            M = self.group_means(theta) if lp > -math.inf else None
            hit = (lp, M)
            self._mean_cache[key] = hit
        return hit

    def _cov_part(self, theta):
        key = theta[self._cov_idx].tobytes()
        hit = self._cov_cache.get(key)
        if hit is None:
            if len(self._cov_cache) > 16:
                self._cov_cache.clear()
            hit = (-math.inf, None)
            lp = self.log_prior_cov(theta)
            if lp > -math.inf:
                cov = self.group_covariances(theta)
                if cov is not None:
                    t11, t12, t22 = cov
                    det = t11 * t22 - t12 * t12
                    if np.all(det > 0) and np.all(np.isfinite(det)):
                        logdet_term = float(np.sum(-self.group_n * (LOG_2PI + 0.5 * np.log(det))))
                        hit = (lp, (t11 / det, t12 / det, t22 / det, logdet_term))
            self._cov_cache[key] = hit
        return hit

    def _between(self, M, C, stats) -> float:
        q11, q12, q22, logdet_term = C
        a1, a2 = M[:, 0], M[:, 1]
        s1, s2, ss11, ss12, ss22 = stats
        n = self.group_n
        S11 = ss11 - 2.0 * a1 * s1 + n * a1 * a1
        S22 = ss22 - 2.0 * a2 * s2 + n * a2 * a2
        S12 = ss12 - a1 * s2 - a2 * s1 + n * a1 * a2
        # q entries hold (t22, t12, t11) / det in reversed roles
        quad = q22 * S11 - 2.0 * q12 * S12 + q11 * S22
        return logdet_term - 0.5 * float(np.sum(quad))

    def between_log_density(self, theta, stats) -> float:
        """log density of the (summarized) true effects given means and covariances."""
        lpc, C = self._cov_part(theta)
        if C is None:
            return -math.inf
        return self._between(self.group_means(theta), C, stats)

    def log_prior(self, theta) -> float:
        lp = self.log_prior_mean(theta)
        if lp == -math.inf:
            return lp
        return lp + self.log_prior_cov(theta)

    def log_prior_mean(self, theta) -> float:
        s = self.spec
        L = self.layout
        if s.variant == "brma":
            b = theta[L.slices["beta"]]
            sd = s.prior_sd
            return float(np.sum(-0.5 * LOG_2PI - math.log(sd) - 0.5 * (b / sd) ** 2))
        if not s.exchangeable_treatments:
            d = np.concatenate([theta[L.slices["d1"]], theta[L.slices["d2"]]])
            sd = s.prior_sd
            return float(np.sum(-0.5 * LOG_2PI - math.log(sd) - 0.5 * (d / sd) ** 2))
        om1, om2 = theta[L.slices["omega"]]
        rt = theta[L.slices["rho_t"]][0]
        lp = (s.omega_prior.log_density(om1) + s.omega_prior.log_density(om2)
              + s.correlation_prior.log_density(rt))
        if lp == -math.inf:
            return lp
        D = self.basic_parameters(theta)[1:]
        m = self.n_t - 1
        o11, o22, o12 = om1 * om1, om2 * om2, om1 * om2 * rt
        odet = o11 * o22 - o12 * o12
        if not odet > 0:
            return -math.inf
        # tr(Omega^-1 D^T C^-1 D)
        K = D.T @ self._cinv @ D
        quad = (o22 * K[0, 0] - 2.0 * o12 * K[0, 1] + o11 * K[1, 1]) / odet
        return lp - m * LOG_2PI - 0.5 * (m * math.log(odet) + 2.0 * self._logdet_c) - 0.5 * quad

    def log_prior_cov(self, theta) -> float:
        s = self.spec
        L = self.layout
        lp = 0.0
        if s.covariance in ("common", "contrast"):
            sdp = s.sd_prior
            for name in ("tau1", "tau2"):
                for t in theta[L.slices[name]].tolist():
                    lp += sdp.log_density(t)
            for r in theta[L.slices["rho"]].tolist():
                lp += s.correlation_prior.log_density(r)
            return lp
        g = theta[L.slices["gamma"]]
        ang = theta[L.slices["angle"]]
        if ang.min() <= 0.0 or ang.max() >= math.pi:
            return -math.inf
        lp = -ang.size * math.log(math.pi)
        if s.exchangeable_variances:
            v1, v2 = theta[L.slices["v"]].tolist()
            vp = s.variance_prior
            lp += vp.hyper_log_density(v1) + vp.hyper_log_density(v2)
            if lp == -math.inf:
                return lp
            return lp + vp.log_density_sd(g[0::2], v1) + vp.log_density_sd(g[1::2], v2)
        sdp = s.sd_prior
        if g.min() <= sdp.lo or g.max() >= sdp.hi:
            return -math.inf
        return lp - g.size * math.log(sdp.hi - sdp.lo)

    def hyper_log_density(self, theta, stats) -> float:
        lpm, M = self._mean_part(theta)
        if M is None:
            return -math.inf
        lpc, C = self._cov_part(theta)
        if C is None:
            return -math.inf
        return lpm + lpc + self._between(M, C, stats)

    def prepare_latent(self, theta):
        cov = self.group_covariances(theta)
        t11, t12, t22 = (c[self.group_of] for c in cov)
        det = t11 * t22 - t12 * t12
        M = self.group_means(theta)[self.group_of]
        return (M[:, 0] * self.sign, M[:, 1] * self.sign,
                t22 / det, -t12 / det, t11 / det, np.log(det))

    def latent_terms(self, theta, ctx) -> np.ndarray:
        m1, m2, q11, q12, q22, logdet = ctx
        mu1 = theta[self.mu1_idx]
        mu2 = theta[self.mu2_idx]
        between = _bvn_logpdf_terms(mu1 - m1, mu2 - m2, q11, q12, q22, logdet)
        return self.within.terms_split(mu1, mu2) + between

    def log_likelihood(self, theta) -> float:
        return float(np.sum(self.within.terms_split(theta[self.mu1_idx], theta[self.mu2_idx])))

    def log_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if not np.all(self.layout.in_bounds(theta)):
            return -math.inf
        lp = self.hyper_log_density(theta, self.latent_stats(theta))
        if lp == -math.inf:
            return lp
        return lp + self.log_likelihood(theta)

    # --- reporting --------------------------------------------------------
    def reported_quantities(self, draws: np.ndarray) -> dict:
        """Named (chains, draws) arrays for the headline parameters.

        Per-contrast heterogeneity SDs and correlations are included for all
        variants; for ancillary models they are derived per draw.
        """
        L = self.layout
        draws = np.asarray(draws)
        shape = draws.shape[:-1]
        flat = draws.reshape(-1, L.size)
        out: dict[str, np.ndarray] = {}

        def col(name):
            return flat[:, L.index(name)].reshape(shape)

        if self.spec.variant == "brma":
            for n in ("beta1", "beta2", "tau1", "tau2", "rho"):
                out[n] = col(n)
            return out
        for blk in ("d1", "d2"):
            for n in L.blocks[[b.name for b in L.blocks].index(blk)].names:
                out[n] = col(n)
        # contrast means for observed contrasts
        D1 = np.zeros((flat.shape[0], self.n_t))
        D2 = np.zeros((flat.shape[0], self.n_t))
        D1[:, 1:] = flat[:, L.slices["d1"]]
        D2[:, 1:] = flat[:, L.slices["d2"]]
        for (a, b), (ia, ib) in zip(self.groups, self.group_pairs):
            lab = contrast_label((a, b))
            out[f"d1[{lab}]"] = (D1[:, ib] - D1[:, ia]).reshape(shape)
            out[f"d2[{lab}]"] = (D2[:, ib] - D2[:, ia]).reshape(shape)
        cov = self.spec.covariance
        if cov == "common":
            for n in ("tau1", "tau2", "rho"):
                out[n] = col(n)
        elif cov == "contrast":
            for c in self.groups:
                lab = contrast_label(c)
                for n in ("tau1", "tau2", "rho"):
                    out[f"{n}[{lab}]"] = col(f"{n}[{lab}]")
        else:
            t1, t2, r = self.derived_contrast_parameters(flat)
            for i, c in enumerate(self.groups):
                lab = contrast_label(c)
                out[f"tau1[{lab}]"] = t1[:, i].reshape(shape)
                out[f"tau2[{lab}]"] = t2[:, i].reshape(shape)
                out[f"rho[{lab}]"] = r[:, i].reshape(shape)
            if self.spec.exchangeable_variances:
                out["v1"] = col("v1")
                out["v2"] = col("v2")
        if self.spec.exchangeable_treatments:
            for n in ("omega1", "omega2", "rho_t"):
                out[n] = col(n)
        return out

    def derived_contrast_parameters(self, flat: np.ndarray):
        """Per-draw (tau1, tau2, rho) for every observed contrast, each (draws, G)."""
        t1 = np.empty((flat.shape[0], self.G))
        t2 = np.empty_like(t1)
        r = np.empty_like(t1)
        for k, theta in enumerate(flat):
            c11, c12, c22 = self.group_covariances(theta)
            t1[k] = np.sqrt(np.clip(c11, 0, None))
            t2[k] = np.sqrt(np.clip(c22, 0, None))
            with np.errstate(invalid="ignore", divide="ignore"):
                r[k] = c12 / (t1[k] * t2[k])
        return t1, t2, r

    def contrast_parameter_draws(self, draws: np.ndarray) -> dict:
        """Per-contrast (tau1, tau2, rho) draws keyed by contrast label ('all' for BRMA)."""
        L = self.layout
        flat = np.asarray(draws).reshape(-1, L.size)
        cov = self.spec.covariance
        if cov == "ancillary":
            t1, t2, r = self.derived_contrast_parameters(flat)
            return {contrast_label(c): (t1[:, i], t2[:, i], r[:, i])
                    for i, c in enumerate(self.groups)}
        if cov == "common":
            trip = (flat[:, L.index("tau1")], flat[:, L.index("tau2")], flat[:, L.index("rho")])
            if self.spec.variant == "brma":
                return {"all": trip}
            return {contrast_label(c): trip for c in self.groups}
        return {contrast_label(c): tuple(flat[:, L.index(f"{n}[{contrast_label(c)}]")]
                                         for n in ("tau1", "tau2", "rho"))
                for c in self.groups}


def build_model(dataset: Dataset, spec: ModelSpec | str) -> SurrogateModel:
    return SurrogateModel(dataset, spec)


def log_posterior(dataset: Dataset, params: np.ndarray, spec: ModelSpec | str) -> float:
    """Log-posterior of any variant at a flat parameter vector."""
    return SurrogateModel(dataset, spec).log_density(params)


def log_posterior_brma(dataset, params, spec: ModelSpec | None = None) -> float:
    return log_posterior(dataset, params, spec or ModelSpec("brma"))


def _variant_fn(variant):
    def fn(dataset, params, spec: ModelSpec | None = None):
        spec = replace(spec, variant=variant) if spec is not None else ModelSpec(variant)
        return log_posterior(dataset, params, spec)

    fn.__name__ = f"log_posterior_{variant}"
    fn.__doc__ = f"Log-posterior of the ``{variant}`` variant."
    return fn


log_posterior_nma_1a = _variant_fn("nma_1a")
log_posterior_nma_1b = _variant_fn("nma_1b")
log_posterior_nma_1c = _variant_fn("nma_1c")
log_posterior_nma_1d = _variant_fn("nma_1d")


def log_posterior_nma_2x(dataset, params, base_variant: str, spec: ModelSpec | None = None):
    """Log-posterior of the exchangeable-treatments variant built on ``1<base_variant>``."""
    if base_variant not in ("a", "b", "c", "d"):
        raise ValueError("base_variant must be one of a, b, c, d")
    return _variant_fn(f"nma_2{base_variant}")(dataset, params, spec)
