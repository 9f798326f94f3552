"""Independent reference computations used by the test-suite.

These deliberately avoid the package's own density code: they evaluate
densities through scipy.stats and build matrices explicitly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats


def within_cov(se1, se2, rho_w):
    return np.array([[se1 ** 2, se1 * se2 * rho_w], [se1 * se2 * rho_w, se2 ** 2]])


def cov2(t1, t2, r):
    return np.array([[t1 * t1, t1 * t2 * r], [t1 * t2 * r, t2 * t2]])


def brute_loglik(dataset, mu):
    """Within-study log-likelihood via scipy, one study at a time."""
    total = 0.0
    for s, m in zip(dataset.studies, mu):
        if s.has_final:
            total += stats.multivariate_normal(m, within_cov(s.se1, s.se2, s.rho_w)).logpdf(
                [s.y1, s.y2])
        else:
            total += stats.norm(m[0], s.se1).logpdf(s.y1)
    return total


def beta_corr_logpdf(r, a=1.5, b=1.5):
    return stats.beta(a, b).logpdf((r + 1) / 2) - math.log(2)


def collapsed_log_posterior_contrast(dataset, d, taus, prior_sd=math.sqrt(1000.0), sd_hi=2.0):
    """Posterior of model-1a hyperparameters with study effects integrated out.

    ``d`` is (n_t, 2) with a zero reference row; ``taus`` maps canonical
    contrast keys to (tau1, tau2, rho).
    """
    net = dataset.network
    lp = 0.0
    for key, (t1, t2, r) in taus.items():
        if not (0 < t1 < sd_hi and 0 < t2 < sd_hi and -1 < r < 1):
            return -math.inf
        lp += 2 * math.log(1 / sd_hi) + beta_corr_logpdf(r)
    lp += stats.norm(0, prior_sd).logpdf(np.asarray(d)[1:]).sum()
    for s in dataset.studies:
        kb, ke = net.index(s.treat_base), net.index(s.treat_exp)
        m = np.asarray(d[ke]) - np.asarray(d[kb])
        T = cov2(*taus[s.contrast])
        if s.has_final:
            V = within_cov(s.se1, s.se2, s.rho_w) + T
            lp += stats.multivariate_normal(m, V).logpdf([s.y1, s.y2])
        else:
            lp += stats.norm(m[0], math.sqrt(s.se1 ** 2 + T[0, 0])).logpdf(s.y1)
    return lp


def gls_fixed_effect(studies):
    """Precision-weighted (GLS) common mean and its covariance for bivariate estimates."""
    P = np.zeros((2, 2))
    b = np.zeros(2)
    for s in studies:
        W = np.linalg.inv(within_cov(s.se1, s.se2, s.rho_w))
        P += W
        b += W @ np.array([s.y1, s.y2])
    cov = np.linalg.inv(P)
    return cov @ b, cov


def conditional_prediction(m, T, y1, se1):
    """Mean and variance of mu2 given Y1 = y1 under mu ~ N2(m, T), Y1 | mu1 ~ N(mu1, se1^2).

    Within-study correlation between the outcomes does not enter because the
    final-outcome estimate is unobserved.
    """
    k = T[0, 1] / (T[0, 0] + se1 ** 2)
    return m[1] + k * (y1 - m[0]), T[1, 1] - T[0, 1] ** 2 / (T[0, 0] + se1 ** 2)


def random_corr(rng, dim):
    """Random correlation matrix from a random factor (PSD by construction)."""
    A = rng.standard_normal((dim, dim + 2))
    S = A @ A.T
    d = np.sqrt(np.diag(S))
    return S / np.outer(d, d)


_LOG_BETA_15 = math.log(math.pi / 8)  # B(1.5, 1.5) = pi / 8


class CollapsedContrastPosterior:
    """Vectorized form of :func:`collapsed_log_posterior_contrast` for sampling.

    Parameters are laid out as (d1[2..], d2[2..], tau1[c], tau2[c], rho[c]) with
    contrasts in network order.
    """

    def __init__(self, dataset, prior_sd=math.sqrt(1000.0), sd_hi=2.0):
        net = dataset.network
        st = dataset.studies
        self.n_t = net.n_treatments
        self.contrasts = list(net.contrasts)
        self.G = len(self.contrasts)
        self.kb = np.array([net.index(s.treat_base) for s in st])
        self.ke = np.array([net.index(s.treat_exp) for s in st])
        self.g = np.array([self.contrasts.index(s.contrast) for s in st])
        self.y1 = np.array([s.y1 for s in st])
        self.has2 = np.array([s.has_final for s in st])
        self.y2 = np.array([s.y2 if s.has_final else 0.0 for s in st])
        se1 = np.array([s.se1 for s in st])
        se2 = np.array([s.se2 if s.has_final else 0.0 for s in st])
        rw = np.array([s.rho_w for s in st])
        self.s11, self.s22, self.s12 = se1 ** 2, se2 ** 2, se1 * se2 * rw
        self.prior_sd, self.sd_hi = prior_sd, sd_hi

    def __call__(self, th):
        m = self.n_t - 1
        G = self.G
        t1, t2, r = th[2 * m:2 * m + G], th[2 * m + G:2 * m + 2 * G], th[2 * m + 2 * G:]
        if np.any(t1 <= 0) or np.any(t2 <= 0) or np.any(t1 >= self.sd_hi) or \
                np.any(t2 >= self.sd_hi) or np.any(np.abs(r) >= 1):
            return -math.inf
        D = np.zeros((self.n_t, 2))
        D[1:, 0] = th[:m]
        D[1:, 1] = th[m:2 * m]
        mean = D[self.ke] - D[self.kb]
        a = self.s11 + t1[self.g] ** 2
        c = self.s22 + t2[self.g] ** 2
        b = self.s12 + (t1 * t2 * r)[self.g]
        det = a * c - b * b
        e1 = self.y1 - mean[:, 0]
        e2 = self.y2 - mean[:, 1]
        biv = -math.log(2 * math.pi) - 0.5 * np.log(det) - 0.5 * (c * e1 * e1 - 2 * b * e1 * e2
                                                                   + a * e2 * e2) / det
        uni = -0.5 * np.log(2 * math.pi * a) - 0.5 * e1 * e1 / a
        lp = np.sum(np.where(self.has2, biv, uni))
        lp += G * 2 * math.log(1 / self.sd_hi)
        x = (r + 1) / 2
        lp += np.sum(0.5 * np.log(x) + 0.5 * np.log1p(-x) - _LOG_BETA_15 - math.log(2))
        lp += np.sum(-0.5 * math.log(2 * math.pi) - math.log(self.prior_sd)
                     - 0.5 * (th[:2 * m] / self.prior_sd) ** 2)
        return float(lp)


def joint_log_posterior(dataset, D, covs, mu, *, mean_prior=None, cov_prior=0.0):
    """Full joint density with explicit per-study scipy evaluations.

    ``D`` is (n_t, 2) with zero reference row, ``covs`` maps canonical contrast
    keys to 2x2 covariance matrices, ``mu`` is (n, 2) in each study's own
    orientation. ``mean_prior`` is a callable on ``D[1:]`` (defaults to
    independent N(0, 1000)); ``cov_prior`` is added as is.
    """
    net = dataset.network
    lp = brute_loglik(dataset, mu)
    for s, m in zip(dataset.studies, mu):
        kb, ke = net.index(s.treat_base), net.index(s.treat_exp)
        mean = D[ke] - D[kb]
        lp += stats.multivariate_normal(mean, covs[s.contrast]).logpdf(m)
    if mean_prior is None:
        lp += stats.norm(0, math.sqrt(1000)).logpdf(D[1:]).sum()
    else:
        lp += mean_prior(D[1:])
    return lp + cov_prior


def exchangeable_basic_prior(omega1, omega2, rho_t):
    """Prior on basic parameters implied by iid arm effects N(eta, Omega / 2)."""
    Om = cov2(omega1, omega2, rho_t)

    def f(Db):
        m = Db.shape[0]
        C = 0.5 * (np.eye(m) + np.ones((m, m)))
        # vec by rows: (d1_2, d2_2, d1_3, d2_3, ...)
        return stats.multivariate_normal(np.zeros(2 * m), np.kron(C, Om)).logpdf(Db.reshape(-1))

    return f
