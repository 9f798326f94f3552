"""Adaptive Metropolis-within-Gibbs sampling, convergence diagnostics and DIC."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .layout import ParameterLayout, forward_scalar, log_jacobian_scalar

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """Numerical failure during sampling."""


class Target:
    """Log-density interface consumed by :func:`run_mcmc`.

    Subclasses with per-study latent variables expose them through
    ``latent_blocks``: index arrays whose ``t``-th entries only enter the
    ``t``-th element of :meth:`latent_terms`. Such entries are conditionally
    independent, so one scalar Metropolis step per entry can be carried out
    for a whole block at once. All remaining parameters are updated one at a
    time against :meth:`hyper_log_density`, which only needs the summary
    returned by :meth:`latent_stats`.

    The decomposition must satisfy ``log_density(theta) ==
    log_likelihood(theta) + hyper_log_density(theta, latent_stats(theta))``.
    """

    layout: ParameterLayout
    latent_blocks: tuple = ()

    def initial_values(self) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def log_likelihood(self, theta: np.ndarray) -> float:
        return 0.0

    def prepare_latent(self, theta):
        return None

    def latent_terms(self, theta, ctx) -> np.ndarray:
        raise NotImplementedError

    def latent_stats(self, theta):
        return None

    def hyper_log_density(self, theta, stats) -> float:
        return self.log_density(theta)


class FunctionTarget(Target):
    """Wrap a plain log-density callable (no latent structure)."""

    def __init__(self, logpdf, layout: ParameterLayout, initial):
        self._logpdf = logpdf
        self.layout = layout
        self._init = np.asarray(initial, dtype=float)

    def initial_values(self):
        return self._init.copy()

    def log_density(self, theta):
        return float(self._logpdf(theta))


@dataclass(frozen=True)
class McmcSettings:
    n_chains: int = 4
    n_warmup: int = 10000
    n_samples: int = 20000
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50
    target_accept: float = 0.44
    initial_scale: float = 0.1
    init_jitter: float = 0.1
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("n_chains", "n_warmup", "n_samples", "thin", "adapt_window", "n_jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def n_keep(self) -> int:
        return self.n_samples // self.thin


@dataclass
class PosteriorDraws:
    names: tuple[str, ...]
    draws: np.ndarray  # (chains, draws, params)
    log_posterior: np.ndarray  # (chains, draws)
    deviance: np.ndarray  # (chains, draws)
    acceptance: np.ndarray  # (chains, params), post-warmup
    scales: np.ndarray  # (chains, params), frozen proposal scales
    scales_at_start: np.ndarray  # (chains, params), scales when sampling began
    settings: McmcSettings
    model: Target | None = field(default=None, repr=False)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def chains(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.chains(name).reshape(-1)

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[2])

    def to_csv(self) -> str:
        import io

        buf = io.StringIO()
        header = ["chain", "iteration", "log_posterior", "deviance", *self.names]
        buf.write(",".join(header) + "\n")
        for c in range(self.n_chains):
            for t in range(self.n_draws):
                row = [str(c), str(t), repr(float(self.log_posterior[c, t])),
                       repr(float(self.deviance[c, t]))]
                row += [repr(float(v)) for v in self.draws[c, t]]
                buf.write(",".join(row) + "\n")
        return buf.getvalue()


def _run_chain(model: Target, settings: McmcSettings, theta0: np.ndarray,
               frozen: np.ndarray, seed_seq, chain: int):
    rng = np.random.default_rng(seed_seq)
    layout = model.layout
    codes = layout.codes
    p = layout.size

    z = layout.to_unconstrained(theta0)
    if chain > 0 and settings.init_jitter > 0:
        jitter = settings.init_jitter * rng.standard_normal(p)
        z = np.where(frozen, z, z + jitter)
    theta = layout.from_unconstrained(z)
    theta[frozen] = theta0[frozen]

    latent_blocks = [np.asarray(b, dtype=int) for b in model.latent_blocks]
    latent_blocks = [b[~frozen[b]] for b in latent_blocks]
    latent_blocks = [b for b in latent_blocks if b.size]
    in_latent = np.zeros(p, dtype=bool)
    for b in model.latent_blocks:
        in_latent[np.asarray(b, dtype=int)] = True
    hyper_idx = [int(i) for i in np.flatnonzero(~in_latent & ~frozen)]
    hyper_codes = [int(codes[i]) for i in hyper_idx]
    block_real = [bool(np.all(codes[b] == 0)) for b in latent_blocks]

    if has_latent := bool(model.latent_blocks):
        stats = model.latent_stats(theta)
    else:
        stats = None
    lp = model.log_density(theta)
    if not math.isfinite(lp):
        raise SamplerError(f"non-finite log-posterior at initial values (chain {chain})")

    log_scales = np.full(p, math.log(settings.initial_scale))
    acc_window = np.zeros(p)
    acc_total = np.zeros(p)
    n_batches = 0
    n_keep = settings.n_keep
    out = np.empty((n_keep, p))
    out_lp = np.empty(n_keep)
    out_dev = np.empty(n_keep)
    scales_at_start = None
    total = settings.n_warmup + settings.n_samples
    kept = 0
    target = settings.target_accept

    for it in range(total):
        warm = it < settings.n_warmup
        scales = np.exp(log_scales)

        if has_latent:
            ctx = model.prepare_latent(theta)
            cur_terms = model.latent_terms(theta, ctx)
            for b, real in zip(latent_blocks, block_real):
                zb = z[b]
                prop = zb + scales[b] * rng.standard_normal(b.size)
                proposal = theta.copy()
                if real:
                    proposal[b] = prop
                    jac = 0.0
                else:
                    proposal[b] = ParameterLayout.forward(prop, codes[b])
                    jac = (ParameterLayout.log_jacobian(prop, codes[b])
                           - ParameterLayout.log_jacobian(zb, codes[b]))
                new_terms = model.latent_terms(proposal, ctx)
                ratio = new_terms - cur_terms + jac
                if np.any(np.isnan(ratio)):
                    raise SamplerError(f"NaN log-density at iteration {it} (chain {chain})")
                accept = np.log(rng.random(b.size)) < ratio
                if accept.any():
                    idx = b[accept]
                    z[idx] = prop[accept]
                    theta[idx] = proposal[idx]
                    cur_terms = np.where(accept, new_terms, cur_terms)
                acc_window[b] += accept
                if not warm:
                    acc_total[b] += accept
            stats = model.latent_stats(theta)

        if hyper_idx:
            cur = model.hyper_log_density(theta, stats)
            eps = rng.standard_normal(len(hyper_idx)).tolist()
            logu = np.log(rng.random(len(hyper_idx))).tolist()
            sc = scales[hyper_idx].tolist()
            for k, i in enumerate(hyper_idx):
                code = hyper_codes[k]
                zi = z[i]
                zp = zi + sc[k] * eps[k]
                old = theta[i]
                theta[i] = forward_scalar(zp, code)
                new = model.hyper_log_density(theta, stats)
                if new != new:
                    raise SamplerError(f"NaN log-density at iteration {it} (chain {chain}, "
                                       f"parameter {layout.names[i]})")
                ratio = new - cur
                if code:
                    ratio += log_jacobian_scalar(zp, code) - log_jacobian_scalar(zi, code)
                if logu[k] < ratio:
                    z[i] = zp
                    cur = new
                    acc_window[i] += 1
                    if not warm:
                        acc_total[i] += 1
                else:
                    theta[i] = old

        if warm:
            if (it + 1) % settings.adapt_window == 0:
                n_batches += 1
                rate = acc_window / settings.adapt_window
                step = (rate - target) / math.sqrt(n_batches)
                log_scales = np.where(frozen, log_scales, log_scales + step)
                acc_window[:] = 0
        else:
            if scales_at_start is None:
                scales_at_start = np.exp(log_scales)
            t = it - settings.n_warmup
            if (t + 1) % settings.thin == 0 and kept < n_keep:
                ll = model.log_likelihood(theta)
                if has_latent:
                    lp = ll + model.hyper_log_density(theta, stats)
                else:
                    lp = model.log_density(theta)
                if lp != lp:
                    raise SamplerError(f"NaN log-density at iteration {it} (chain {chain})")
                out[kept] = theta
                out_lp[kept] = lp
                out_dev[kept] = -2.0 * ll
                kept += 1

    return (out, out_lp, out_dev, acc_total / settings.n_samples,
            np.exp(log_scales), scales_at_start)


def run_mcmc(model: Target, settings: McmcSettings, init=None, frozen=None) -> PosteriorDraws:
    """Sample ``model`` with one-at-a-time adaptive random-walk Metropolis.

    Proposal scales adapt during warmup (Robbins-Monro on the log scale,
    per-parameter, toward ``target_accept``) and are frozen afterwards.
    ``frozen`` names or indexes parameters held at their initial values.
    Chains use independent streams spawned from ``settings.seed``, so output
    is identical whatever ``n_jobs`` is.
    """
    layout = model.layout
    theta0 = model.initial_values() if init is None else np.asarray(init, dtype=float).copy()
    if theta0.shape != (layout.size,):
        raise ValueError(f"initial values must have shape ({layout.size},)")
    mask = np.zeros(layout.size, dtype=bool)
    for f in frozen or ():
        mask[layout.index(f) if isinstance(f, str) else int(f)] = True
    if not math.isfinite(model.log_density(theta0)):
        raise SamplerError("non-finite log-posterior at initial values")

    seeds = np.random.SeedSequence(settings.seed).spawn(settings.n_chains)
    args = [(model, settings, theta0, mask, seeds[c], c) for c in range(settings.n_chains)]
    if settings.n_jobs > 1 and settings.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(settings.n_jobs, settings.n_chains)) as ex:
            results = list(ex.map(_run_chain_star, args))
    else:
        results = [_run_chain(*a) for a in args]
    draws, lps, devs, acc, scales, start = (np.stack(x) for x in zip(*results))
    return PosteriorDraws(
        names=layout.names, draws=draws, log_posterior=lps, deviance=devs,
        acceptance=acc, scales=scales, scales_at_start=start, settings=settings, model=model,
    )


def _run_chain_star(args):
    return _run_chain(*args)


# --- diagnostics -----------------------------------------------------------

def split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction factor for ``x`` of shape (chains, draws).

    Returns nan when the within-chain variance is zero.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected (chains, draws)")
    n = x.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([x[:, :n], x[:, -n:]], axis=0)
    w = halves.var(axis=1, ddof=1).mean()
    if not w > 0:
        return float("nan")
    b = n * halves.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), n=size, axis=-1)[..., :n]
    return ac / n


def effective_sample_size(x: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    if not w > 0:
        return float("nan")
    var_plus = (n - 1) / n * w
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first non-positive pair, then made monotone
    tau = -1.0
    prev = math.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += 2.0 * pair
    tau = max(tau, 1.0 / math.log10(m * n)) if m * n > 1 else 1.0
    return float(min(m * n / tau, m * n * math.log10(m * n)))


@dataclass
class QuantitySummary:
    mean: float
    median: float
    sd: float
    q025: float
    q975: float
    rhat: float
    ess: float
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "sd": self.sd,
                "q2.5": self.q025, "q97.5": self.q975, "rhat": self.rhat,
                "ess": self.ess, "flags": list(self.flags)}


@dataclass
class DicResult:
    dic: float
    pd: float
    dbar: float
    dhat: float


@dataclass
class PosteriorSummary:
    quantities: dict[str, QuantitySummary]
    dic: DicResult | None = None

    def __getitem__(self, name: str) -> QuantitySummary:
        return self.quantities[name]

    def __contains__(self, name: str) -> bool:
        return name in self.quantities

    def as_dict(self) -> dict:
        out = {"parameters": {k: v.as_dict() for k, v in self.quantities.items()}}
        if self.dic is not None:
            out.update(dic=self.dic.dic, pd=self.dic.pd, dbar=self.dic.dbar)
        return out


def summarize_array(x: np.ndarray) -> QuantitySummary:
    """Summaries of one quantity given as (chains, draws)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    flat = x.reshape(-1)
    flags = []
    ok = flat[np.isfinite(flat)]
    if ok.size < flat.size:
        flags.append(f"excluded_nonfinite={flat.size - ok.size}")
    if ok.size == 0:
        nan = float("nan")
        return QuantitySummary(nan, nan, nan, nan, nan, nan, 0.0, tuple(flags + ["no_draws"]))
    q025, med, q975 = np.quantile(ok, [0.025, 0.5, 0.975])
    sd = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
    if ok.size < flat.size:
        rhat, ess = float("nan"), float(ok.size)
    elif sd == 0.0 or np.ptp(flat) == 0.0:
        sd = 0.0
        rhat, ess = float("nan"), float(flat.size)
        flags.append("rhat_undefined")
    else:
        rhat = split_rhat(x) if x.shape[0] >= 2 else float("nan")
        if x.shape[0] < 2:
            flags.append("rhat_undefined")
        ess = effective_sample_size(x)
        if math.isnan(rhat) and "rhat_undefined" not in flags:
            flags.append("rhat_undefined")
    if ess < 10:
        flags.append("low_ess")
    return QuantitySummary(float(ok.mean()), float(med), sd, float(q025), float(q975),
                           rhat, float(ess), tuple(flags))


def dic(draws: PosteriorDraws, model: Target | None = None) -> DicResult:
    """DIC with the deviance focused on the within-study likelihood given latent effects."""
    model = model or draws.model
    dbar = float(draws.deviance.mean())
    theta_bar = draws.flat().mean(axis=0)
    dhat = -2.0 * model.log_likelihood(theta_bar)
    pd = dbar - dhat
    if pd < 0:
        warnings.warn(f"negative effective number of parameters pD={pd:.3g}", RuntimeWarning)
    return DicResult(dic=dbar + pd, pd=pd, dbar=dbar, dhat=dhat)


def summarize(draws: PosteriorDraws, quantities: dict | None = None,
              with_dic: bool = True) -> PosteriorSummary:
    """Summarize parameters and derived quantities.

    ``quantities`` maps names to arrays of shape (chains, draws); by default
    the model's reported quantities are used (or all raw parameters).
    """
    if quantities is None:
        model = draws.model
        if model is not None and hasattr(model, "reported_quantities"):
            quantities = model.reported_quantities(draws.draws)
        else:
            quantities = {n: draws.chains(n) for n in draws.names}
    out = {name: summarize_array(v) for name, v in quantities.items()}
    d = dic(draws) if (with_dic and draws.model is not None) else None
    return PosteriorSummary(out, d)
