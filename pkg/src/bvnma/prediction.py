"""Held-out prediction of final-outcome effects, cross-validation and surrogacy summaries."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data_model import Dataset, StudyRecord, contrast_label
from .models import ModelSpec, SurrogateModel
from .sampler import McmcSettings, PosteriorDraws, effective_sample_size, run_mcmc, summarize_array

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


class UnpredictableContrastError(ValueError):
    """The held-out study's contrast carries no information on the surrogate relationship."""


@dataclass(frozen=True)
class PredictionResult:
    study_id: str
    contrast: str
    mean: float
    sd: float
    lower: float
    upper: float
    y2: float
    se2: float
    ess: float = float("nan")

    @property
    def obs_lower(self) -> float:
        return self.y2 - Z95 * self.se2

    @property
    def obs_upper(self) -> float:
        return self.y2 + Z95 * self.se2

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def obs_width(self) -> float:
        return self.obs_upper - self.obs_lower

    @property
    def mcse_mean(self) -> float:
        return self.sd / math.sqrt(self.ess)

    @property
    def mcse_sd(self) -> float:
        return self.sd / math.sqrt(2.0 * self.ess)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(obs_lower=self.obs_lower, obs_upper=self.obs_upper)
        return d


@dataclass(frozen=True)
class ComparisonStats:
    n: int
    p_overlap: float
    mean_abs_diff: float
    width_ratio: float
    pi_score: float
    pct_reduction: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def check_predictable(dataset: Dataset, heldout: StudyRecord, variant: str) -> None:
    """Raise if ``heldout`` cannot be predicted under ``variant``.

    Contrast-specific models (1a-1d) need at least one other study on the same
    contrast reporting both outcomes.
    """
    if not variant.startswith("nma_1"):
        return
    others = [s for s in dataset.studies
              if s.contrast == heldout.contrast and s.study_id != heldout.study_id
              and s.has_final]
    if not others:
        raise UnpredictableContrastError(
            f"contrast {contrast_label(heldout.contrast)} has no other study with both outcomes; "
            f"study {heldout.study_id} cannot be predicted under {variant}"
        )


def predict_heldout(fit: PosteriorDraws, dataset_minus_i: Dataset, heldout: StudyRecord,
                    seed: int | np.random.SeedSequence = 0) -> PredictionResult:
    """Predict the held-out final-outcome estimate from a fit without it.

    ``fit`` must come from a model of ``dataset_minus_i``, in which the study's
    final outcome is missing. Per draw the prediction is the study's latent
    final-outcome effect plus within-study noise with the recorded ``se2``.
    """
    if heldout.se2 is None or heldout.y2 is None:
        raise ValueError(f"study {heldout.study_id} has no recorded y2/se2 to compare against")
    model = fit.model
    if isinstance(model, SurrogateModel):
        check_predictable(dataset_minus_i, heldout, model.spec.variant)
    rec = dataset_minus_i.study(heldout.study_id)
    if rec.has_final:
        raise ValueError(f"study {heldout.study_id} still has a final outcome in the fitted data")
    mu2 = fit.chains(f"mu2[{heldout.study_id}]")
    sign = 1.0 if (rec.treat_base, rec.treat_exp) == (heldout.treat_base,
                                                      heldout.treat_exp) else -1.0
    rng = np.random.default_rng(seed)
    yhat = sign * mu2 + heldout.se2 * rng.standard_normal(mu2.shape)
    flat = yhat.reshape(-1)
    lo, hi = np.quantile(flat, [0.025, 0.975])
    return PredictionResult(
        study_id=heldout.study_id, contrast=contrast_label(heldout.contrast),
        mean=float(flat.mean()), sd=float(flat.std(ddof=1)), lower=float(lo), upper=float(hi),
        y2=float(heldout.y2), se2=float(heldout.se2), ess=effective_sample_size(yhat),
    )


def _overlap(a_lo, a_hi, b_lo, b_hi) -> float:
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def comparison_stats(predictions: Sequence[PredictionResult],
                     baseline_widths: Mapping[str, float] | None = None) -> ComparisonStats:
    """Aggregate agreement between predicted intervals and observed 95% CIs.

    ``baseline_widths`` maps study ids to another model's predicted interval
    widths; studies absent from it are dropped from the %-reduction average.
    """
    preds = list(predictions)
    if not preds:
        raise ValueError("no predictions to compare")
    ov, diff, ratio = [], [], []
    for p in preds:
        w_obs = p.obs_width
        if not w_obs > 0:
            raise ValueError(f"zero-width observed CI for study {p.study_id}")
        ov.append(_overlap(p.obs_lower, p.obs_upper, p.lower, p.upper) / w_obs)
        diff.append(abs(p.y2 - p.mean))
        ratio.append(p.width / w_obs)
    p_overlap = float(np.mean(ov))
    width_ratio = float(np.mean(ratio))
    pct = None
    if baseline_widths is not None:
        paired = [p for p in preds if p.study_id in baseline_widths]
        dropped = sorted(p.study_id for p in preds if p.study_id not in baseline_widths)
        if dropped:
            log.info("studies without a baseline prediction dropped from %%red: %s", dropped)
        if paired:
            pct = float(np.mean([100.0 * (baseline_widths[p.study_id] - p.width)
                                 / baseline_widths[p.study_id] for p in paired]))
    return ComparisonStats(
        n=len(preds), p_overlap=p_overlap, mean_abs_diff=float(np.mean(diff)),
        width_ratio=width_ratio, pi_score=p_overlap / width_ratio, pct_reduction=pct,
    )


@dataclass
class CrossValidationResult:
    variant: str
    predictions: list[PredictionResult]
    skipped: dict[str, str]
    overall: ComparisonStats
    per_contrast: dict[str, ComparisonStats]

    def widths(self) -> dict[str, float]:
        return {p.study_id: p.width for p in self.predictions}

    def with_baseline(self, baseline: "CrossValidationResult | Mapping[str, float]"):
        widths = baseline.widths() if isinstance(baseline, CrossValidationResult) else baseline
        return CrossValidationResult(
            self.variant, self.predictions, self.skipped,
            comparison_stats(self.predictions, widths),
            _per_contrast(self.predictions, widths),
        )


def _per_contrast(preds, widths=None) -> dict[str, ComparisonStats]:
    labels = sorted({p.contrast for p in preds})
    return {c: comparison_stats([p for p in preds if p.contrast == c], widths) for c in labels}


def _cv_one(args):
    dataset, spec, settings, pos = args
    held = dataset.studies[pos]
    reduced = dataset.with_final_missing(held.study_id)
    fit = run_mcmc(SurrogateModel(reduced, spec), settings)
    noise_seed = np.random.SeedSequence([settings.seed, pos])
    return predict_heldout(fit, reduced, held, noise_seed)


def cross_validate(dataset: Dataset, spec: ModelSpec | str, settings: McmcSettings,
                   baseline: CrossValidationResult | Mapping[str, float] | None = None,
                   n_jobs: int = 1) -> CrossValidationResult:
    """Take-one-out cross-validation over every study reporting the final outcome.

    Each eligible study gets its own refit with the final outcome removed.
    Results do not depend on ``n_jobs``.
    """
    spec = ModelSpec(spec) if isinstance(spec, str) else spec
    jobs, skipped = [], {}
    for pos, s in enumerate(dataset.studies):
        if not s.has_final:
            continue
        try:
            check_predictable(dataset, s, spec.variant)
        except UnpredictableContrastError as e:
            log.info("skipping %s: %s", s.study_id, e)
            skipped[s.study_id] = str(e)
            continue
        jobs.append((dataset, spec, settings, pos))
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            preds = list(ex.map(_cv_one, jobs))
    else:
        preds = [_cv_one(j) for j in jobs]
    if not preds:
        raise ValueError("no study could be predicted")
    res = CrossValidationResult(spec.variant, preds, skipped, comparison_stats(preds),
                                _per_contrast(preds))
    return res.with_baseline(baseline) if baseline is not None else res


# --- surrogacy -----------------------------------------------------------

@dataclass
class SurrogacyRow:
    scope: str
    rho: object
    tau1: object
    tau2: object
    lambda1: object
    psi2: object
    lambda1_excluded: int
    strong: bool


@dataclass
class SurrogacyReport:
    rows: list[SurrogacyRow]
    across_treatment: dict = field(default_factory=dict)
    threshold: float = 0.7

    def row(self, scope: str) -> SurrogacyRow:
        for r in self.rows:
            if r.scope == scope:
                return r
        raise KeyError(scope)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "quantity", "mean", "median", "q2.5", "q97.5", "flag"])
        for r in self.rows:
            for name in ("rho", "tau1", "tau2", "lambda1", "psi2"):
                q = getattr(r, name)
                flag = ("strong" if r.strong else "not_strong") if name == "rho" else ""
                w.writerow([r.scope, name, q.mean, q.median, q.q025, q.q975, flag])
        for name, (q, strong) in self.across_treatment.items():
            flag = ("strong" if strong else "not_strong") if name == "rho_t" else ""
            w.writerow(["across_treatment", name, q.mean, q.median, q.q025, q.q975, flag])
        return buf.getvalue()


def surrogacy_parameters(tau1, tau2, rho):
    """Per-draw slope ``lambda1 = rho tau2 / tau1`` and residual variance ``psi2``.

    ``psi2`` is computed as ``tau2^2 (1 - rho^2)``; draws with ``tau1 == 0``
    give ``nan`` for ``lambda1``.
    """
    tau1, tau2, rho = (np.asarray(x, dtype=float) for x in (tau1, tau2, rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(tau1 > 0, rho * tau2 / tau1, np.nan)
    psi2 = tau2 * tau2 * (1.0 - rho * rho)
    return lam, psi2


def _is_strong(rho_draws, threshold) -> bool:
    return bool(np.quantile(np.abs(rho_draws), 0.025) >= threshold)


def surrogacy_report(fit: PosteriorDraws, threshold: float = 0.7) -> SurrogacyReport:
    """Per-contrast correlation, slope and residual variance with strength flags.

    A contrast is flagged strong when the lower 2.5% quantile of ``|rho|`` is at
    least ``threshold``.
    """
    model = fit.model
    if not isinstance(model, SurrogateModel):
        raise TypeError("surrogacy_report needs a fit of a SurrogateModel")
    params = model.contrast_parameter_draws(fit.draws)
    if model.spec.covariance == "common":
        params = {"common" if model.spec.variant != "brma" else "all": next(iter(params.values()))}
    rows = []
    shape = fit.draws.shape[:2]
    for scope, (t1, t2, r) in params.items():
        lam, psi2 = surrogacy_parameters(t1, t2, r)
        excluded = int(np.sum(~np.isfinite(lam)))
        rows.append(SurrogacyRow(
            scope=scope,
            rho=summarize_array(r.reshape(shape)),
            tau1=summarize_array(t1.reshape(shape)),
            tau2=summarize_array(t2.reshape(shape)),
            lambda1=summarize_array(lam.reshape(shape)),
            psi2=summarize_array(psi2.reshape(shape)),
            lambda1_excluded=excluded,
            strong=_is_strong(r, threshold),
        ))
    across = {}
    if model.spec.exchangeable_treatments:
        for name in ("rho_t", "omega1", "omega2"):
            x = fit.chains(name)
            across[name] = (summarize_array(x), _is_strong(x, threshold) if name == "rho_t"
                            else False)
    return SurrogacyReport(rows, across, threshold)


# --- tables --------------------------------------------------------------

def predictions_csv(preds: Sequence[PredictionResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["study_id", "contrast", "mean", "sd", "lower", "upper", "y2", "se2",
            "obs_lower", "obs_upper", "ess"]
    w.writerow(cols)
    for p in preds:
        d = p.as_dict()
        w.writerow([d[c] for c in cols])
    return buf.getvalue()


def stats_csv(results: Sequence[CrossValidationResult]) -> str:
    """Model x statistic table with an overall block and one block per contrast."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scope", "model", "n", "p_overlap", "mean_abs_diff", "width_ratio", "pi",
                "pct_red"])
    scopes = ["overall"] + sorted({c for r in results for c in r.per_contrast})
    for scope in scopes:
        for r in results:
            st = r.overall if scope == "overall" else r.per_contrast.get(scope)
            if st is None:
                continue
            w.writerow([scope, r.variant, st.n, st.p_overlap, st.mean_abs_diff, st.width_ratio,
                        st.pi_score, "" if st.pct_reduction is None else st.pct_reduction])
    return buf.getvalue()


def forest_csv(preds: Sequence[PredictionResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["study_id", "contrast", "obs_mean", "obs_lower", "obs_upper",
                "pred_mean", "pred_lower", "pred_upper"])
    for p in preds:
        w.writerow([p.study_id, p.contrast, p.y2, p.obs_lower, p.obs_upper,
                    p.mean, p.lower, p.upper])
    return buf.getvalue()
