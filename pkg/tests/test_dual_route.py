"""The latent-effect sampler against sampling the collapsed likelihood directly."""

import math

import numpy as np
import pytest

from bvnma.layout import ParameterLayout
from bvnma.models import SurrogateModel
from bvnma.sampler import FunctionTarget, McmcSettings, effective_sample_size, run_mcmc
from oracles import CollapsedContrastPosterior, collapsed_log_posterior_contrast

pytestmark = pytest.mark.slow


def test_contrast_model_matches_collapsed_route(scenario1):
    model = SurrogateModel(scenario1, "nma_1a")
    hyper = ParameterLayout(model.layout.blocks[:-2])  # drop the mu1, mu2 blocks
    assert hyper.size == model.n_hyper
    collapsed = CollapsedContrastPosterior(scenario1)
    init = model.initial_values()[:hyper.size]

    # the vectorised oracle agrees with the per-study scipy version
    D = np.zeros((3, 2))
    D[1:, 0], D[1:, 1] = init[0:2], init[2:4]
    taus = {c: (init[4 + i], init[7 + i], init[10 + i])
            for i, c in enumerate(scenario1.network.contrasts)}
    assert collapsed(init) == pytest.approx(collapsed_log_posterior_contrast(scenario1, D, taus),
                                            abs=1e-8)

    settings = McmcSettings(n_chains=2, n_warmup=2000, n_samples=20000, seed=3)
    a = run_mcmc(FunctionTarget(collapsed, hyper, init), settings)
    b = run_mcmc(model, settings)
    for name in hyper.names:
        xa, xb = a.chains(name), b.chains(name)
        se = math.hypot(xa.std() / math.sqrt(effective_sample_size(xa)),
                        xb.std() / math.sqrt(effective_sample_size(xb)))
        assert abs(xa.mean() - xb.mean()) < 4 * se, name
