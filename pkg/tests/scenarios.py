"""Small hand-built scenarios shared by the tests."""

import numpy as np

from rlrestore import restoration as R
from rlrestore.gmm import Gmm


def small_scenario(periods=3, n_mg=2, loads=2, ess=True, ramp=1.0, seed=0, **kw):
    rng = np.random.default_rng(seed)
    mgs, assets = [], []
    for i in range(n_mg):
        gen = R.GeneratorSpec(f"G{i}", 0.0, 1.0 + 0.5 * i, 2.0 + i, ramp, ramp)
        e = (R.EssSpec(f"E{i}", 1.5, 0.1, 0.95, 0.6, 0.4, 0.4, 0.95, 0.95),) if ess else ()
        ld = tuple(
            R.LoadSpec(f"L{i}{j}", float(rng.integers(1, 6)),
                       tuple(np.round(rng.uniform(0.2, 0.9, size=periods), 3)))
            for j in range(loads)
        )
        kind = "wind" if i == 0 else "solar"
        assets.append(R.RenewableSpec(f"R{i}", kind, 1.0))
        mgs.append(R.MicrogridSpec(f"MG{i}", (gen,), e, ld, (i,)))
    return R.ScenarioSpec(tuple(mgs), tuple(assets), periods, **kw)


def point_prior(sc, level=0.4, var=0.0):
    """Mixture with the same output level for every asset and period."""
    d = sc.layout.dim
    return Gmm.single(np.full(d, level), var * np.eye(d))


def noisy_prior(sc, seed=0, m=2):
    rng = np.random.default_rng(seed)
    d = sc.layout.dim
    lag = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    base = 0.02 * 0.8 ** lag
    means = rng.uniform(0.2, 0.6, size=(m, d))
    covs = np.array([base * rng.uniform(0.5, 1.5) for _ in range(m)])
    return Gmm(np.full(m, 1.0 / m), means, covs)
