from tessera import AnalyticGaussianPredictor, AnalyticTarget, Flat


def flat_predictor(sched, sigma0=0.5, **means):
    target = AnalyticTarget({k: Flat(v) for k, v in means.items()}, sigma0=sigma0)
    return AnalyticGaussianPredictor(target, sched)
