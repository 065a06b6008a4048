import numpy as np

from slevolve import centred


def random_case_d(rng, m, a=None, A_frac=None, c=1.0):
    """Random normalized case-(d) parameters (all alphas positive, conserved
    value strictly between 0 and its maximum)."""
    if a is None:
        a = int(rng.integers(1, m))
    w0_sq = rng.uniform(0.5, 2.5, size=m)
    alphas, _ = centred.normalize_lambda(w0_sq, a)
    if A_frac is None:
        A_frac = rng.uniform(0.15, 0.85)
    A = A_frac * float(np.sqrt(np.prod(alphas)))
    return centred.CentredParams(m, a, alphas, A, c=c)
