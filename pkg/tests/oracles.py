"""Independent reference computations.

Nothing here imports the package's numerical code.  The mixture integral is
evaluated by a plain midpoint rule in ``w = 1/log log(1/lambda)``, where the
mixing measure becomes Lebesgue measure on ``(0, 1]``; roots come from
bracketing plus plain bisection.
"""

import math

import numpy as np

NODES = 10**6


def erf_constant():
    # stdlib erf, not the package's series
    return 4.0 * math.sqrt(2.0 / math.pi) / math.erf(math.sqrt(2.0))


def _nodes(nodes):
    w = (np.arange(nodes) + 0.5) / nodes
    with np.errstate(over="ignore"):
        lam = np.exp(-np.exp(1.0 / w))
    return lam


_LAM = {}


def psi_riemann(u, v, nodes=NODES):
    lam = _LAM.get(nodes)
    if lam is None:
        lam = _LAM[nodes] = _nodes(nodes)
    expo = lam * u - 0.5 * lam * lam * v
    top = expo.max()
    return math.exp(top) * float(np.exp(expo - top).mean())


def beta_bisect(v, c, nodes=NODES, rel=1e-10):
    f = lambda u: psi_riemann(u, v, nodes) - c  # noqa: E731
    if f(0.0) < 0:
        lo, hi = 0.0, 1.0
        while f(hi) < 0:
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = -1.0, 0.0
        while f(lo) > 0:
            lo, hi = 2.0 * lo, lo
    while hi - lo > rel * max(abs(lo), abs(hi), 1.0):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def baseline(n, delta):
    return math.sqrt(2.0 * n * math.log(erf_constant() * math.sqrt(n) / delta))


def c0_oracle(delta, grid, level):
    """Grid supremum of the expansion remainder, from oracle radii."""
    off = math.log(level / (2.0 * math.sqrt(math.pi)))
    rem = [beta_bisect(v, level) ** 2 / (2 * v) - math.log(math.log(v)) - 2.5 * math.log(math.log(math.log(v))) - off
           for v in grid]
    return max(rem), off + max(rem)


def c2_oracle(delta, grid, level):
    return max(0.0, max(beta_bisect(v, level) ** 2 / (v * math.log(math.log(v))) - 2.0 for v in grid))


def enumerate_pair_mean(alphas, chi, i, j, kind="position-based"):
    """E[C_i - C_j | C_i != C_j] for a single block holding every item, by brute force."""
    import itertools

    L = len(alphas)
    num = den = 0.0
    perms = list(itertools.permutations(range(L)))
    for order in perms:
        for pattern in itertools.product((0, 1), repeat=L):
            p = 1.0
            stopped = False
            for k, item in enumerate(order):
                c = pattern[item]
                if kind == "cascade":
                    q = 0.0 if stopped or k >= len(chi) else alphas[item]
                    stopped = stopped or c == 1
                else:
                    q = alphas[item] * (chi[k] if k < len(chi) else 0.0)
                p *= q if c else 1.0 - q
            if pattern[i] != pattern[j]:
                num += p * (pattern[i] - pattern[j])
                den += p
    return num / den
