"""Independent reference computations used by the tests.

None of these share code with the package: they use a generic LP solver,
brute-force enumeration, explicit loops or high-precision scalars.
"""
import itertools
import math

import mpmath
import numpy as np
from scipy.optimize import linprog


def w1_lp(xs, a, ys, b):
    """W1 with L1 ground cost as a dense LP solved by HiGHS."""
    xs, ys = np.atleast_2d(xs), np.atleast_2d(ys)
    n, m = len(a), len(b)
    cost = np.array([[float(np.abs(x - y).sum()) for y in ys] for x in xs])
    A_eq = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1
        A_eq.append(row.ravel())
    for j in range(m):
        col = np.zeros((n, m))
        col[:, j] = 1
        A_eq.append(col.ravel())
    res = linprog(cost.ravel(), A_eq=np.array(A_eq), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0
    return float(res.fun)


def w1_permutations(xs, ys):
    """Equal-size uniform W1 by enumerating every permutation."""
    n = len(xs)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, sum(float(np.abs(np.asarray(xs[i]) - np.asarray(ys[p])).sum())
                             for i, p in enumerate(perm)) / n)
    return best


def softmax_attention_loop(q, K, V, score):
    """Textbook attention with explicit loops in extended precision."""
    with mpmath.workdps(40):
        s = [mpmath.mpf(score(q, k)) for k in K]
        top = max(s)
        e = [mpmath.e ** (v - top) for v in s]
        z = sum(e)
        d = len(V[0])
        return np.array([float(sum(e[i] * mpmath.mpf(float(V[i][c])) for i in range(len(V))) / z)
                         for c in range(d)])


def sigmoid(x):
    with mpmath.workdps(40):
        return float(1 / (1 + mpmath.e ** (-x)))


def logit(p):
    with mpmath.workdps(40):
        p = mpmath.mpf(p)
        return float(mpmath.log(p / (1 - p)))


def max_on_grid(f, lo, hi, n=2_000_001):
    xs = np.linspace(lo, hi, n)
    vals = f(xs)
    i = int(np.argmax(vals))
    return float(vals[i]), float(xs[i])


def kl_scalar(p, q):
    total = mpmath.mpf(0)
    with mpmath.workdps(40):
        for pi, qi in zip(p, q):
            if pi > 0:
                if qi == 0:
                    return math.inf
                total += mpmath.mpf(pi) * mpmath.log(mpmath.mpf(pi) / mpmath.mpf(qi))
    return float(total)
