"""Independent reference computations used by the tests.

Nothing here calls into the code under test except to evaluate the function
being checked; the references themselves are finite differences, closed-form
geometry or brute force.
"""

import math

import numpy as np
import torch


def _switch_pattern(m, s, g):
    # which side of every elementwise max/min the encodings fall on, plus the angle wrap branch
    with torch.no_grad():
        side = (m.encode(m._t(s)) >= m.encode(m._t(g))).numpy()
    d = np.asarray(g, float) - np.asarray(s, float)
    per = m.periodic.numpy()
    wrap = np.floor((d[per] + math.pi) / (2 * math.pi))
    return np.concatenate([side.ravel(), wrap.ravel()])


def fd_gradient_check(m, S, G, h=1e-4, floor=1e-8):
    """Central-difference check of ``dT/ds`` and ``dT/dg`` at each pair.

    ``T`` is only piecewise smooth: it has kinks where an encoder channel of ``s``
    and ``g`` tie (the symmetric max/min). A stencil straddling such a kink gives a
    difference quotient that matches neither one-sided derivative, so for those
    components ``h`` is shrunk by 10x until the stencil stays on one branch.

    Returns ``(worst_rel_error, n_components, n_shrunk)``.
    """
    _, gs, gg, _, _ = m.evaluate(S, G)
    worst, n, shrunk = 0.0, 0, 0
    d = S.shape[1]
    for i in range(len(S)):
        base = _switch_pattern(m, S[i], G[i])
        for which, grad in ((0, gs[i]), (1, gg[i])):
            for k in range(d):
                step = h
                while True:
                    e = np.zeros(d)
                    e[k] = step
                    if which == 0:
                        a, b = (S[i] + e, G[i]), (S[i] - e, G[i])
                    else:
                        a, b = (S[i], G[i] + e), (S[i], G[i] - e)
                    same = (np.array_equal(_switch_pattern(m, *a), base)
                            and np.array_equal(_switch_pattern(m, *b), base))
                    if same or step < 1e-9:
                        break
                    step /= 10
                shrunk += step < h
                fd = (float(m.times(*a)) - float(m.times(*b))) / (2 * step)
                worst = max(worst, abs(fd - grad[k]) / max(abs(fd), floor))
                n += 1
    return worst, n, shrunk


def speed_loss_by_hand(gt_i, pred_i, gt_k, pred_k):
    """Square-root ratio speed loss written out term by term."""
    total = 0.0
    for a, b, c, dd in zip(gt_i, pred_i, gt_k, pred_k):
        total += abs(1 - math.sqrt(a / b)) + abs(1 - math.sqrt(b / a))
        total += abs(1 - math.sqrt(c / dd)) + abs(1 - math.sqrt(dd / c))
    return total / len(gt_i)


def spearman(a, b):
    """Rank correlation via Pearson correlation of average ranks."""
    def rank(x):
        x = np.asarray(x, float)
        order = np.argsort(x, kind="mergesort")
        r = np.empty(len(x))
        r[order] = np.arange(len(x), dtype=float)
        for v in np.unique(x):
            idx = x == v
            r[idx] = r[idx].mean()
        return r
    ra, rb = rank(a), rank(b)
    ra -= ra.mean()
    rb -= rb.mean()
    return float((ra * rb).sum() / math.sqrt((ra * ra).sum() * (rb * rb).sum()))
