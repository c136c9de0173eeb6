"""Shared numeric oracles for the test suite.

These stay independent of the implementation paths they check: golden
section for closed-form argmin updates, central finite differences for
analytic gradients.
"""

import numpy as np

from onlinevi.family import MeanFieldGaussian
from onlinevi.losses import expected_loss

_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Minimize a unimodal f on [lo, hi] to within tol."""
    a, b = lo, hi
    c = b - _PHI * (b - a)
    d = a + _PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fd_expected_grad(kind, q: MeanFieldGaussian, ex, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the expected loss in (m, sigma),
    stacked as [dL/dm, dL/dsigma]."""
    d = q.d
    out = np.zeros(2 * d)
    for j in range(d):
        for block in (0, 1):
            m_p, s_p = q.m.copy(), q.sigma.copy()
            m_m, s_m = q.m.copy(), q.sigma.copy()
            if block == 0:
                m_p[j] += step
                m_m[j] -= step
            else:
                s_p[j] += step
                s_m[j] -= step
            f_p = expected_loss(kind, MeanFieldGaussian(m_p, s_p), ex)
            f_m = expected_loss(kind, MeanFieldGaussian(m_m, s_m), ex)
            out[block * d + j] = (f_p - f_m) / (2.0 * step)
    return out


def rel_vec_error(analytic: np.ndarray, oracle: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(oracle)), 1e-8)
    return float(np.linalg.norm(analytic - oracle)) / denom
