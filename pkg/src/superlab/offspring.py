"""Heavy-tailed critical offspring law for the branching particle engine.

The law is defined through the probability generating function

    g(s) = s + (1 - s)^(1+beta) / (1 + beta),    beta in (0, 1),

which gives p_0 = 1/(1+beta), p_1 = 0, p_2 = beta/2 and the recursion
p_{k+1} = p_k * (k - 1 - beta) / (k + 1) for k >= 2.  The law is critical
(mean one) and its tail decays like k^(-2-beta).  Closed forms for the tail
sum and the truncated first moment are used for exact tail sampling and for
the truncated-process mass-decay rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution with explicit head table and analytic tail."""

    beta: float
    probs: np.ndarray          # p_0 .. p_M
    cumulative: np.ndarray     # cumsum of probs; 1 - cumulative[M] = tail_sum(M)
    tail_cutoff: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "tail_cutoff", len(self.probs) - 1)

    def branch_rate(self, mass_scale: int) -> float:
        """Per-particle branching rate rho_N = (1+beta) * N^beta."""
        return (1.0 + self.beta) * float(mass_scale) ** self.beta

    def pk(self, k: int) -> float:
        return pk(self.beta, k)

    def tail_sum(self, n: int) -> float:
        return tail_sum(self.beta, n)

    def tail_first_moment(self, n: int) -> float:
        return tail_first_moment(self.beta, n)

    def clipped_mass_rate(self, K: float, mass_scale: int) -> float:
        """Exponential mass-decay rate of the truncated process.

        Events with net offspring excess (k-1)/N > K are suppressed in the
        truncated component, so its mean mass decays like exp(-C_K t) with
        C_K = rho_N * sum_{(k-1)/N > K} (k-1) p_k.
        """
        n_star = math.floor(K * mass_scale) + 1
        return self.branch_rate(mass_scale) * self.tail_first_moment(n_star)


def log_pk(beta: float, k: int) -> float:
    """log p_k for k >= 2: p_k = beta * Gamma(k-1-beta) / (Gamma(1-beta) * k!)."""
    if k < 2:
        raise ValueError("closed form only valid for k >= 2")
    return (
        math.log(beta)
        + math.lgamma(k - 1.0 - beta)
        - math.lgamma(1.0 - beta)
        - math.lgamma(k + 1.0)
    )


def pk(beta: float, k: int) -> float:
    """Probability of k offspring."""
    if k == 0:
        return 1.0 / (1.0 + beta)
    if k == 1:
        return 0.0
    return math.exp(log_pk(beta, k))


def tail_sum(beta: float, n: int) -> float:
    """sum_{k > n} p_k, exact, for n >= 1.

    Telescoping the recursion gives sum_{k>n} p_k = (n+1) p_{n+1} / (1+beta).
    """
    if n < 1:
        raise ValueError("tail_sum requires n >= 1")
    return (n + 1.0) * pk(beta, n + 1) / (1.0 + beta)


def tail_first_moment(beta: float, n: int) -> float:
    """sum_{k > n} (k-1) p_k, exact, for n >= 1."""
    if n < 1:
        raise ValueError("tail_first_moment requires n >= 1")
    b = beta
    coef = n * n / b + n / (b * (1.0 + b)) - 1.0 / (1.0 + b)
    return coef * pk(beta, n + 1)


def build_offspring_law(beta: float, M: int = 4096) -> OffspringLaw:
    """Tabulate p_0..p_M by the recursion; analytic tail handles k > M."""
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if M < 2:
        raise ValueError("need M >= 2")
    p = np.zeros(M + 1)
    p[0] = 1.0 / (1.0 + beta)
    p[2] = beta / 2.0
    for k in range(2, M):
        p[k + 1] = p[k] * (k - 1.0 - beta) / (k + 1.0)
    return OffspringLaw(beta=beta, probs=p, cumulative=np.cumsum(p))


def levy_identity_residual(beta: float, lam: np.ndarray) -> np.ndarray:
    """Residual of the jump-measure identity defining c_beta.

    Checks int_0^inf (e^{-lam*u} - 1 + lam*u) * c_beta * u^{-2-beta} du
    = lam^{1+beta} with c_beta = beta*(1+beta)/Gamma(1-beta), by adaptive
    quadrature on each lambda.  Returns |integral - lam^{1+beta}| per point.
    """
    from scipy.integrate import quad

    c_beta = beta * (1.0 + beta) / math.gamma(1.0 - beta)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    out = np.empty_like(lam)
    for i, lm in enumerate(lam):
        # split at 1/lam where the integrand changes character
        cut = 1.0 / lm

        def integrand(u, lm=lm):
            x = lm * u
            if x < 1e-4:
                core = 0.5 * x * x - x ** 3 / 6.0 + x ** 4 / 24.0
            else:
                core = math.exp(-x) - 1.0 + x
            return core * c_beta * u ** (-2.0 - beta)

        v1, _ = quad(integrand, 0.0, cut, epsabs=1e-13, epsrel=1e-12, limit=200)
        v2, _ = quad(integrand, cut, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
        out[i] = abs(v1 + v2 - lm ** (1.0 + beta))
    return out


def jump_rate_constant(beta: float) -> float:
    """c_beta = beta*(1+beta)/Gamma(1-beta), the jump-intensity constant."""
    return beta * (1.0 + beta) / math.gamma(1.0 - beta)
