"""Frequentist anchor-free model on contrasts: GLS with a Moore-Penrose
pseudoinverse, method-of-moments heterogeneity, and P-score rankings.

Multi-arm studies enter as their a_i - 1 baseline contrasts with the full
block covariance (sampling covariance plus, under random effects, the
compound-symmetry heterogeneity block), which is equivalent to re-weighting
all pairwise contrasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .design import build_Sigma_star, build_U, incidence_matrix
from .effects import contrast_vector
from .errors import CnmaError, DisconnectedNetwork
from .network import ContrastBlock, Network, Treatment
from .numerics import pinv


@dataclass(frozen=True)
class FreqFit:
    """GLS estimates of component effects relative to the data-selected level."""

    d_hat: np.ndarray
    cov_d: np.ndarray
    tau2: float
    Q: float
    df: int
    rank_X: int
    components: tuple[str, ...]
    effects_model: str  # "fixed" | "random"
    tau2_truncated: bool


def _block_design(block: ContrastBlock, network: Network) -> np.ndarray:
    U = build_U(block.n_arms, "baseline", block.baseline_arm)
    V = incidence_matrix(block.treatments, network)
    return U @ V


def _stacked(blocks, network):
    X = np.vstack([_block_design(b, network) for b in blocks])
    y = np.concatenate([b.y_star for b in blocks])
    return X, y


def _omega_inverse(blocks, tau2: float) -> np.ndarray:
    """Block-diagonal inverse of S*_i + tau2 * Sigma*_i."""
    total = sum(b.y_star.size for b in blocks)
    w = np.zeros((total, total))
    at = 0
    for b in blocks:
        m = b.y_star.size
        cov = b.covariance() + tau2 * build_Sigma_star(b.n_arms)
        w[at : at + m, at : at + m] = np.linalg.inv(cov)
        at += m
    return w


def _wls(X, y, W):
    xtwx = X.T @ W @ X
    cov = pinv(xtwx)
    d_hat = cov @ (X.T @ W @ y)
    return d_hat, cov, xtwx


def estimate_tau2(blocks, network: Network) -> tuple[float, float, int, bool]:
    """Generalized method-of-moments heterogeneity estimate.

    Fits fixed-effects GLS, forms the generalized Q statistic from the
    weighted residuals, and solves the moment equation
    tau2 = (Q - df) / trace(P) with P = W - W X (X'WX)^+ X'W, truncating at
    zero. Reduces to the classic two-stage moment estimator in pairwise
    meta-analysis. Returns (tau2, Q, df, truncated_or_undefined_flag).
    """
    X, y = _stacked(blocks, network)
    W = _omega_inverse(blocks, 0.0)
    d_fe, cov_fe, xtwx = _wls(X, y, W)
    rank = int(np.linalg.matrix_rank(X))
    df = X.shape[0] - rank
    resid = y - X @ d_fe
    Q = float(resid @ W @ resid)
    if df <= 0:
        return 0.0, Q, df, True
    P = W - W @ X @ pinv(xtwx) @ X.T @ W
    trace_p = float(np.trace(P))
    if trace_p <= 0:
        return 0.0, Q, df, True
    tau2 = (Q - df) / trace_p
    if tau2 < 0.0:
        return 0.0, Q, df, True
    return tau2, Q, df, False


def gls_fit(blocks, network: Network, effects_model: str = "random") -> FreqFit:
    """Weighted least squares on the stacked contrasts.

    Under random effects the heterogeneity variance is estimated first by
    the method of moments and then held fixed in the weights.
    """
    blocks = list(blocks)
    if not blocks:
        raise CnmaError("no contrast blocks")
    if effects_model not in ("fixed", "random"):
        raise CnmaError(f"unknown effects model {effects_model!r}")
    if not network.connected:
        raise DisconnectedNetwork("gls_fit requires a connected network")

    tau2, Q, df, truncated = estimate_tau2(blocks, network)
    if effects_model == "fixed":
        tau2_used = 0.0
    else:
        tau2_used = tau2

    X, y = _stacked(blocks, network)
    W = _omega_inverse(blocks, tau2_used)
    d_hat, cov, _ = _wls(X, y, W)
    return FreqFit(
        d_hat=d_hat,
        cov_d=cov,
        tau2=tau2_used,
        Q=Q,
        df=df,
        rank_X=int(np.linalg.matrix_rank(X)),
        components=network.components,
        effects_model=effects_model,
        tau2_truncated=truncated,
    )


def p_scores(
    fit: FreqFit, treatments, direction: str = "higher-better"
) -> dict[Treatment, float]:
    """Frequentist ranking scores.

    For each ordered pair (k, l), the normal probability that k beats l,
    averaged over l != k. Uses the fitted covariance to propagate uncertainty
    to treatment-level differences.
    """
    treatments = list(treatments)
    if len(treatments) < 2:
        raise CnmaError("p_scores needs >= 2 treatments")
    scores = {}
    for k in treatments:
        probs = []
        for l in treatments:
            if l == k:
                continue
            w = contrast_vector(l, k, fit.components)
            diff = float(w @ fit.d_hat)
            var = float(w @ fit.cov_d @ w)
            if var <= 0.0:
                raise CnmaError(
                    f"zero standard error between {k.label!r} and {l.label!r}"
                )
            z = diff / np.sqrt(var)
            probs.append(stats.norm.cdf(z if direction == "higher-better" else -z))
        scores[k] = float(np.mean(probs))
    return scores
