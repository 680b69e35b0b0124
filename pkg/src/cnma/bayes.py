"""Bayesian additive models.

Three model kinds share one fitting path:

- ``anchored-arm``: binomial arm-level likelihood, component effects relative
  to a fixed single-component anchor treatment (the anchor's column is dropped
  from the incidence matrix, and a study containing the anchor gets no
  heterogeneity on that arm).
- ``unanchored-arm``: binomial arm-level likelihood with the full incidence
  matrix; the comparator level of the effect vector is implicit in the fit.
- ``unanchored-contrast``: normal likelihood on baseline contrasts with the
  heterogeneity integrated out analytically, y* ~ N(U* V d, S* + sigma^2 Sigma*).

Arm-level random effects use the baseline-arm parameterization: the baseline
arm's latent is fixed at zero and the remaining a-1 latents get the
compound-symmetry contrast covariance sigma^2 Sigma*. Differencing the full
a-dimensional compound-symmetry latent against a common arm yields exactly
this law, and the direction it removes is absorbed by the diffuse per-study
baseline, so contrast inference is unchanged while sampling loses a redundant
dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .design import build_U, incidence_matrix
from .errors import (
    CnmaError,
    DisconnectedNetwork,
    EmptyNetwork,
    NotPositiveDefinite,
    UnknownAnchor,
)
from .mcmc import (
    Block,
    McmcConfig,
    PosteriorSample,
    ess as _ess,
    rhat as _rhat,
    run_chains,
    summarize,
)
from .network import ContrastBlock, Network, Study, Treatment, arm_to_contrast
from .numerics import chol, mvn_logpdf, rng_stream

LOG_2PI = math.log(2.0 * math.pi)

MODEL_KINDS = ("anchored-arm", "unanchored-arm", "unanchored-contrast")


@dataclass(frozen=True)
class Priors:
    d_variance: float = 1000.0
    alpha_variance: float = 1000.0
    sigma_upper: float = 2.0


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    effects: str = "random"
    anchor: Treatment | None = None
    priors: Priors = field(default_factory=Priors)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise CnmaError(f"unknown model kind {self.kind!r}")
        if self.effects not in ("fixed", "random"):
            raise CnmaError(f"unknown effects mode {self.effects!r}")
        if (self.anchor is not None) != (self.kind == "anchored-arm"):
            raise CnmaError("anchor is required for anchored-arm and only there")
        if self.priors.sigma_upper <= 0:
            raise CnmaError("sigma_upper must be positive")

    @property
    def random_effects(self) -> bool:
        return self.effects == "random"


def _anchor_first(study: Study, anchor: Treatment) -> Study:
    """Reorder arms so the anchor treatment, when present, is arm 1."""
    for j, arm in enumerate(study.arms):
        if arm.treatment == anchor:
            if j == 0:
                return study
            arms = (study.arms[j],) + study.arms[:j] + study.arms[j + 1 :]
            return Study(id=study.id, arms=arms)
    return study


class _ArmModel:
    """Precomputed arrays and log-posterior terms for the arm-level kinds.

    Reported parameterization: (d, alpha, eps, sigma) where alpha_i is the
    study baseline of the linear predictor, logit = alpha_i + V d + eps.

    Sampling parameterization: alpha is replaced by the arm-1 logit
    a_i = alpha_i + (V d)_{arm 1}, so the effect block changes only contrast
    predictions and the baseline block absorbs the level. The map is affine
    and volume-preserving, so draws are transformed back after sampling.
    """

    def __init__(self, studies, network: Network, spec: ModelSpec):
        anchored = spec.kind == "anchored-arm"
        if anchored:
            studies = [_anchor_first(s, spec.anchor) for s in studies]
        self.studies = tuple(studies)
        self.network = network
        self.spec = spec

        if anchored:
            anchor_comp = spec.anchor.components[0]
            self.d_components = tuple(
                c for c in network.components if c != anchor_comp
            )
        else:
            self.d_components = network.components
        k = len(self.d_components)

        arm_study, r, n, v_rows = [], [], [], []
        self.arm_slices: list[slice] = []
        at = 0
        for i, study in enumerate(self.studies):
            a = study.n_arms
            self.arm_slices.append(slice(at, at + a))
            at += a
            for arm in study.arms:
                arm_study.append(i)
                r.append(float(arm.events))
                n.append(float(arm.total))
                row = np.zeros(k)
                for comp in arm.treatment.components:
                    if comp in self.d_components:
                        row[self.d_components.index(comp)] = 1.0
                    elif not anchored or comp != spec.anchor.components[0]:
                        network.component_index(comp)  # raises UnknownComponent
                v_rows.append(row)
        self.arm_study = np.array(arm_study, dtype=int)
        self.r = np.array(r)
        self.n = np.array(n)
        self.V = np.array(v_rows)
        self.V1 = np.array([self.V[sl.start] for sl in self.arm_slices])
        self.Vc = self.V - self.V1[self.arm_study]
        self.logc_total = float(
            np.sum(gammaln(self.n + 1) - gammaln(self.r + 1) - gammaln(self.n - self.r + 1))
        )
        self.logc_study = [
            float(
                np.sum(
                    gammaln(self.n[sl] + 1)
                    - gammaln(self.r[sl] + 1)
                    - gammaln(self.n[sl] - self.r[sl] + 1)
                )
            )
            for sl in self.arm_slices
        ]

        n_studies = len(self.studies)
        self.m = np.array([s.n_arms - 1 for s in self.studies], dtype=int)
        self.has_eps = spec.random_effects
        n_eps = int(self.m.sum()) if self.has_eps else 0

        self.d_sl = slice(0, k)
        self.alpha_sl = slice(k, k + n_studies)
        self.eps_sl = slice(k + n_studies, k + n_studies + n_eps)
        self.sigma_pos = k + n_studies + n_eps if spec.random_effects else None
        self.dim = k + n_studies + n_eps + (1 if spec.random_effects else 0)

        if self.has_eps:
            eps_arm_positions = []
            self.eps_x_slices: list[slice] = []  # into the full parameter vector
            estart = 0
            eps_local_starts = []
            for i, study in enumerate(self.studies):
                a = study.n_arms
                base = self.arm_slices[i].start
                eps_arm_positions.extend(range(base + 1, base + a))
                self.eps_x_slices.append(
                    slice(self.eps_sl.start + estart, self.eps_sl.start + estart + a - 1)
                )
                eps_local_starts.append(estart)
                estart += a - 1
            self.eps_arm_positions = np.array(eps_arm_positions, dtype=int)
            self.eps_starts = np.array(eps_local_starts, dtype=int)
            # log det of the contrast compound-symmetry block, per study
            self.eps_logdets = np.log(self.m + 1.0) - self.m * math.log(2.0)

        names = [f"d[{c}]" for c in self.d_components]
        names += [f"alpha[{s.id}]" for s in self.studies]
        if self.has_eps:
            for study in self.studies:
                names += [f"eps[{study.id}:{j + 1}]" for j in range(study.n_arms - 1)]
        if spec.random_effects:
            names.append("sigma")
        self.names = tuple(names)

        # scalar-math views of the per-study terms (hot path: the per-study
        # partial evaluators run tens of thousands of times per chain)
        self._study_arms: list[list[tuple[float, float, list, int]]] = []
        self._v1_cols: list[list[int]] = []
        for i, study in enumerate(self.studies):
            sl = self.arm_slices[i]
            arms = []
            for local, gpos in enumerate(range(sl.start, sl.stop)):
                nz = [
                    (int(j), float(self.Vc[gpos, j]))
                    for j in range(k)
                    if self.Vc[gpos, j] != 0.0
                ]
                epos = -1
                if self.has_eps and local >= 1:
                    epos = self.eps_x_slices[i].start + (local - 1)
                arms.append((float(self.r[gpos]), float(self.n[gpos]), nz, epos))
            self._study_arms.append(arms)
            self._v1_cols.append([int(j) for j in range(k) if self.V1[i, j] != 0.0])

    # --- parameterization maps -------------------------------------------

    def to_internal(self, x: np.ndarray) -> np.ndarray:
        """(d, alpha, ...) -> (d, arm-1 logit, ...)."""
        y = np.array(x, dtype=float)
        y[self.alpha_sl] = x[self.alpha_sl] + self.V1 @ x[self.d_sl]
        return y

    def to_reported(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float)
        y[self.alpha_sl] = x[self.alpha_sl] - self.V1 @ x[self.d_sl]
        return y

    def reported_draws(self, draws: np.ndarray) -> np.ndarray:
        """Transform a (chains, kept, dim) array of internal draws in place-free form."""
        out = np.array(draws)
        out[..., self.alpha_sl] = draws[..., self.alpha_sl] - np.einsum(
            "...k,ik->...i", draws[..., self.d_sl], self.V1
        )
        return out

    # --- likelihood terms (reported parameterization) ---------------------

    def _logits(self, x: np.ndarray) -> np.ndarray:
        logits = x[self.alpha_sl][self.arm_study] + self.V @ x[self.d_sl]
        if self.has_eps and self.eps_arm_positions.size:
            logits[self.eps_arm_positions] += x[self.eps_sl]
        return logits

    def arm_logits(self, x: np.ndarray) -> np.ndarray:
        """Per-arm linear predictors, in stored study/arm order (for checks)."""
        return self._logits(np.asarray(x, dtype=float))

    def loglik(self, x: np.ndarray) -> float:
        logits = self._logits(x)
        return float(
            np.sum(self.r * logits - self.n * np.logaddexp(0.0, logits))
            + self.logc_total
        )

    # --- likelihood terms (sampling parameterization) ---------------------

    def _loglik_internal(self, x: np.ndarray) -> float:
        logits = x[self.alpha_sl][self.arm_study] + self.Vc @ x[self.d_sl]
        if self.has_eps and self.eps_arm_positions.size:
            logits[self.eps_arm_positions] += x[self.eps_sl]
        return float(
            np.sum(self.r * logits - self.n * np.logaddexp(0.0, logits))
            + self.logc_total
        )

    def _loglik_study_internal(self, x: np.ndarray, i: int) -> float:
        alpha = float(x[self.alpha_sl.start + i])
        total = self.logc_study[i]
        for r, n, nz, epos in self._study_arms[i]:
            lo = alpha
            for j, sign in nz:
                lo += sign * float(x[j])
            if epos >= 0:
                lo += float(x[epos])
            if lo >= 0.0:
                softplus = lo + math.log1p(math.exp(-lo)) if lo < 35.0 else lo
            else:
                softplus = math.log1p(math.exp(lo)) if lo > -35.0 else 0.0
            total += r * lo - n * softplus
        return total

    # --- prior terms ----------------------------------------------------

    def _d_prior(self, x) -> float:
        dv = self.spec.priors.d_variance
        d = x[self.d_sl]
        return float(-0.5 * (d @ d) / dv - 0.5 * d.size * (LOG_2PI + math.log(dv)))

    def _alpha_prior_all(self, x) -> float:
        av = self.spec.priors.alpha_variance
        a = x[self.alpha_sl]
        return float(-0.5 * (a @ a) / av - 0.5 * a.size * (LOG_2PI + math.log(av)))

    def _alpha_prior_internal_all(self, x) -> float:
        av = self.spec.priors.alpha_variance
        a = x[self.alpha_sl] - self.V1 @ x[self.d_sl]
        return float(-0.5 * (a @ a) / av - 0.5 * a.size * (LOG_2PI + math.log(av)))

    def _alpha_prior_internal_one(self, x, i) -> float:
        av = self.spec.priors.alpha_variance
        a = float(x[self.alpha_sl.start + i])
        for j in self._v1_cols[i]:
            a -= float(x[j])
        return -0.5 * a * a / av - 0.5 * (LOG_2PI + math.log(av))

    def _eps_prior_one(self, x, i) -> float:
        sigma = float(x[self.sigma_pos])
        if sigma <= 0.0:
            return -np.inf
        sl = self.eps_x_slices[i]
        m = sl.stop - sl.start
        if m == 1:
            e = float(x[sl.start])
            quad = e * e
        else:
            s = ss = 0.0
            for p in range(sl.start, sl.stop):
                v = float(x[p])
                s += v
                ss += v * v
            quad = 2.0 * (ss - s * s / (m + 1.0))
        return -0.5 * (
            m * (LOG_2PI + 2.0 * math.log(sigma))
            + float(self.eps_logdets[i])
            + quad / (sigma * sigma)
        )

    def _eps_prior_all(self, x) -> float:
        sigma = x[self.sigma_pos]
        if not 0.0 < sigma:
            return -np.inf
        e = x[self.eps_sl]
        if e.size == 0:
            return 0.0
        sums = np.add.reduceat(e, self.eps_starts)
        sqs = np.add.reduceat(e * e, self.eps_starts)
        quads = 2.0 * (sqs - sums * sums / (self.m + 1.0))
        return float(
            -0.5
            * (
                e.size * (LOG_2PI + 2.0 * math.log(sigma))
                + self.eps_logdets.sum()
                + quads.sum() / (sigma * sigma)
            )
        )

    def _sigma_bounds(self, x) -> float:
        sigma = x[self.sigma_pos]
        if 0.0 < sigma < self.spec.priors.sigma_upper:
            return -math.log(self.spec.priors.sigma_upper)
        return -np.inf

    # --- assembled log posterior and partials ---------------------------

    def logpost(self, x: np.ndarray) -> float:
        """Log posterior in the reported (d, alpha, eps, sigma) parameterization."""
        total = self.loglik(x) + self._d_prior(x) + self._alpha_prior_all(x)
        if self.spec.random_effects:
            bounds = self._sigma_bounds(x)
            if not np.isfinite(bounds):
                return -np.inf
            total += self._eps_prior_all(x) + bounds
        return float(total)

    def logpost_internal(self, x: np.ndarray) -> float:
        total = (
            self._loglik_internal(x)
            + self._d_prior(x)
            + self._alpha_prior_internal_all(x)
        )
        if self.spec.random_effects:
            bounds = self._sigma_bounds(x)
            if not np.isfinite(bounds):
                return -np.inf
            total += self._eps_prior_all(x) + bounds
        return float(total)

    def blocks_and_partials(self, d_chol):
        k = len(self.d_components)
        blocks = [
            Block(
                "d",
                tuple(range(self.d_sl.start, self.d_sl.stop)),
                scale=2.38 / math.sqrt(max(k, 1)),
                cov_chol=d_chol,
            )
        ]
        partials = [
            lambda x: self._loglik_internal(x)
            + self._d_prior(x)
            + self._alpha_prior_internal_all(x)
        ]

        if self.spec.random_effects:
            blocks.append(Block("sigma", (self.sigma_pos,), scale=0.4, log_scale=True))
            partials.append(lambda x: self._eps_prior_all(x) + self._sigma_bounds(x))

        for i, study in enumerate(self.studies):
            blocks.append(Block(f"alpha[{study.id}]", (self.alpha_sl.start + i,), scale=0.3))
            partials.append(
                lambda x, i=i: self._loglik_study_internal(x, i)
                + self._alpha_prior_internal_one(x, i)
            )

        if self.has_eps:
            for i, study in enumerate(self.studies):
                esl = self.eps_x_slices[i]
                blocks.append(
                    Block(f"eps[{study.id}]", tuple(range(esl.start, esl.stop)), scale=0.3)
                )
                partials.append(
                    lambda x, i=i: self._loglik_study_internal(x, i)
                    + self._eps_prior_one(x, i)
                )
            # likelihood-invariant translation: move d and let every latent
            # absorb the contrast change, so effects are not pinned by the
            # current latents (acceptance depends on the priors only)
            blocks.append(
                Block(
                    "d-shift",
                    tuple(range(self.d_sl.start, self.d_sl.stop))
                    + tuple(range(self.eps_sl.start, self.eps_sl.stop)),
                    scale=0.3,
                    cov_chol=d_chol,
                    shift_map=self.Vc[self.eps_arm_positions],
                )
            )
            partials.append(
                lambda x: self._d_prior(x)
                + self._alpha_prior_internal_all(x)
                + self._eps_prior_all(x)
            )
        return blocks, partials

    def initial_vector(self) -> np.ndarray:
        x = np.zeros(self.dim)
        if self.spec.random_effects:
            x[self.sigma_pos] = self.spec.priors.sigma_upper / 2.0
        return x


class _ContrastModel:
    """Marginalized contrast-level model: y* ~ N(U* V d, S* + sigma^2 Sigma*)."""

    def __init__(self, blocks, network: Network, spec: ModelSpec):
        self.blocks = tuple(blocks)
        self.network = network
        self.spec = spec
        self.d_components = network.components
        c = len(self.d_components)
        self.d_sl = slice(0, c)
        self.sigma_pos = c if spec.random_effects else None
        self.dim = c + (1 if spec.random_effects else 0)

        single_rows, single_y, single_var = [], [], []
        self.multi: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for b in self.blocks:
            U = build_U(b.n_arms, "baseline", b.baseline_arm)
            X = U @ incidence_matrix(b.treatments, network)
            if b.n_arms == 2:
                single_rows.append(X[0])
                single_y.append(b.y_star[0])
                single_var.append(b.se[0] ** 2)
            else:
                m = b.n_arms - 1
                sigma_star = np.full((m, m), 0.5)
                np.fill_diagonal(sigma_star, 1.0)
                self.multi.append((X, b.y_star, b.covariance(), sigma_star))
        self.X1 = np.array(single_rows) if single_rows else np.zeros((0, c))
        self.y1 = np.array(single_y)
        self.var1 = np.array(single_var)

        names = [f"d[{comp}]" for comp in self.d_components]
        if spec.random_effects:
            names.append("sigma")
        self.names = tuple(names)

    def loglik(self, x: np.ndarray) -> float:
        sigma2 = x[self.sigma_pos] ** 2 if self.spec.random_effects else 0.0
        total = 0.0
        if self.y1.size:
            mu = self.X1 @ x[self.d_sl]
            var = self.var1 + sigma2
            resid = self.y1 - mu
            total += float(
                -0.5 * np.sum(resid * resid / var + np.log(2.0 * np.pi * var))
            )
        for X, y, s_star, sigma_star in self.multi:
            total += mvn_logpdf(y, X @ x[self.d_sl], s_star + sigma2 * sigma_star)
        return total

    def _d_prior(self, x) -> float:
        dv = self.spec.priors.d_variance
        d = x[self.d_sl]
        return float(-0.5 * (d @ d) / dv - 0.5 * d.size * (LOG_2PI + math.log(dv)))

    def _sigma_bounds(self, x) -> float:
        sigma = x[self.sigma_pos]
        if 0.0 < sigma < self.spec.priors.sigma_upper:
            return -math.log(self.spec.priors.sigma_upper)
        return -np.inf

    def logpost(self, x: np.ndarray) -> float:
        if self.spec.random_effects:
            bounds = self._sigma_bounds(x)
            if not np.isfinite(bounds):
                return -np.inf
            return self.loglik(x) + self._d_prior(x) + bounds
        return self.loglik(x) + self._d_prior(x)

    # the contrast model has no per-study baselines, so the sampling and
    # reported parameterizations coincide
    logpost_internal = logpost

    def to_internal(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float)

    def reported_draws(self, draws: np.ndarray) -> np.ndarray:
        return np.array(draws)

    def blocks_and_partials(self, d_chol):
        k = len(self.d_components)
        blocks = [
            Block(
                "d",
                tuple(range(k)),
                scale=2.38 / math.sqrt(max(k, 1)),
                cov_chol=d_chol,
            )
        ]
        partials = [self.logpost]
        if self.spec.random_effects:
            blocks.append(Block("sigma", (self.sigma_pos,), scale=0.4, log_scale=True))
            partials.append(self.logpost)
        return blocks, partials

    def initial_vector(self) -> np.ndarray:
        x = np.zeros(self.dim)
        if self.spec.random_effects:
            x[self.sigma_pos] = self.spec.priors.sigma_upper / 2.0
        return x


def logpost_anchored_arm(params, studies, spec: ModelSpec, network: Network) -> float:
    """Log posterior of the anchored arm-level model at a parameter vector."""
    return _ArmModel(studies, network, spec).logpost(np.asarray(params, dtype=float))


def logpost_unanchored_arm(params, studies, spec: ModelSpec, network: Network) -> float:
    return _ArmModel(studies, network, spec).logpost(np.asarray(params, dtype=float))


def logpost_unanchored_contrast(params, blocks, spec: ModelSpec, network: Network) -> float:
    return _ContrastModel(blocks, network, spec).logpost(np.asarray(params, dtype=float))


@dataclass
class DicResult:
    deviance_bar: float
    deviance_at_mean: float
    p_d: float
    dic: float


@dataclass
class BayesFit:
    spec: ModelSpec
    sample: PosteriorSample
    network: Network
    model: object
    dic: DicResult | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return self.model.names

    @property
    def max_rhat(self) -> float:
        return float(np.max(self.sample.rhat))

    def summary(self, level: float = 0.95) -> dict[str, dict[str, float]]:
        return summarize(self.sample, level)

    def component_effect_draws(self) -> np.ndarray:
        """Pooled draws of per-component effects, one column per network component.

        For the anchored kind the anchor's column is identically zero, so the
        columns line up with ``network.components`` for every model.
        """
        pooled = self.sample.pooled()
        d_draws = pooled[:, self.model.d_sl]
        full = np.zeros((d_draws.shape[0], self.network.n_components))
        for j, comp in enumerate(self.model.d_components):
            full[:, self.network.component_index(comp)] = d_draws[:, j]
        return full

    def sigma_draws(self) -> np.ndarray | None:
        if self.model.sigma_pos is None:
            return None
        return self.sample.pooled()[:, self.model.sigma_pos]

    def treatment_effect_draws(self, treatments, reference: Treatment | None = None):
        """Draws of treatment-level effects (optionally versus a reference)."""
        comps = self.network.components
        draws = self.component_effect_draws()
        M = incidence_matrix(treatments, self.network)
        vals = draws @ M.T
        if reference is not None:
            ref_row = incidence_matrix([reference], self.network)[0]
            vals = vals - (draws @ ref_row)[:, None]
        return vals


def replace_names(sample: PosteriorSample, names) -> PosteriorSample:
    return PosteriorSample(
        names=tuple(names),
        draws=sample.draws,
        acceptance=sample.acceptance,
        rhat=sample.rhat,
        ess=sample.ess,
        scales_after_burnin=sample.scales_after_burnin,
        scales_final=sample.scales_final,
    )


def _validate(spec: ModelSpec, data, network: Network):
    if not data:
        raise EmptyNetwork("no data to fit")
    if not network.connected:
        raise DisconnectedNetwork("fit requires a connected network")
    arm_kind = spec.kind in ("anchored-arm", "unanchored-arm")
    if arm_kind and not all(isinstance(s, Study) for s in data):
        raise CnmaError(f"{spec.kind} expects arm-level studies")
    if not arm_kind and not all(isinstance(b, ContrastBlock) for b in data):
        raise CnmaError(f"{spec.kind} expects contrast blocks")
    if spec.kind == "anchored-arm":
        if spec.anchor.size != 1:
            raise UnknownAnchor("anchor must be a single-component treatment")
        if spec.anchor not in network.treatments:
            raise UnknownAnchor(
                f"anchor {spec.anchor.label!r} is not a treatment in the network"
            )


def _d_preconditioner(model, network: Network, spec: ModelSpec) -> np.ndarray | None:
    """Proposal shape for the effect block from a crude GLS information matrix."""
    try:
        if isinstance(model, _ArmModel):
            cblocks = [arm_to_contrast(s, 0, "cc05") for s in model.studies]
        else:
            cblocks = model.blocks
        rows = []
        weights = []
        for b in cblocks:
            U = build_U(b.n_arms, "baseline", b.baseline_arm)
            X = U @ incidence_matrix(b.treatments, network)
            if isinstance(model, _ArmModel) and spec.kind == "anchored-arm":
                keep = [
                    j
                    for j, comp in enumerate(network.components)
                    if comp in model.d_components
                ]
                X = X[:, keep]
            rows.append(X)
            weights.append(np.linalg.inv(b.covariance()))
        X = np.vstack(rows)
        total = sum(w.shape[0] for w in weights)
        W = np.zeros((total, total))
        at = 0
        for w in weights:
            m = w.shape[0]
            W[at : at + m, at : at + m] = w
            at += m
        info = X.T @ W @ X + np.eye(X.shape[1]) / spec.priors.d_variance
        return chol(np.linalg.inv(info))
    except (np.linalg.LinAlgError, NotPositiveDefinite, CnmaError):
        return None


def _initial_vectors(model, config: McmcConfig, spec: ModelSpec) -> np.ndarray:
    """Overdispersed per-chain starts around the neutral point."""
    base = model.initial_vector()
    inits = np.tile(base, (config.n_chains, 1))
    for c in range(config.n_chains):
        rng = rng_stream(config.seed, 90_000 + c)
        jitter = rng.uniform(-0.5, 0.5, size=base.size)
        x = inits[c]
        x[model.d_sl] += jitter[model.d_sl]
        if isinstance(model, _ArmModel):
            x[model.alpha_sl] += jitter[model.alpha_sl]
            if model.has_eps:
                x[model.eps_sl] += 0.2 * jitter[model.eps_sl]
        if spec.random_effects:
            x[model.sigma_pos] *= 1.0 + 0.5 * jitter[model.sigma_pos]
    return inits


def build_model(spec: ModelSpec, data, network: Network):
    _validate(spec, data, network)
    if spec.kind in ("anchored-arm", "unanchored-arm"):
        return _ArmModel(data, network, spec)
    return _ContrastModel(data, network, spec)


def fit(
    spec: ModelSpec,
    data,
    network: Network,
    mcmc_config: McmcConfig | None = None,
) -> BayesFit:
    """Sample the posterior of one model and return the assembled fit."""
    config = mcmc_config if mcmc_config is not None else McmcConfig()
    model = build_model(spec, data, network)
    d_chol = _d_preconditioner(model, network, spec)
    blocks, partials = model.blocks_and_partials(d_chol)
    inits = _initial_vectors(model, config, spec)
    inits_internal = np.array([model.to_internal(v) for v in inits])
    raw = run_chains(
        model.logpost_internal, inits_internal, blocks, config, partials=partials
    )
    draws = model.reported_draws(raw.draws)
    sample = PosteriorSample(
        names=model.names,
        draws=draws,
        acceptance=raw.acceptance,
        rhat=np.array([_rhat(draws[:, :, j]) for j in range(draws.shape[-1])]),
        ess=np.array([_ess(draws[:, :, j]) for j in range(draws.shape[-1])]),
        scales_after_burnin=raw.scales_after_burnin,
        scales_final=raw.scales_final,
    )
    return BayesFit(spec=spec, sample=sample, network=network, model=model)


def dic(fit_result: BayesFit, data=None) -> DicResult:
    """Conditional deviance information criterion for the arm-level kinds.

    The deviance conditions on the latent study effects: D(theta) is minus
    twice the binomial log likelihood at (d, alpha, eps), averaged over the
    kept draws; the effective parameter count compares against D at the
    posterior mean of every sampled quantity.
    """
    model = fit_result.model
    if not isinstance(model, _ArmModel):
        raise CnmaError("dic is defined for the arm-level model kinds")
    if data is not None and len(data) != len(model.studies):
        raise CnmaError("data does not match the fitted studies")

    pooled = fit_result.sample.pooled()
    d = pooled[:, model.d_sl]
    alpha = pooled[:, model.alpha_sl]
    logits = alpha[:, model.arm_study] + d @ model.V.T
    if model.has_eps and model.eps_arm_positions.size:
        logits[:, model.eps_arm_positions] += pooled[:, model.eps_sl]
    ll = (
        np.sum(model.r * logits - model.n * np.logaddexp(0.0, logits), axis=1)
        + model.logc_total
    )
    deviances = -2.0 * ll
    deviance_bar = float(deviances.mean())
    deviance_at_mean = float(-2.0 * model.loglik(pooled.mean(axis=0)))
    p_d = deviance_bar - deviance_at_mean
    result = DicResult(
        deviance_bar=deviance_bar,
        deviance_at_mean=deviance_at_mean,
        p_d=p_d,
        dic=deviance_bar + p_d,
    )
    fit_result.dic = result
    return result
