"""Design and covariance-structure matrices.

Per study: the component incidence matrix V (arms x components), its anchored
reduction V1 (the anchor's column dropped), contrast matrices U in all-pairs
or common-baseline form, and the compound-symmetry heterogeneity structures
Sigma / Sigma*. Across studies: the stacked regression matrix X = rows of U V.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CnmaError, DisconnectedNetwork, UnknownAnchor
from .network import Network, Study, Treatment


def incidence_row(treatment: Treatment, network: Network) -> np.ndarray:
    row = np.zeros(network.n_components)
    for comp in treatment.components:
        row[network.component_index(comp)] = 1.0
    return row


def incidence_matrix(treatments, network: Network) -> np.ndarray:
    """Stack incidence rows for an arbitrary treatment sequence."""
    return np.array([incidence_row(t, network) for t in treatments])


def build_V(study: Study, network: Network) -> np.ndarray:
    """Binary incidence of components per arm: V[j, k] = 1 iff arm j uses component k."""
    return incidence_matrix(study.treatments, network)


def build_V_anchored(study: Study, network: Network, anchor: Treatment) -> np.ndarray:
    """V with the anchor component's column removed.

    Requires a single-component anchor; an arm employing only the anchor gets
    an all-zero row, so its linear predictor reduces to the study baseline.
    """
    if anchor.size != 1:
        raise UnknownAnchor(f"anchor must be single-component, got {anchor.label!r}")
    network.require_components(anchor)
    anchor_col = network.component_index(anchor.components[0])
    V = build_V(study, network)
    return np.delete(V, anchor_col, axis=1)


def build_U(a: int, mode: str = "baseline", baseline_arm: int = 0) -> np.ndarray:
    """Contrast matrix over a study's arms.

    ``allpairs``: a(a-1)/2 rows in lexicographic pair order, arm k minus arm j
    for j < k. ``baseline``: a-1 rows, each non-baseline arm (in arm order)
    minus the baseline arm, whose column is all -1.
    """
    if a < 2:
        raise CnmaError("contrasts need >= 2 arms")
    if mode == "allpairs":
        rows = []
        for j in range(a):
            for k in range(j + 1, a):
                row = np.zeros(a)
                row[j], row[k] = -1.0, 1.0
                rows.append(row)
        return np.array(rows)
    if mode == "baseline":
        if not 0 <= baseline_arm < a:
            raise CnmaError("baseline arm out of range")
        rows = []
        for j in range(a):
            if j == baseline_arm:
                continue
            row = np.zeros(a)
            row[baseline_arm], row[j] = -1.0, 1.0
            rows.append(row)
        return np.array(rows)
    raise CnmaError(f"unknown contrast mode {mode!r}")


def build_Sigma(a: int, zero_first: bool = False) -> np.ndarray:
    """Compound-symmetry heterogeneity structure: unit diagonal, 1/2 elsewhere.

    With ``zero_first`` the first row and column are zeroed, i.e. no
    heterogeneity on the arm holding the anchor treatment.
    """
    if a < 2:
        raise CnmaError("Sigma needs >= 2 arms")
    sigma = np.full((a, a), 0.5)
    np.fill_diagonal(sigma, 1.0)
    if zero_first:
        sigma[0, :] = 0.0
        sigma[:, 0] = 0.0
    return sigma


def build_Sigma_star(a: int) -> np.ndarray:
    """Compound symmetry on the a-1 baseline contrasts of an a-arm study."""
    if a < 2:
        raise CnmaError("Sigma* needs >= 2 arms")
    m = a - 1
    sigma = np.full((m, m), 0.5)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def stack_X(network: Network, mode: str = "baseline") -> np.ndarray:
    """Vertical stack of U_i V_i over studies; columns follow component index order."""
    if not network.connected:
        raise DisconnectedNetwork("stack_X requires a connected network")
    rows = []
    for study in network.studies:
        U = build_U(study.n_arms, mode=mode, baseline_arm=0)
        V = build_V(study, network)
        rows.append(U @ V)
    return np.vstack(rows)


@dataclass(frozen=True)
class DesignSet:
    """Every per-study matrix for one study, precomputed once."""

    V: np.ndarray
    V_anchored: np.ndarray | None
    U_allpairs: np.ndarray
    U_baseline: np.ndarray
    Sigma: np.ndarray
    Sigma_star: np.ndarray


def study_design_set(
    study: Study,
    network: Network,
    baseline_arm: int = 0,
    anchor: Treatment | None = None,
) -> DesignSet:
    a = study.n_arms
    anchored = None
    zero_first = False
    if anchor is not None:
        anchored = build_V_anchored(study, network, anchor)
        zero_first = anchor in study.treatments
    return DesignSet(
        V=build_V(study, network),
        V_anchored=anchored,
        U_allpairs=build_U(a, "allpairs"),
        U_baseline=build_U(a, "baseline", baseline_arm),
        Sigma=build_Sigma(a, zero_first),
        Sigma_star=build_Sigma_star(a),
    )
