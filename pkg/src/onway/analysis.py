"""Applied outputs: strategy engagement, segmentation tests, substitutability."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .choice import CoefficientSet, StrategyContext, context_matrix, log_conditional, log_strategy_probabilities
from .design import Design, build_design
from .errors import DegenerateGroups, EmptySubset, WrongFamily


@dataclass(frozen=True)
class EngagementTable:
    """Destination-strategy probability for each of the 8 trip contexts."""

    rows: tuple  # ((regular, aware_before, morning, probability), ...)

    def probability(self, regular, aware_before, morning) -> float:
        for r, a, m, p in self.rows:
            if (r, a, m) == (int(regular), int(aware_before), int(morning)):
                return p
        raise KeyError((regular, aware_before, morning))


def engagement_table(coeffs: CoefficientSet) -> EngagementTable:
    if coeffs.n_strategies != 2:
        raise WrongFamily(f"engagement table needs 2 strategies, got {coeffs.n_strategies}")
    rows = []
    for r, a, m in itertools.product((0, 1), repeat=3):
        z = StrategyContext(regular=bool(r), aware_before=bool(a), morning=bool(m)).as_array()
        p = float(np.exp(log_strategy_probabilities(coeffs.alphas, z[None, :])[0, 1]))
        rows.append((r, a, m, p))
    return EngagementTable(tuple(rows))


class GroupComparison(NamedTuple):
    group_means: dict
    F: float
    df1: int
    df2: int
    p_value: float


def group_comparison(values, groups) -> GroupComparison:
    """One-way ANOVA of ``values`` across ``groups`` labels."""
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    if values.shape != groups.shape:
        raise ValueError("values and groups must align")
    labels = sorted(set(groups.tolist()), key=str)
    g, n = len(labels), len(values)
    if g < 2 or n <= g:
        raise DegenerateGroups(f"need >= 2 groups and more observations than groups (g={g}, n={n})")
    grand = values.mean()
    means, ss_between, ss_within = {}, 0.0, 0.0
    for lab in labels:
        v = values[groups == lab]
        means[lab] = float(v.mean())
        ss_between += len(v) * (v.mean() - grand) ** 2
        ss_within += ((v - v.mean()) ** 2).sum()
    df1, df2 = g - 1, n - g
    if ss_within == 0:
        F = 0.0 if ss_between == 0 else np.inf
    else:
        F = (ss_between / df1) / (ss_within / df2)
    return GroupComparison(means, float(F), df1, df2, float(stats.f.sf(F, df1, df2)))


def destination_shares(coeffs: CoefficientSet, dataset, market=None, *, posterior: bool = False) -> np.ndarray:
    """Per-trip probability of the destination-oriented (second) strategy.

    The prior depends on trip covariates only; the posterior also
    conditions on the observed outlet choice.
    """
    if coeffs.n_strategies != 2:
        raise WrongFamily("destination shares need a two-strategy model")
    design = dataset if isinstance(dataset, Design) else build_design(dataset, market)
    logq = log_strategy_probabilities(coeffs.alphas, design.Z)
    if not posterior:
        return np.exp(logq[:, 1])
    logp = log_conditional(coeffs.betas, design.X)
    rows = np.arange(design.n_obs)
    joint = logq.T + logp[:, rows, design.chosen]
    joint -= joint.max(axis=0)
    w = np.exp(joint)
    return w[1] / w.sum(axis=0)


def segment(coeffs, dataset, market, by: str, *, posterior: bool = False) -> GroupComparison:
    dataset = list(dataset)
    labels = [obs.covariates.get(by) for obs in dataset]
    keep = [i for i, lab in enumerate(labels) if lab not in (None, "")]
    shares = destination_shares(coeffs, [dataset[i] for i in keep], market, posterior=posterior)
    return group_comparison(shares, [labels[i] for i in keep])


@dataclass(frozen=True, eq=False)
class SubstitutabilityMatrix:
    outlet_ids: tuple
    values: np.ndarray  # diagonal is NaN
    time_of_day: str


def substitutability_matrix(
    coeffs: CoefficientSet,
    dataset,
    market=None,
    outlet_subset=None,
    morning: bool = False,
) -> SubstitutabilityMatrix:
    """Sample-average cross derivatives of choice probability w.r.t. utility.

    Probabilities use the full market choice set; every trip's morning flag
    is overridden by ``morning``.
    """
    if coeffs.sigmas is not None:
        raise WrongFamily("substitutability is defined for latent-strategy coefficient sets")
    design = dataset if isinstance(dataset, Design) else build_design(dataset, market)
    if design.n_obs == 0:
        raise ValueError("dataset is empty")
    if outlet_subset is None:
        idx = np.arange(design.X.shape[1])
        ids = tuple(o.id for o in market.outlets) if market is not None else tuple(range(len(idx)))
    else:
        ids = tuple(outlet_subset)
        if not ids:
            raise EmptySubset("outlet subset is empty")
        idx = np.array([market.outlet_index[o] for o in ids])
    Z = design.Z
    Z = context_matrix(Z[:, 2], Z[:, 1], np.full(len(Z), float(morning)))
    if coeffs.n_strategies > 1:
        q = np.exp(log_strategy_probabilities(coeffs.alphas, Z))
    else:
        q = np.ones((len(Z), 1))
    p = np.exp(log_conditional(coeffs.betas, design.X))[:, :, idx]
    gamma = -np.einsum("ns,snj,snk->jk", q, p, p) / design.n_obs
    gamma = 0.5 * (gamma + gamma.T)
    np.fill_diagonal(gamma, np.nan)
    return SubstitutabilityMatrix(ids, gamma, "morning" if morning else "afternoon")


def combine_triangles(morning: SubstitutabilityMatrix, afternoon: SubstitutabilityMatrix) -> np.ndarray:
    """Lower triangle from the morning matrix, upper from the afternoon one."""
    if morning.outlet_ids != afternoon.outlet_ids:
        raise ValueError("matrices cover different outlets")
    out = np.triu(np.nan_to_num(afternoon.values), 1) + np.tril(np.nan_to_num(morning.values), -1)
    np.fill_diagonal(out, np.nan)
    return out
