"""Maximum-likelihood estimation for the latent-strategy model and its benchmarks.

All likelihood work happens on a prebuilt :class:`~onway.design.Design`.
The optimizer runs on column-standardized parameters (BFGS), then polishes
with Newton steps on a finite-difference Hessian of the analytic gradient
until the raw gradient meets the tolerance.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .choice import FEATURES, STRATEGY_TERMS, CoefficientSet, log_strategy_probabilities
from .design import Design, build_design
from .errors import DataError, SingularHessianWarning

_KINDS = ("latent", "single", "gravity", "xgravity", "mixed")
_DEFAULT_TERMS = {
    "latent": FEATURES,
    "single": FEATURES,
    "mixed": FEATURES,
    "gravity": ("direct", "quality"),
    "xgravity": ("direct", "comp", "aggl", "quality"),
}


@dataclass(frozen=True)
class ModelFamily:
    kind: str
    n_strategies: int = 1
    draws: int = 200
    seed: int = 0
    terms: tuple | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "latent" and self.n_strategies < 2:
            raise ValueError("latent family needs at least 2 strategies")
        if self.kind != "latent" and self.n_strategies != 1:
            raise ValueError(f"{self.kind} family has exactly one strategy")
        if self.kind == "mixed" and self.draws < 1:
            raise ValueError("mixed logit needs at least one draw")
        if self.terms is not None:
            bad = set(self.terms) - set(FEATURES)
            if bad:
                raise ValueError(f"unknown terms {sorted(bad)}")

    @classmethod
    def latent(cls, k: int = 2):
        return cls("latent", k)

    @classmethod
    def single(cls, terms=None):
        return cls("single", terms=terms)

    @classmethod
    def gravity(cls):
        return cls("gravity")

    @classmethod
    def extended_gravity(cls):
        return cls("xgravity")

    @classmethod
    def mixed(cls, draws: int = 200, seed: int = 0):
        return cls("mixed", draws=draws, seed=seed)

    @classmethod
    def from_name(cls, name: str, *, draws: int = 200, seed: int = 0):
        if name.startswith("latent"):
            k = int(name[6:] or 2)
            return cls.single() if k == 1 else cls.latent(k)
        if name == "mixed":
            return cls.mixed(draws, seed)
        if name in ("single", "gravity", "xgravity"):
            return cls(name)
        raise ValueError(f"unknown family {name!r}")

    @property
    def name(self) -> str:
        return f"latent{self.n_strategies}" if self.kind == "latent" else self.kind

    @property
    def active_terms(self) -> tuple:
        return tuple(self.terms) if self.terms is not None else _DEFAULT_TERMS[self.kind]

    @property
    def mask(self) -> np.ndarray:
        return np.array([f in self.active_terms for f in FEATURES])

    @property
    def from_origin(self) -> bool:
        return self.kind in ("gravity", "xgravity")

    @property
    def n_params(self) -> int:
        m = int(self.mask.sum())
        k = self.n_strategies * m + (self.n_strategies - 1) * len(STRATEGY_TERMS)
        return k + (m if self.kind == "mixed" else 0)

    def param_names(self) -> list[str]:
        terms = [f for f in FEATURES if f in self.active_terms]
        names = [f"beta.{s + 1}.{t}" for s in range(self.n_strategies) for t in terms]
        names += [f"alpha.{s + 1}.{t}" for s in range(1, self.n_strategies) for t in STRATEGY_TERMS]
        if self.kind == "mixed":
            names += [f"sigma.{t}" for t in terms]
        return names

    def pack(self, coeffs: CoefficientSet) -> np.ndarray:
        m = self.mask
        parts = [coeffs.betas[:, m].ravel(), coeffs.alphas.ravel()]
        if self.kind == "mixed":
            sig = coeffs.sigmas if coeffs.sigmas is not None else np.zeros(len(FEATURES))
            parts.append(sig[m])
        return np.concatenate(parts)

    def unpack(self, theta) -> CoefficientSet:
        theta = np.asarray(theta, dtype=float)
        m, S = self.mask, self.n_strategies
        nm = int(m.sum())
        betas = np.zeros((S, len(FEATURES)))
        betas[:, m] = theta[: S * nm].reshape(S, nm)
        pos = S * nm
        na = (S - 1) * len(STRATEGY_TERMS)
        alphas = theta[pos : pos + na].reshape(S - 1, len(STRATEGY_TERMS))
        sigmas = None
        if self.kind == "mixed":
            sigmas = np.zeros(len(FEATURES))
            sigmas[m] = theta[pos + na :]
        return CoefficientSet(betas, alphas, sigmas)


def infer_family(coeffs: CoefficientSet) -> ModelFamily:
    if coeffs.sigmas is not None:
        return ModelFamily.mixed()
    if coeffs.n_strategies > 1:
        return ModelFamily.latent(coeffs.n_strategies)
    return ModelFamily.single()


class InformationCriteria(NamedTuple):
    aic: float
    bic: float


def information_criteria(loglik: float, k_params: int, n_obs: int) -> InformationCriteria:
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    return InformationCriteria(2 * k_params - 2 * loglik, k_params * math.log(n_obs) - 2 * loglik)


# -- likelihood kernels ------------------------------------------------------


def _lse(a, axis=-1, keepdims=False):
    # scipy's logsumexp carries array-API overhead that dominates here
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def _utilities(X, betas, available):
    n, J, K = X.shape
    v = (X.reshape(n * J, K) @ betas.T).reshape(n, J, -1).transpose(2, 0, 1)
    if available is not None:
        v = np.where(available[None], v, -np.inf)
    return v


def _latent_loglik(design: Design, coeffs: CoefficientSet, grad: bool):
    X, c, Z = design.X, design.chosen, design.Z
    n = len(c)
    rows = np.arange(n)
    v = _utilities(X, coeffs.betas, design.available)
    lse = _lse(v)
    logp_c = v[:, rows, c] - lse
    logq = log_strategy_probabilities(coeffs.alphas, Z) if coeffs.n_strategies > 1 else np.zeros((n, 1))
    joint = logq.T + logp_c
    li = _lse(joint, axis=0)
    ll = float(li.sum())
    if not grad:
        return ll, None, None
    w = np.exp(joint - li)
    p = np.exp(v - lse[..., None])
    xc = X[rows, c]
    g_beta = np.empty((coeffs.n_strategies, X.shape[2]))
    for s in range(coeffs.n_strategies):
        xbar = np.matmul(p[s][:, None, :], X)[:, 0, :]
        g_beta[s] = w[s] @ (xc - xbar)
    g_alpha = ((w[1:] - np.exp(logq.T[1:])) @ Z) if coeffs.n_strategies > 1 else np.zeros((0, 5))
    return ll, g_beta, g_alpha


def simulation_draws(n_obs: int, draws: int, seed: int) -> np.ndarray:
    """Scrambled Halton normal draws of shape ``(n_obs, draws, 5)``."""
    sampler = qmc.Halton(d=len(FEATURES), scramble=True, seed=seed)
    u = sampler.random(n_obs * draws)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    return norm.ppf(u).reshape(n_obs, draws, len(FEATURES))


def _mixed_loglik(design: Design, coeffs: CoefficientSet, eta: np.ndarray, grad: bool):
    X, c = design.X, design.chosen
    n, J, _ = X.shape
    R = eta.shape[1]
    b, sig = coeffs.betas[0], coeffs.sigmas
    chunk = max(1, int(2_000_000 // max(1, R * J)))
    ll = 0.0
    g_b = np.zeros(len(FEATURES))
    g_s = np.zeros(len(FEATURES))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        Xc, cc, ec = X[lo:hi], c[lo:hi], eta[lo:hi]
        beta = b + sig * ec
        v = np.matmul(beta, Xc.transpose(0, 2, 1))
        if design.available is not None:
            v = np.where(design.available[lo:hi, None, :], v, -np.inf)
        lse = _lse(v)
        rows = np.arange(hi - lo)
        logp_c = v[rows, :, cc] - lse
        li = _lse(logp_c, axis=1) - math.log(R)
        ll += float(li.sum())
        if grad:
            w = np.exp(logp_c - _lse(logp_c, axis=1, keepdims=True))
            p = np.exp(v - lse[..., None])
            resid = Xc[rows, cc][:, None, :] - np.matmul(p, Xc)
            g_b += np.einsum("nr,nrk->k", w, resid)
            g_s += np.einsum("nr,nrk->k", w, resid * ec)
    return ll, g_b, g_s


class _Objective:
    """Log-likelihood and gradient over the packed free parameters."""

    def __init__(self, family: ModelFamily, design: Design):
        self.family = family
        self.design = design
        self.eta = (
            simulation_draws(design.n_obs, family.draws, family.seed) if family.kind == "mixed" else None
        )
        sd = design.X.reshape(-1, len(FEATURES)).std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        m = family.mask
        S = family.n_strategies
        parts = [np.tile(sd[m], S), np.ones((S - 1) * len(STRATEGY_TERMS))]
        if family.kind == "mixed":
            parts.append(sd[m])
        self.scale = np.concatenate(parts)

    def loglik(self, theta) -> float:
        return self.value_grad(theta, grad=False)[0]

    def value_grad(self, theta, grad=True):
        fam = self.family
        coeffs = fam.unpack(theta)
        m = fam.mask
        if fam.kind == "mixed":
            ll, gb, gs = _mixed_loglik(self.design, coeffs, self.eta, grad)
            g = None if not grad else np.concatenate([gb[m], gs[m]])
        else:
            ll, gB, gA = _latent_loglik(self.design, coeffs, grad)
            g = None if not grad else np.concatenate([gB[:, m].ravel(), gA.ravel()])
        return ll, g

    # scaled-space helpers: theta = phi / scale
    def to_phi(self, theta):
        return np.asarray(theta) * self.scale

    def to_theta(self, phi):
        return np.asarray(phi) / self.scale

    def hessian_phi(self, phi, step=1e-5):
        k = len(phi)
        H = np.empty((k, k))
        for i in range(k):
            h = step * max(1.0, abs(phi[i]))
            e = np.zeros(k)
            e[i] = h
            gp = self.value_grad(self.to_theta(phi + e))[1] / self.scale
            gm = self.value_grad(self.to_theta(phi - e))[1] / self.scale
            H[:, i] = (gp - gm) / (2 * h)
        return 0.5 * (H + H.T)


def _design_for(family: ModelFamily, dataset, market, max_direct_km=None) -> Design:
    if isinstance(dataset, Design):
        return dataset
    return build_design(dataset, market, from_origin=family.from_origin, max_direct_km=max_direct_km)


def log_likelihood(coeffs: CoefficientSet, dataset, market=None, family: ModelFamily | None = None) -> float:
    family = family or infer_family(coeffs)
    obj = _Objective(family, _design_for(family, dataset, market))
    return obj.loglik(family.pack(coeffs))


def log_likelihood_gradient(
    coeffs: CoefficientSet, dataset, market=None, family: ModelFamily | None = None
) -> np.ndarray:
    """Gradient over the family's free parameters, in ``family.param_names()`` order."""
    family = family or infer_family(coeffs)
    obj = _Objective(family, _design_for(family, dataset, market))
    return obj.value_grad(family.pack(coeffs))[1]


def standard_errors_from_information(info) -> np.ndarray | None:
    """Square roots of the diagonal of the inverse information matrix.

    Returns None (with a :class:`SingularHessianWarning`) when ``info`` is not
    numerically positive definite.
    """
    info = np.asarray(info, dtype=float)
    info = 0.5 * (info + info.T)
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 1e-8 * max(eig[-1], 1e-300):
        warnings.warn(
            f"information matrix is singular or indefinite (eigenvalue range {eig[0]:.3g} .. "
            f"{eig[-1]:.3g}); standard errors unavailable",
            SingularHessianWarning,
            stacklevel=2,
        )
        return None
    return np.sqrt(np.diag(np.linalg.inv(info)))


def _standard_errors(obj: _Objective, theta) -> np.ndarray | None:
    phi = obj.to_phi(theta)
    info_phi = -obj.hessian_phi(phi)
    se_phi = standard_errors_from_information(info_phi)
    return None if se_phi is None else se_phi / obj.scale


def standard_errors(coeffs, dataset, market=None, family: ModelFamily | None = None):
    family = family or infer_family(coeffs)
    obj = _Objective(family, _design_for(family, dataset, market))
    return _standard_errors(obj, family.pack(coeffs))


# -- fitting -----------------------------------------------------------------


@dataclass(eq=False)
class EstimationResult:
    family: ModelFamily
    coefficients: CoefficientSet
    loglik: float
    std_errors: np.ndarray | None
    aic: float
    bic: float
    converged: bool
    grad_norm: float
    n_obs: int
    k_params: int
    starts_used: int
    iterations: int = 0
    start_logliks: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    diagnostic: str = ""

    @property
    def param_names(self) -> list[str]:
        return self.family.param_names()

    @property
    def estimates(self) -> np.ndarray:
        return self.family.pack(self.coefficients)

    def confidence_intervals(self, level: float = 0.95) -> np.ndarray | None:
        if self.std_errors is None:
            return None
        zc = norm.ppf(0.5 + level / 2)
        est = self.estimates
        return np.column_stack([est - zc * self.std_errors, est + zc * self.std_errors])


def _newton_polish(obj: _Objective, phi, tol, max_steps=25):
    ll, g = obj.value_grad(obj.to_theta(phi))
    steps = 0
    for steps in range(1, max_steps + 1):
        if np.max(np.abs(g)) <= tol:
            break
        H = obj.hessian_phi(phi)
        try:
            np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            break
        direction = np.linalg.solve(-H, g / obj.scale)
        t, improved = 1.0, False
        for _ in range(40):
            cand = phi + t * direction
            ll_new, g_new = obj.value_grad(obj.to_theta(cand))
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        phi, ll, g = cand, ll_new, g_new
    return phi, ll, g, steps


def _bfgs(obj: _Objective, phi0, tol, max_iter, trace=None):
    n = max(obj.design.n_obs, 1)

    def f(phi):
        ll, g = obj.value_grad(obj.to_theta(phi))
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(phi)
        return -ll / n, -(g / obj.scale) / n

    callback = None
    if trace is not None:
        callback = lambda xk: trace.append(obj.loglik(obj.to_theta(xk)))  # noqa: E731
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            f, phi0, jac=True, method="BFGS", callback=callback,
            options={"gtol": min(1e-7, tol / n), "maxiter": max_iter},
        )
    return res.x, -res.fun * n, int(res.nit)


def _optimize(obj: _Objective, phi0, tol, max_iter, trace=None):
    phi, _, nit = _bfgs(obj, phi0, tol, max_iter, trace)
    phi, ll, g, steps = _newton_polish(obj, phi, tol)
    if trace is not None and steps:
        trace.append(ll)
    return phi, ll, g, nit + steps


def fit(
    family: ModelFamily,
    dataset,
    market=None,
    *,
    tol: float = 1e-6,
    max_iter: int = 500,
    n_starts: int = 8,
    seed: int = 0,
    trace: bool = False,
    max_direct_km: float | None = None,
    compute_se: bool = True,
) -> EstimationResult:
    """Fit ``family`` by maximum likelihood.

    Latent and mixed families use multistart: the first start spreads the
    fitted single-strategy coefficients over classes by +/-20 %, the rest are
    seeded random perturbations; the best log-likelihood wins. Failure to
    reach ``tol`` is reported via ``converged=False``.
    """
    design = _design_for(family, dataset, market, max_direct_km)
    if design.n_obs == 0:
        raise DataError("cannot fit an empty dataset")
    obj = _Objective(family, design)
    rng = np.random.default_rng(seed)
    k = family.n_params
    traces: list[list] = []

    def run(phi0):
        tr = [] if trace else None
        phi, ll, nit = _bfgs(obj, phi0, tol, max_iter, tr)
        traces.append(tr or [])
        return phi, ll, nit

    if family.kind in ("single", "gravity", "xgravity"):
        candidates = [run(np.zeros(k))]
        starts = 1
    else:
        base_fam = ModelFamily.single(family.active_terms)
        base_obj = _Objective(base_fam, design)
        base_phi = _optimize(base_obj, np.zeros(base_fam.n_params), tol, max_iter)[0]
        b0 = base_fam.unpack(base_obj.to_theta(base_phi)).betas[0]
        starts = max(1, n_starts)
        candidates = []
        if family.kind == "latent":
            S = family.n_strategies
            mults = np.linspace(0.8, 1.2, S)
            first = family.pack(CoefficientSet(b0[None, :] * mults[:, None], np.zeros((S - 1, 5))))
            candidates.append(run(obj.to_phi(first)))
            base = obj.to_phi(family.pack(CoefficientSet(np.tile(b0, (S, 1)), np.zeros((S - 1, 5)))))
            for _ in range(starts - 1):
                candidates.append(run(base + rng.normal(0.0, 1.0, size=k)))
            # the embedded single-strategy solution guarantees nesting
            candidates.append((base, obj.loglik(obj.to_theta(base)), 0))
        else:
            nm = int(family.mask.sum())
            first = family.pack(CoefficientSet(b0[None, :], sigmas=0.1 * np.abs(b0) + 1e-3))
            candidates.append(run(obj.to_phi(first)))
            base = obj.to_phi(first)
            for _ in range(starts - 1):
                phi = base.copy()
                phi[:nm] += rng.normal(0.0, 0.3, size=nm)
                phi[nm:] = np.abs(rng.normal(0.0, 0.5, size=nm))
                candidates.append(run(phi))

    lls = [c[1] for c in candidates]
    best = int(np.nanargmax(lls))
    phi, _, iters = candidates[best]
    phi, ll, _, steps = _newton_polish(obj, phi, tol)
    iters += steps
    best_trace = traces[best] if best < len(traces) else []
    if trace and steps:
        best_trace.append(ll)
    coeffs = family.unpack(obj.to_theta(phi)).canonical()
    theta = family.pack(coeffs)
    ll, g = obj.value_grad(theta)
    grad_norm = float(np.max(np.abs(g))) if len(g) else 0.0
    se = None
    diagnostic = ""
    if compute_se:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SingularHessianWarning)
            se = _standard_errors(obj, theta)
        if se is None:
            diagnostic = "; ".join(str(w.message) for w in caught) or "singular information matrix"
    ic = information_criteria(ll, k, design.n_obs)
    return EstimationResult(
        family=family,
        coefficients=coeffs,
        loglik=ll,
        std_errors=se,
        aic=ic.aic,
        bic=ic.bic,
        converged=grad_norm <= tol,
        grad_norm=grad_norm,
        n_obs=design.n_obs,
        k_params=k,
        starts_used=starts,
        iterations=iters,
        start_logliks=[float(x) for x in lls],
        trace=best_trace,
        diagnostic=diagnostic,
    )


def select_strategy_count(dataset, market=None, ks=(1, 2, 3), criterion: str = "aic", **fit_opts):
    """Fit latent models over ``ks`` strategies; return ``(best_k, {k: result})``."""
    results = {}
    design = build_design(dataset, market) if not isinstance(dataset, Design) else dataset
    for k in ks:
        fam = ModelFamily.single() if k == 1 else ModelFamily.latent(k)
        results[k] = fit(fam, design, **fit_opts)
    best = min(results, key=lambda k: getattr(results[k], criterion))
    return best, results
