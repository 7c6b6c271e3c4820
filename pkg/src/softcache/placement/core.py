"""Placement types and the three hit-ratio objectives.

All objectives share the exponential meeting model: a user meets any
given small cell within the deadline ``T`` with probability
``1 - exp(-lambda * T)``, independently across cells.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConstraintViolation, InvalidParameter, WrongCase

__all__ = [
    'AccessModel',
    'PlacementVector',
    'SolveReport',
    'p_miss',
    'g_base',
    'g_sch1',
    'g_sch2',
    'grad_base',
    'grad_sch1',
    'grad_sch2',
    'as_counts',
]

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class AccessModel:
    """Exponential meeting rate ``lam`` (1/s) and access deadline ``ttl`` (s)."""

    lam: float
    ttl: float

    def __post_init__(self):
        if not (self.lam > 0 and self.ttl > 0):
            raise InvalidParameter("meeting rate and TTL must both be > 0")

    @property
    def lam_t(self):
        return self.lam * self.ttl

    @classmethod
    def from_product(cls, lam_t):
        """Model with ``ttl = 1`` so that ``lam * ttl == lam_t``."""
        return cls(float(lam_t), 1.0)


@dataclass(frozen=True, eq=False)
class PlacementVector:
    """Replica counts ``n`` over ``M`` cells of capacity ``C`` each.

    ``partial`` holds, per content, the size fraction of one extra partial
    copy (fractional integerization); it is ``None`` otherwise.
    """

    n: np.ndarray
    M: int
    C: int
    partial: np.ndarray = None

    def __post_init__(self):
        n = np.array(self.n, dtype=float).ravel()
        if self.M < 1 or self.C < 1:
            raise InvalidParameter("M and C must be >= 1")
        if not np.all(np.isfinite(n)):
            raise ConstraintViolation("placement has non-finite entries")
        if np.any(n < -FEAS_TOL) or np.any(n > self.M + FEAS_TOL):
            raise ConstraintViolation(f"replica counts must lie in [0, M={self.M}]")
        used = n.sum()
        if self.partial is not None:
            part = np.array(self.partial, dtype=float).ravel()
            if part.shape != n.shape or np.any(part < 0) or np.any(part >= 1):
                raise ConstraintViolation("partial fractions must lie in [0, 1)")
            if np.any(n + (part > 0) > self.M + FEAS_TOL):
                raise ConstraintViolation("partial copy would exceed M cells")
            part.flags.writeable = False
            object.__setattr__(self, 'partial', part)
            used += part.sum()
        if used > self.M * self.C + FEAS_TOL:
            raise ConstraintViolation(
                f"total replicas {used:.6g} exceed capacity M*C={self.M * self.C}")
        n = np.clip(n, 0.0, self.M)
        n.flags.writeable = False
        object.__setattr__(self, 'n', n)

    @property
    def K(self):
        return self.n.size

    @property
    def capacity(self):
        return self.M * self.C

    @property
    def holders(self):
        """Number of cells holding any (full or partial) copy of each content."""
        if self.partial is None:
            return self.n
        return self.n + (self.partial > 0)

    def is_integer(self):
        return bool(np.all(self.n == np.round(self.n)))


@dataclass(frozen=True)
class SolveReport:
    objective_value: float
    iterations: int
    kkt_residual: float
    rho: float
    converged: bool = True

    def as_record(self):
        return {
            'objective': self.objective_value,
            'rho': self.rho,
            'iterations': self.iterations,
            'kkt_residual': self.kkt_residual,
            'converged': self.converged,
        }


def as_counts(placement, K=None):
    """Replica-count array from a PlacementVector or an array-like."""
    if isinstance(placement, PlacementVector):
        n = placement.n
    else:
        n = np.asarray(placement, dtype=float).ravel()
        if np.any(n < -FEAS_TOL) or not np.all(np.isfinite(n)):
            raise ConstraintViolation("replica counts must be finite and >= 0")
    if K is not None and n.size != K:
        raise InvalidParameter(f"placement has {n.size} entries, catalog has {K}")
    return n


def _lam_t(model):
    return model.lam_t if isinstance(model, AccessModel) else float(model)


def p_miss(n_holders, model):
    """Probability of meeting none of ``n_holders`` caches before the deadline."""
    n = np.asarray(n_holders, dtype=float)
    if np.any(n < 0):
        raise InvalidParameter("number of holders must be >= 0")
    out = np.exp(-_lam_t(model) * n)
    return float(out) if out.ndim == 0 else out


def g_base(catalog, placement, model):
    """Hit ratio without soft hits: ``sum_i p_i (1 - exp(-lam T N_i))``."""
    p = catalog.popularity
    n = as_counts(placement, p.size)
    return float(np.dot(p, -np.expm1(-_lam_t(model) * n)))


def _require_case(U, case):
    if U.case != case:
        raise WrongCase(f"objective needs a Case {case} graph, got Case {U.case}")


def g_sch1(catalog, U, placement, model):
    """Soft-hit ratio, Case 1: any related content is a full hit."""
    _require_case(U, 1)
    p = catalog.popularity
    n = as_counts(placement, p.size)
    exposure = n + U.adjacency() @ n
    return float(np.dot(p, -np.expm1(-_lam_t(model) * exposure)))


def g_sch2(catalog, U, placement, model):
    """Expected utility, Case 2: related content is worth ``c`` < 1.

    The requested content is looked for until the deadline; a related one
    only counts when the original was not met.
    """
    _require_case(U, 2)
    p = catalog.popularity
    n = as_counts(placement, p.size)
    a = _lam_t(model)
    related = U.adjacency() @ n
    own_hit = -np.expm1(-a * n)
    soft = U.c * np.exp(-a * n) * -np.expm1(-a * related)
    return float(np.dot(p, own_hit + soft))


def grad_base(catalog, placement, model):
    a = _lam_t(model)
    n = as_counts(placement, catalog.K)
    return a * catalog.popularity * np.exp(-a * n)


def grad_sch1(catalog, U, placement, model):
    """``dg/dN_m = lam T sum_i p_i u_im exp(-lam T sum_j N_j u_ij)``."""
    _require_case(U, 1)
    a = _lam_t(model)
    n = as_counts(placement, catalog.K)
    I = U.indicator()
    w = catalog.popularity * np.exp(-a * (I @ n))
    return a * (I.T @ w)


def grad_sch2(catalog, U, placement, model):
    """``dg/dN_m = lam T [p_m (1-c) e^{-lam T N_m} + c sum_i p_i I_im e^{-lam T (I N)_i}]``."""
    _require_case(U, 2)
    a = _lam_t(model)
    c = U.c
    p = catalog.popularity
    n = as_counts(placement, p.size)
    I = U.indicator()
    w = p * np.exp(-a * (I @ n))
    return a * (p * (1 - c) * np.exp(-a * n) + c * (I.T @ w))
