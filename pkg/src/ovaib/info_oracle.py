"""Exact information quantities on finite joints and isotropic Gaussians.

All quantities are in nats. Probabilities below ``ZERO_PROB`` are treated as
exact zeros so that ``0 log 0 = 0`` holds deterministically.
"""
from dataclasses import dataclass
import numpy as np

from .errors import DomainError, ShapeError

ZERO_PROB = 1e-15
SUM_TOL = 1e-12
CHECK_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteJoint:
    """Joint pmf over ``M`` finite variables, one tensor axis per variable."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim < 1:
            raise ShapeError("a joint needs at least one variable")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_flat(cls, alphabet_sizes, flat):
        """Build from a row-major flat sequence."""
        flat = np.asarray(flat, dtype=np.float64)
        sizes = tuple(int(s) for s in alphabet_sizes)
        if flat.size != int(np.prod(sizes)):
            raise ShapeError(f"{flat.size} entries for alphabet sizes {sizes}")
        return cls(flat.reshape(sizes))

    @property
    def num_vars(self):
        return self.probs.ndim

    @property
    def alphabet_sizes(self):
        return self.probs.shape

    def marginal(self, subset):
        subset = self._indices(subset)
        drop = tuple(i for i in range(self.num_vars) if i not in subset)
        return self.probs.sum(axis=drop)

    def _indices(self, subset):
        idx = sorted({int(i) for i in subset})
        if not idx:
            raise DomainError("variable subset must be non-empty")
        for i in idx:
            if not 0 <= i < self.num_vars:
                raise DomainError(f"variable index {i} out of range for M={self.num_vars}")
        return idx


@dataclass(frozen=True)
class IsotropicGaussian:
    """``N(mean, variance * I)``."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mu = np.array(self.mean, dtype=np.float64).ravel()
        if mu.size == 0 or not np.all(np.isfinite(mu)):
            raise DomainError("mean must be a non-empty finite vector")
        if not np.isfinite(self.variance) or self.variance <= 0:
            raise DomainError(f"variance must be positive, got {self.variance}")
        mu.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dim(self):
        return self.mean.size


def _plogp_sum(p):
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p >= ZERO_PROB]
    return float(-np.sum(p * np.log(p)))


def _clamp(x):
    return max(float(x), 0.0)


def entropy(j, subset=None):
    """Shannon entropy of the marginal over ``subset`` (all variables if None)."""
    if subset is None:
        subset = range(j.num_vars)
    return _clamp(_plogp_sum(j.marginal(subset)))


def conditional_entropy(j, target, given):
    """``H(target | given)``; ``given`` may be empty."""
    target = {target} if np.isscalar(target) else set(target)
    given = set(given)
    if target & given:
        raise DomainError(f"target {sorted(target)} overlaps conditioning set {sorted(given)}")
    if not given:
        return entropy(j, target)
    return _clamp(entropy(j, target | given) - entropy(j, given))


def mutual_information(j, a, b):
    """``I(a; b)`` between disjoint non-empty variable sets."""
    a = {a} if np.isscalar(a) else set(a)
    b = {b} if np.isscalar(b) else set(b)
    if not a or not b:
        raise DomainError("both variable sets must be non-empty")
    if a & b:
        raise DomainError(f"variable sets overlap: {sorted(a & b)}")
    return _clamp(entropy(j, a) + entropy(j, b) - entropy(j, a | b))


def _rest(j, m):
    return [i for i in range(j.num_vars) if i != m]


def unclamped_quantities(j):
    """Entropy, TC, DTC and every one-vs-rest MI computed from raw marginal
    entropies, without the final clamp at zero. Used to certify that the
    clamp only ever absorbs rounding noise."""
    M = j.num_vars
    h = lambda s: _plogp_sum(j.marginal(s))
    h_all = h(range(M))
    singles = [h([m]) for m in range(M)]
    loo = [h(_rest(j, m)) for m in range(M)]
    out = {
        "entropy": h_all,
        "tc": sum(singles) - h_all,
        "dtc": h_all - sum(h_all - hr for hr in loo),
    }
    for m in range(M):
        out[f"mi_{m}_rest"] = singles[m] + loo[m] - h_all
    return out


def total_correlation(j):
    """``sum_m H(m) - H(all)``."""
    return _clamp(sum(entropy(j, [m]) for m in range(j.num_vars)) - entropy(j))


def dual_total_correlation(j):
    """``H(all) - sum_m H(m | rest)``."""
    return _clamp(
        entropy(j) - sum(conditional_entropy(j, m, _rest(j, m)) for m in range(j.num_vars))
    )


def ova_mi_sum(j):
    """One-vs-all mutual information sum ``sum_m I(m; rest)``."""
    if j.num_vars < 2:
        raise DomainError("one-vs-all sum needs at least two variables")
    return sum(mutual_information(j, [m], _rest(j, m)) for m in range(j.num_vars))


def check_sandwich(j, tol=CHECK_TOL):
    """Evaluate ``(1/M) S <= DTC <= ((M-1)/M) S`` with ``S = ova_mi_sum``."""
    M = j.num_vars
    s = ova_mi_sum(j)
    dtc = dual_total_correlation(j)
    lower, upper = s / M, (M - 1) * s / M
    return {
        "lower": lower,
        "dtc": dtc,
        "upper": upper,
        "violation": max(lower - dtc, dtc - upper, 0.0),
        "holds": lower <= dtc + tol and dtc <= upper + tol,
    }


def check_han(j, tol=CHECK_TOL):
    """Han's inequality ``H(all) <= (1/(M-1)) sum_m H(rest of m)``."""
    M = j.num_vars
    if M < 2:
        raise DomainError("Han's inequality needs at least two variables")
    lhs = entropy(j)
    rhs = sum(entropy(j, _rest(j, m)) for m in range(M)) / (M - 1)
    return {"lhs": lhs, "rhs": rhs, "violation": max(lhs - rhs, 0.0), "holds": lhs <= rhs + tol}


def dv_objective(j, a, b, critic):
    """Donsker-Varadhan value ``E_P[T] - log E_Q[exp T]`` for ``I(a; b)``.

    ``P`` is the joint of ``(a, b)`` and ``Q`` the product of its two
    marginals. ``critic`` is an array over the ``(a..., b...)`` value grid,
    with axes ordered as the sorted indices of ``a`` then ``b``.
    """
    a, b = sorted(set(a)), sorted(set(b))
    p = _pair_joint(j, a, b)
    T = np.asarray(critic, dtype=np.float64).reshape(p.shape)
    q = np.outer(p.sum(axis=1), p.sum(axis=0))
    top = T.max()
    log_eq = top + np.log(np.sum(q * np.exp(T - top)))
    return float(np.sum(p * T) - log_eq)


def optimal_critic(j, a, b):
    """``log dP/dQ`` on the support of ``P`` (very negative elsewhere)."""
    a, b = sorted(set(a)), sorted(set(b))
    p = _pair_joint(j, a, b)
    q = np.outer(p.sum(axis=1), p.sum(axis=0))
    T = np.full(p.shape, -745.0)
    mask = p >= ZERO_PROB
    T[mask] = np.log(p[mask] / q[mask])
    return T


def _pair_joint(j, a, b):
    """Joint of ``(a, b)`` flattened to a 2-D table."""
    if set(a) & set(b):
        raise DomainError("variable sets overlap")
    marg = j.marginal(a + b)
    # marginal() keeps the original axis order; reorder to (a..., b...)
    order = sorted(a + b)
    perm = [order.index(i) for i in a + b]
    marg = np.transpose(marg, perm)
    na = int(np.prod(marg.shape[: len(a)]))
    return marg.reshape(na, -1)


def gaussian_product(components, variance=None):
    """Normalized product of isotropic Gaussians sharing one variance.

    Returns ``N(mean of the means, variance / k)``.
    """
    components = list(components)
    if not components:
        raise DomainError("need at least one component")
    var = components[0].variance if variance is None else float(variance)
    dim = components[0].dim
    for c in components:
        if c.dim != dim:
            raise ShapeError(f"dimension mismatch: {c.dim} vs {dim}")
        if not np.isclose(c.variance, var, rtol=1e-12, atol=0.0):
            raise DomainError(f"components must share variance {var}, got {c.variance}")
    means = np.stack([c.mean for c in components])
    return IsotropicGaussian(means.mean(axis=0), var / len(components))


def gaussian_kl(p, q):
    """``KL(p || q)`` for isotropic Gaussians of equal dimension."""
    if p.dim != q.dim:
        raise ShapeError(f"dimension mismatch: {p.dim} vs {q.dim}")
    d = p.dim
    diff = q.mean - p.mean
    ratio = p.variance / q.variance
    kl = 0.5 * (d * ratio + diff @ diff / q.variance - d - d * np.log(ratio))
    return _clamp(kl)


def minimality_constant(d, M):
    """Mean-independent part of the one-vs-rest KL under shared variance."""
    if M < 2:
        raise DomainError("need at least two modalities")
    return 0.5 * d * ((M - 1) - 1 - np.log(M - 1))


def random_joint(alphabet_sizes, rng):
    """Full-support joint from normalized i.i.d. exponential entries."""
    w = rng.exponential(size=tuple(alphabet_sizes))
    return DiscreteJoint(w / w.sum())


def to_bits(nats):
    return nats / np.log(2.0)

