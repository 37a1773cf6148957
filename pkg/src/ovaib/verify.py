"""Seeded numerical sweeps certifying the information-theoretic identities and
bounds the objective relies on.

Every check returns a dict with ``name``, ``cases``, ``passed`` (count),
``max_violation``, ``seeds`` and ``failures`` (one record per failing case,
naming the seed and the offending quantity).
"""
import numpy as np

from . import info_oracle as io
from .linalg import ridge_project
from .losses import LossConfig, population_infonce_m

TOL = 1e-9
KL_TOL = 1e-10
GRID_TOL = 1e-6
INFONCE_TOL = 1e-6
DEFAULT_MS = (2, 3, 4)


def _report(name, seeds):
    return {"name": name, "cases": 0, "passed": 0, "max_violation": 0.0, "seeds": list(seeds), "failures": []}


def _record(rep, violation, tol, **context):
    rep["cases"] += 1
    rep["max_violation"] = max(rep["max_violation"], float(violation))
    if violation <= tol:
        rep["passed"] += 1
    else:
        rep["failures"].append({"violation": float(violation), **context})


def sweep_joints(M, count=200, max_alphabet=4):
    """Yield ``(seed, joint)`` with alphabet sizes in ``2..max_alphabet``."""
    for seed in range(count):
        rng = np.random.default_rng([M, seed])
        sizes = rng.integers(2, max_alphabet + 1, size=M)
        yield seed, io.random_joint(sizes, rng)


def check_joint_sweeps(ms=DEFAULT_MS, count=200, tol=TOL):
    """Decomposition, sandwich, Han, nonnegativity and (for M=2) degeneracy."""
    reps = {k: _report(k, range(count)) for k in ("decomposition", "sandwich", "han", "nonnegativity")}
    if 2 in ms:
        reps["m2_degeneracy"] = _report("m2_degeneracy", range(count))
    for M in ms:
        for seed, j in sweep_joints(M, count):
            s = io.ova_mi_sum(j)
            tc = io.total_correlation(j)
            dtc = io.dual_total_correlation(j)
            _record(reps["decomposition"], abs(s - (tc + dtc)), tol, M=M, seed=seed, quantity="ova_mi_sum - (tc + dtc)")
            sw = io.check_sandwich(j, tol)
            quantity = "dtc below lower bound" if sw["lower"] > sw["dtc"] else "dtc above upper bound"
            _record(reps["sandwich"], sw["violation"], tol, M=M, seed=seed, quantity=quantity)
            han = io.check_han(j, tol)
            _record(reps["han"], han["violation"], tol, M=M, seed=seed, quantity="joint entropy")
            raw = io.unclamped_quantities(j)
            name = min(raw, key=raw.get)
            _record(reps["nonnegativity"], max(0.0, -raw[name]), 1e-12, M=M, seed=seed, quantity=name)
            if M == 2:
                mi = io.mutual_information(j, [0], [1])
                _record(reps["m2_degeneracy"], max(abs(tc - mi), abs(dtc - mi)), tol, M=M, seed=seed, quantity="tc/dtc vs mi")
    return list(reps.values())


def check_proposition_one(count=100, tol=KL_TOL):
    """KL to the product of the other modalities minus the constant equals the
    scaled squared distance to the mean of their means."""
    rep = _report("proposition1", range(count))
    configs = [(M, d) for M in (2, 3, 5) for d in (2, 16)]
    for seed in range(count):
        M, d = configs[seed % len(configs)]
        rng = np.random.default_rng([7, seed])
        var = float(rng.uniform(0.2, 3.0))
        means = rng.normal(scale=2.0, size=(M, d))
        p = io.IsotropicGaussian(means[0], var)
        q = io.gaussian_product([io.IsotropicGaussian(mu, var) for mu in means[1:]])
        lhs = io.gaussian_kl(p, q) - io.minimality_constant(d, M)
        rhs = (M - 1) / (2 * var) * np.sum((means[0] - means[1:].mean(axis=0)) ** 2)
        _record(rep, abs(lhs - rhs), tol, M=M, d=d, seed=seed, quantity="kl - C_M")
    return rep


def grid_product_moments(means, variance, width=12.0, points=40001):
    """Mean and variance per coordinate of the renormalized product of 1-D
    Gaussian densities, by trapezoidal integration on a uniform grid."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    sd = np.sqrt(variance)
    out_mean, out_var = [], []
    for col in means.T:
        x = np.linspace(col.min() - width * sd, col.max() + width * sd, points)
        logd = np.sum(-((x[:, None] - col[None, :]) ** 2) / (2 * variance), axis=1)
        dens = np.exp(logd - logd.max())
        z = np.trapezoid(dens, x)
        mu = np.trapezoid(x * dens, x) / z
        out_mean.append(mu)
        out_var.append(np.trapezoid((x - mu) ** 2 * dens, x) / z)
    return np.array(out_mean), np.array(out_var)


def check_gaussian_product(count=12, tol=GRID_TOL):
    rep = _report("gaussian_product_grid", range(count))
    for seed in range(count):
        rng = np.random.default_rng([11, seed])
        k = int(rng.integers(1, 5))
        var = float(rng.uniform(0.5, 3.0))
        means = rng.normal(size=(k, 3))
        prod = io.gaussian_product([io.IsotropicGaussian(mu, var) for mu in means])
        g_mean, g_var = grid_product_moments(means, var)
        err = max(np.max(np.abs(prod.mean - g_mean)), np.max(np.abs(prod.variance - g_var)))
        _record(rep, err, tol, k=k, seed=seed, quantity="product mean/variance")
    return rep


def check_dv(count=50, critics=20, tol=TOL):
    """Random critics never exceed the MI; the log-likelihood-ratio critic attains it."""
    rep = _report("dv_bound", range(count))
    for seed in range(count):
        rng = np.random.default_rng([13, seed])
        M = int(rng.integers(2, 4))
        sizes = rng.integers(2, 4, size=M)
        j = io.random_joint(sizes, rng)
        a, b = [0], list(range(1, M))
        mi = io.mutual_information(j, a, b)
        shape = (sizes[0], int(np.prod(sizes[1:])))
        worst = max(io.dv_objective(j, a, b, rng.normal(scale=3.0, size=shape)) - mi for _ in range(critics))
        _record(rep, max(worst, 0.0), tol, seed=seed, quantity="random critic above MI")
        gap = abs(io.dv_objective(j, a, b, io.optimal_critic(j, a, b)) - mi)
        _record(rep, gap, tol, seed=seed, quantity="optimal critic gap")
    return rep


def check_infonce_bound(count=24, batch_size=64, tol=INFONCE_TOL):
    """Large-batch contrastive loss on finite embedding systems against the exact MI.

    Checks ``-L - log N <= I`` and the sharper ``-L + log(N - 1) <= I``.
    """
    rep = _report("infonce_bound", range(count))
    taus = (0.01, 0.1, 1.0)
    for seed in range(count):
        rng = np.random.default_rng([17, seed])
        M = 2 + seed % 3
        sizes = rng.integers(2, 4, size=M)
        j = io.random_joint(sizes, rng)
        codebooks = [rng.normal(size=(s, 4)) for s in sizes]
        cfg = LossConfig(tau=taus[seed % len(taus)])
        m = int(rng.integers(0, M))
        loss, _ = population_infonce_m(j, codebooks, m, cfg, batch_size)
        mi = io.mutual_information(j, [m], [i for i in range(M) if i != m])
        _record(rep, max(-loss - np.log(batch_size) - mi, 0.0), tol, M=M, seed=seed, quantity="-L - log N above MI")
        _record(rep, max(-loss + np.log(batch_size - 1) - mi, 0.0), tol, M=M, seed=seed, quantity="-L + log(N-1) above MI")
    return rep


def hat_matrix_projection(A, z, lam):
    """Reference projection through the explicit d x d hat matrix."""
    k = A.shape[1]
    hat = A @ np.linalg.inv(A.T @ A + lam * np.eye(k)) @ A.T
    return hat @ z


def check_projection(count=100, lam=1e-8, tol=1e-10):
    rep = _report("projection_oracle", range(count))
    for seed in range(count):
        rng = np.random.default_rng([19, seed])
        d = int(rng.integers(2, 17))
        k = int(rng.integers(1, min(4, d - 1) + 1))
        A = rng.normal(size=(d, k))
        z = rng.normal(size=d)
        err = np.max(np.abs(ridge_project(A, z, lam) - hat_matrix_projection(A, z, lam)))
        _record(rep, err, tol, d=d, k=k, seed=seed, quantity="ridge vs hat matrix")
    return rep


def run_checks(scope="all", ms=DEFAULT_MS, count=200):
    checks = []
    if scope in ("oracle", "all"):
        checks += check_joint_sweeps(ms, count)
        checks.append(check_proposition_one())
        checks.append(check_gaussian_product())
        checks.append(check_dv())
    if scope in ("losses", "all"):
        checks.append(check_infonce_bound())
        checks.append(check_projection())
    ok = all(not c["failures"] for c in checks)
    return {"ok": ok, "scope": scope, "ms": list(ms), "checks": checks}
