"""Shared fixtures and independent oracles used across the test suite.

The reference solver here is deliberately written from the objective
definition alone (accelerated proximal gradient on the stacked variables),
sharing no code with the production ADMM path, so the two can check each
other.
"""

import numpy as np

from intmr.model import DatasetBlock, IntegratedDataset, ModelFit


def make_data(
    rng,
    M=2,
    n=30,
    p=4,
    q=2,
    r=2,
    noise=0.5,
    sparse_truth=True,
    intercept=None,
):
    """Random well-conditioned instance with a sparse shared-support truth."""
    if np.isscalar(r):
        r = [r] * M
    B_true = np.zeros((p, q))
    if sparse_truth and p:
        k = max(1, p // 2)
        B_true[:k] = rng.standard_normal((k, q))
    elif p:
        B_true = rng.standard_normal((p, q))
    blocks = []
    C_true = []
    for m in range(M):
        X = rng.standard_normal((n, p))
        Z = rng.standard_normal((n, r[m]))
        Cm = np.zeros((r[m], q))
        if r[m]:
            Cm[0] = rng.standard_normal(q)
        C_true.append(Cm)
        a = rng.standard_normal(q) if intercept is None else np.full(q, intercept)
        scale = rng.uniform(0.5, 1.5)
        Y = a + X @ (B_true * scale) + Z @ Cm + noise * rng.standard_normal((n, q))
        blocks.append(DatasetBlock(Y=Y, X=X, Z=Z))
    return IntegratedDataset(tuple(blocks))


def random_fit(rng, data, density=0.7):
    """Random coefficients shaped for `data` (no homogeneity structure)."""
    alpha, B, C = [], [], []
    for block in data:
        alpha.append(rng.standard_normal(data.q))
        b = rng.standard_normal((data.p, data.q))
        b[rng.random((data.p, data.q)) > density] = 0.0
        B.append(b)
        c = rng.standard_normal((block.r, data.q))
        if block.r:
            c[rng.random((block.r, data.q)) > density] = 0.0
        C.append(c)
    return ModelFit(alpha=tuple(alpha), B=tuple(B), C=tuple(C))


# ---------------------------------------------------------------------------
# objective, written out independently of the package implementation


def objective_reference(data, alpha, B, C, lam, gamma):
    total = 0.0
    for m, block in enumerate(data):
        R = block.Y - alpha[m][None, :] - block.X @ B[m] - block.Z @ C[m]
        total += (R * R).sum() / (2.0 * block.n)
    if data.p:
        stacked = np.stack(B, axis=0)
        total += lam * np.sqrt((stacked**2).sum(axis=0)).sum()
    total += gamma * sum(np.abs(c).sum() for c in C)
    return float(total)


# ---------------------------------------------------------------------------
# accelerated proximal gradient reference solver


def _grad(data, alpha, B, C):
    ga = np.zeros_like(alpha)
    gB = np.zeros_like(B)
    gC = [np.zeros_like(c) for c in C]
    for m, block in enumerate(data):
        R = block.Y - alpha[m][None, :] - block.X @ B[m] - block.Z @ C[m]
        ga[m] = -R.sum(axis=0) / block.n
        gB[m] = -(block.X.T @ R) / block.n
        if block.r:
            gC[m] = -(block.Z.T @ R) / block.n
    return ga, gB, gC


def _prox(B, C, t_lam, t_gam):
    if B.size:
        norms = np.sqrt((B**2).sum(axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > 0, np.maximum(1.0 - t_lam / norms, 0.0), 0.0)
        B = scale[None] * B
    C = [np.sign(c) * np.maximum(np.abs(c) - t_gam, 0.0) for c in C]
    return B, C


def prox_gradient_reference(data, lam, gamma, max_iter=200000, ftol=1e-14):
    """FISTA with function-value restart on the stacked objective."""
    M, p, q = data.M, data.p, data.q
    L = 0.0
    for block in data:
        W = np.hstack([np.ones((block.n, 1)), block.X, block.Z])
        s = np.linalg.norm(W, 2)
        L = max(L, s * s / block.n)
    t = 1.0 / L

    alpha = np.zeros((M, q))
    B = np.zeros((M, p, q))
    C = [np.zeros((block.r, q)) for block in data]
    ya, yB, yC = alpha.copy(), B.copy(), [c.copy() for c in C]
    tk = 1.0
    f_prev = objective_reference(data, alpha, B, C, lam, gamma)
    stall = 0
    for _ in range(max_iter):
        ga, gB, gC = _grad(data, ya, yB, yC)
        a_new = ya - t * ga
        B_new, C_new = _prox(
            yB - t * gB, [yc - t * gc for yc, gc in zip(yC, gC)], t * lam, t * gamma
        )
        f_new = objective_reference(data, a_new, B_new, C_new, lam, gamma)
        if f_new > f_prev:  # restart momentum
            ya, yB, yC = alpha.copy(), B.copy(), [c.copy() for c in C]
            tk = 1.0
            ga, gB, gC = _grad(data, ya, yB, yC)
            a_new = ya - t * ga
            B_new, C_new = _prox(
                yB - t * gB, [yc - t * gc for yc, gc in zip(yC, gC)], t * lam, t * gamma
            )
            f_new = objective_reference(data, a_new, B_new, C_new, lam, gamma)
        tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        w = (tk - 1.0) / tk_new
        ya = a_new + w * (a_new - alpha)
        yB = B_new + w * (B_new - B)
        yC = [cn + w * (cn - c) for cn, c in zip(C_new, C)]
        alpha, B, C, tk = a_new, B_new, C_new, tk_new
        if abs(f_new - f_prev) < ftol * max(1.0, abs(f_new)):
            stall += 1
            if stall >= 50:
                break
        else:
            stall = 0
        f_prev = f_new
    return alpha, B, C, objective_reference(data, alpha, B, C, lam, gamma)


# ---------------------------------------------------------------------------
# prox-characterization oracles


def scalar_prox_oracle(a, b, grids=4001):
    """Minimize 0.5 (x - a)^2 + b |x| by dense grid + local refinement."""
    lo, hi = -abs(a) - b - 1.0, abs(a) + b + 1.0
    for _ in range(4):
        xs = np.linspace(lo, hi, grids)
        vals = 0.5 * (xs - a) ** 2 + b * np.abs(xs)
        i = int(np.argmin(vals))
        lo, hi = xs[max(0, i - 1)], xs[min(grids - 1, i + 1)]
    return 0.5 * (xs[i] - a) ** 2 + b * abs(xs[i])


def vector_prox_oracle(c, d, grids=4001):
    """Minimize 0.5 ||x - c||^2 + d ||x|| over scalings of c (the minimizer
    is always a nonnegative scaling of c), by grid + refinement on the
    scale."""
    nc = float(np.linalg.norm(c))
    lo, hi = 0.0, nc + d + 1.0
    for _ in range(4):
        ts = np.linspace(lo, hi, grids)
        vals = 0.5 * (ts - nc) ** 2 + d * ts
        i = int(np.argmin(vals))
        lo, hi = ts[max(0, i - 1)], ts[min(grids - 1, i + 1)]
    return 0.5 * (ts[i] - nc) ** 2 + d * ts[i]
