"""Hyperparameter selection by K-fold cross-validation.

Folds are drawn within each dataset so every fold sees a balanced share of
every dataset.  The score of a grid cell is the prediction criterion

    (1/K) sum_k sum_m (1 / 2 n_m(k)) || Y_held - fitted on the rest ||_F^2

i.e. the same scaled squared-error loss the objective uses, without the
penalty terms.  Lambda paths are swept from the largest value down with warm
starts, one chain per (fold, gamma) pair, so the expensive small-penalty
fits start near a solution.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import DatasetBlock, IntegratedDataset, HyperParams, predict
from .admm import AdmmSolver, SolverOptions

__all__ = [
    "FoldAssignment",
    "CvGrid",
    "CvResult",
    "make_folds",
    "default_grid",
    "cv_score",
    "select",
]


@dataclass(frozen=True)
class FoldAssignment:
    """Per-dataset fold labels in 1..K."""

    labels: tuple
    K: int
    seed: int

    def __post_init__(self):
        labels = tuple(np.asarray(l, dtype=int) for l in self.labels)
        for l in labels:
            if l.size and (l.min() < 1 or l.max() > self.K):
                raise ValueError("fold labels must lie in 1..K")
        object.__setattr__(self, "labels", labels)


def make_folds(data, K, seed):
    """Assign each row of each dataset to one of K balanced folds.

    Shuffles rows within every dataset with a generator seeded by `seed`,
    then deals them out so fold sizes within a dataset differ by at most
    one.  Requires 2 <= K <= min_m n_m.
    """
    K = int(K)
    n_min = min(b.n for b in data)
    if K < 2 or K > n_min:
        raise ValueError("K must satisfy 2 <= K <= %d, got %d" % (n_min, K))
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xF01D)))
    labels = []
    for block in data:
        lab = np.zeros(block.n, dtype=int)
        order = rng.permutation(block.n)
        for i, row in enumerate(order):
            lab[row] = i % K + 1
        labels.append(lab)
    return FoldAssignment(labels=tuple(labels), K=K, seed=int(seed))


@dataclass(frozen=True)
class CvGrid:
    """Descending, strictly positive lambda and gamma paths."""

    lambdas: tuple
    gammas: tuple

    def __post_init__(self):
        for name in ("lambdas", "gammas"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError("%s must be nonempty" % name)
            if any(v <= 0 or not np.isfinite(v) for v in vals):
                raise ValueError("%s must be finite and strictly positive" % name)
            if any(a < b for a, b in zip(vals, vals[1:])):
                raise ValueError("%s must be sorted descending" % name)
            object.__setattr__(self, name, vals)


def penalty_ceiling(data):
    """Smallest (lam, gamma) at which the intercept-only fit is stationary.

    Gradients of the loss at the intercept-only fit: lam_ref is the largest
    cross-dataset group norm over the shared covariates, gamma_ref the
    largest absolute entry over the specific covariates.
    """
    gx = np.zeros((data.M, data.p, data.q)) if data.p else None
    gamma_ref = 0.0
    for m, block in enumerate(data):
        Rc = block.Y - block.Y.mean(axis=0)[None, :]
        if data.p:
            gx[m] = (block.X.T @ Rc) / block.n
        if block.r:
            gamma_ref = max(gamma_ref, float(np.abs((block.Z.T @ Rc) / block.n).max()))
    lam_ref = float(np.sqrt((gx * gx).sum(axis=0)).max()) if data.p else 0.0
    # tiny relative bump keeps the ceiling strictly inside the all-zero
    # region, so the grid corner is intercept-only despite roundoff
    return lam_ref * (1 + 1e-6), gamma_ref * (1 + 1e-6)


def default_grid(data, n_lambdas=15, n_gammas=15, min_ratio=1e-3):
    """Log-spaced grid from the data-driven penalty ceiling downward.

    Covariate blocks that are absent (p = 0, or no dataset has specific
    covariates) get a single placeholder value since the corresponding
    penalty has no effect.
    """
    lam_ref, gamma_ref = penalty_ceiling(data)
    if lam_ref > 0:
        lambdas = tuple(np.geomspace(lam_ref, lam_ref * min_ratio, int(n_lambdas)))
    else:
        lambdas = (1.0,)
    if gamma_ref > 0:
        gammas = tuple(np.geomspace(gamma_ref, gamma_ref * min_ratio, int(n_gammas)))
    else:
        gammas = (1.0,)
    return CvGrid(lambdas=lambdas, gammas=gammas)


def _split(data, folds, k):
    """Training and held-out datasets for fold k."""
    train_blocks, held_blocks = [], []
    for m, block in enumerate(data):
        mask = folds.labels[m] == k
        if mask.all():
            raise ValueError("fold %d leaves dataset %d with no training rows" % (k, m))
        tr = DatasetBlock(Y=block.Y[~mask], X=block.X[~mask], Z=block.Z[~mask])
        he = DatasetBlock(Y=block.Y[mask], X=block.X[mask], Z=block.Z[mask]) if mask.any() else None
        train_blocks.append(tr)
        held_blocks.append(he)
    return IntegratedDataset(tuple(train_blocks)), held_blocks


def _held_out_score(fit, held_blocks):
    s = 0.0
    for m, block in enumerate(held_blocks):
        if block is None:
            continue
        R = block.Y - predict(block, fit.alpha[m], fit.B[m], fit.C[m])
        s += 0.5 / block.n * float((R * R).sum())
    return s


def cv_score(data, folds, hp, opts=None):
    """Mean over folds of the held-out prediction criterion at one (lam, gamma)."""
    if folds.K < 2:
        raise ValueError("need at least 2 folds")
    scores = []
    for k in range(1, folds.K + 1):
        train, held = _split(data, folds, k)
        solver = AdmmSolver(train, rho=hp.rho)
        rep = solver.fit(hp, opts=opts)
        scores.append(_held_out_score(rep.fit, held))
    return float(np.mean(scores))


@dataclass(frozen=True)
class CvResult:
    grid: CvGrid
    cv_matrix: np.ndarray
    best_lambda: float
    best_gamma: float
    refit: object
    folds: FoldAssignment


def _chain(solver, held, lambdas, gamma, rho, opts):
    """Sweep the lambda path at one gamma with warm starts; returns held-out
    scores per lambda."""
    out = np.empty(len(lambdas))
    init = None
    for i, lam in enumerate(lambdas):
        rep = solver.fit(HyperParams(lam=lam, gamma=gamma, rho=rho), opts=opts, init=init)
        init = rep.state
        out[i] = _held_out_score(rep.fit, held)
    return out


def select(data, grid, K=5, seed=0, opts=None, rho=1.0, threads=1):
    """Evaluate the CV criterion over the grid and refit at the winner.

    Ties within 1e-12 of the minimum resolve to the largest lambda, then the
    largest gamma.  Each (fold, gamma) pair forms an independent warm-start
    chain, so results do not depend on `threads`.
    """
    if not isinstance(data, IntegratedDataset):
        data = IntegratedDataset(tuple(data))
    if not isinstance(grid, CvGrid):
        raise TypeError("grid must be a CvGrid")
    folds = make_folds(data, K, seed)
    splits = [_split(data, folds, k) for k in range(1, folds.K + 1)]
    solvers = [AdmmSolver(train, rho=rho) for train, _ in splits]

    tasks = [(k, j) for k in range(folds.K) for j in range(len(grid.gammas))]

    def run(task):
        k, j = task
        return _chain(
            solvers[k], splits[k][1], grid.lambdas, grid.gammas[j], rho, opts
        )

    per_fold = np.zeros((folds.K, len(grid.lambdas), len(grid.gammas)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    for (k, j), col in zip(tasks, results):
        per_fold[k, :, j] = col
    cv_matrix = per_fold.mean(axis=0)

    best = float(cv_matrix.min())
    best_i = best_j = None
    # paths are descending, so the first qualifying cell in row-major order
    # carries the largest lambda, then the largest gamma
    for i in range(len(grid.lambdas)):
        for j in range(len(grid.gammas)):
            if cv_matrix[i, j] <= best + 1e-12:
                best_i, best_j = i, j
                break
        if best_i is not None:
            break
    best_lambda = grid.lambdas[best_i]
    best_gamma = grid.gammas[best_j]
    refit = AdmmSolver(data, rho=rho).fit(
        HyperParams(lam=best_lambda, gamma=best_gamma, rho=rho), opts=opts
    )
    return CvResult(
        grid=grid,
        cv_matrix=cv_matrix,
        best_lambda=best_lambda,
        best_gamma=best_gamma,
        refit=refit,
        folds=folds,
    )
