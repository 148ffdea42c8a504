"""Data containers and the penalized objective for integrative multivariate
regression.

Several datasets are modeled jointly.  Dataset m carries a response matrix
Y (n_m x q), a block of covariates X (n_m x p) shared by every dataset, and
an optional block of dataset-specific covariates Z (n_m x r_m).  The fitted
model is

    Y^m ~ 1 alpha_m' + X^m B^m + Z^m C^m

where the shared-covariate coefficients B^m are tied across datasets through
a group penalty on the vectors (B^1[j,k], ..., B^M[j,k]), so a shared
covariate is selected for a response in all datasets or in none, and the
specific coefficients C^m carry an entrywise l1 penalty.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DatasetBlock",
    "IntegratedDataset",
    "HyperParams",
    "ModelFit",
    "residual_matrix",
    "predict",
    "group_norms",
    "objective",
]


def _as_readonly_matrix(a, name, n_rows=None):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("%s must be a 2-d array, got shape %s" % (name, (a.shape,)))
    if not np.all(np.isfinite(a)):
        raise ValueError("%s contains non-finite entries" % name)
    if n_rows is not None and a.shape[0] != n_rows:
        raise ValueError(
            "%s has %d rows, expected %d" % (name, a.shape[0], n_rows)
        )
    view = a.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class DatasetBlock:
    """One dataset: responses plus shared and specific covariate blocks.

    Parameters
    ----------
    Y : array, shape (n, q)
        Responses.
    X : array, shape (n, p)
        Covariates shared across datasets.  p may be zero.
    Z : array, shape (n, r), optional
        Dataset-specific covariates.  Omitted or r = 0 means the dataset
        contributes no specific block.
    """

    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray = None

    def __post_init__(self):
        Y = _as_readonly_matrix(self.Y, "Y")
        n = Y.shape[0]
        if n < 1 or Y.shape[1] < 1:
            raise ValueError("Y must have at least one row and one column")
        X = _as_readonly_matrix(self.X, "X", n_rows=n)
        Z = self.Z
        if Z is None:
            Z = np.zeros((n, 0))
        Z = _as_readonly_matrix(Z, "Z", n_rows=n)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def q(self):
        return self.Y.shape[1]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def r(self):
        return self.Z.shape[1]


@dataclass(frozen=True)
class IntegratedDataset:
    """An ordered collection of datasets sharing p covariates and q responses."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if len(blocks) < 1:
            raise ValueError("need at least one dataset")
        for b in blocks:
            if not isinstance(b, DatasetBlock):
                raise TypeError("blocks must be DatasetBlock instances")
        p, q = blocks[0].p, blocks[0].q
        for i, b in enumerate(blocks):
            if b.p != p:
                raise ValueError(
                    "dataset %d has %d shared covariates, expected %d" % (i, b.p, p)
                )
            if b.q != q:
                raise ValueError(
                    "dataset %d has %d responses, expected %d" % (i, b.q, q)
                )
        object.__setattr__(self, "blocks", blocks)

    @property
    def M(self):
        return len(self.blocks)

    @property
    def p(self):
        return self.blocks[0].p

    @property
    def q(self):
        return self.blocks[0].q

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, m):
        return self.blocks[m]


@dataclass(frozen=True)
class HyperParams:
    """Penalty levels: lam on shared-coefficient groups, gamma on specific
    coefficients, rho the ADMM step parameter."""

    lam: float
    gamma: float
    rho: float = 1.0

    def __post_init__(self):
        for name in ("lam", "gamma", "rho"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError("%s must be finite" % name)
            object.__setattr__(self, name, v)
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("penalties must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def _as_coef(a, name, shape):
    a = np.asarray(a, dtype=float)
    if a.shape != shape:
        raise ValueError("%s has shape %s, expected %s" % (name, a.shape, shape))
    view = a.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class ModelFit:
    """Fitted coefficients for every dataset.

    alpha[m] is the intercept vector (q,), B[m] the shared-covariate
    coefficients (p x q) and C[m] the specific-covariate coefficients
    (r_m x q).  support_B marks the entries of B that are nonzero; for fits
    produced by the consensus solver the nonzero pattern of B is identical
    across datasets, so a single p x q matrix describes all of them.
    """

    alpha: tuple
    B: tuple
    C: tuple
    support_B: np.ndarray = field(init=False)
    support_C: tuple = field(init=False)

    def __post_init__(self):
        alpha = tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.alpha)
        M = len(alpha)
        if M < 1 or len(self.B) != M or len(self.C) != M:
            raise ValueError("alpha, B and C must have one entry per dataset")
        q = alpha[0].shape[0]
        p = np.asarray(self.B[0]).shape[0]
        B = tuple(_as_coef(b, "B[%d]" % m, (p, q)) for m, b in enumerate(self.B))
        C = tuple(
            _as_coef(c, "C[%d]" % m, (np.asarray(c).shape[0], q))
            for m, c in enumerate(self.C)
        )
        for m, a in enumerate(alpha):
            if a.shape[0] != q:
                raise ValueError("alpha[%d] has length %d, expected %d" % (m, len(a), q))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if p:
            support = np.zeros((p, q), dtype=bool)
            for b in B:
                support |= b != 0
        else:
            support = np.zeros((0, q), dtype=bool)
        support.flags.writeable = False
        object.__setattr__(self, "support_B", support)
        supports_c = []
        for c in C:
            s = c != 0
            s.flags.writeable = False
            supports_c.append(s)
        object.__setattr__(self, "support_C", tuple(supports_c))

    @property
    def M(self):
        return len(self.alpha)

    @property
    def q(self):
        return self.alpha[0].shape[0]

    @property
    def p(self):
        return self.B[0].shape[0]

    def support_is_homogeneous(self):
        """True when every dataset shares one nonzero pattern in B."""
        base = self.B[0] != 0
        return all(np.array_equal(b != 0, base) for b in self.B[1:])


def _check_fit_matches(data, fit):
    if fit.M != data.M:
        raise ValueError("fit has %d datasets, data has %d" % (fit.M, data.M))
    if fit.p != data.p or fit.q != data.q:
        raise ValueError(
            "fit dimensions (p=%d, q=%d) do not match data (p=%d, q=%d)"
            % (fit.p, fit.q, data.p, data.q)
        )
    for m, block in enumerate(data):
        if fit.C[m].shape[0] != block.r:
            raise ValueError(
                "fit C[%d] has %d rows, dataset has r=%d"
                % (m, fit.C[m].shape[0], block.r)
            )


def predict(block, alpha, B, C):
    """Fitted values 1 alpha' + X B + Z C for one dataset."""
    return alpha[None, :] + block.X @ B + block.Z @ C


def residual_matrix(block, alpha, B, C):
    """Residuals Y - 1 alpha' - X B - Z C for one dataset."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape[0] != block.q:
        raise ValueError("alpha has length %d, expected %d" % (alpha.shape[0], block.q))
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    if B.shape != (block.p, block.q):
        raise ValueError("B has shape %s, expected %s" % (B.shape, (block.p, block.q)))
    if C.shape != (block.r, block.q):
        raise ValueError("C has shape %s, expected %s" % (C.shape, (block.r, block.q)))
    return block.Y - predict(block, alpha, B, C)


def group_norms(B_list):
    """l2 norms of the cross-dataset coefficient groups.

    Entry (j, k) is || (B^1[j,k], ..., B^M[j,k]) ||_2.  Returns a p x q
    matrix.
    """
    stacked = np.stack([np.asarray(b, dtype=float) for b in B_list], axis=0)
    return np.sqrt((stacked * stacked).sum(axis=0))


def objective(data, fit, hp):
    """Penalized objective.

    Sum over datasets of the scaled squared-error loss
    (1 / 2 n_m) ||Y - 1 alpha' - X B - Z C||_F^2, plus lam times the sum of
    cross-dataset group norms of B, plus gamma times the entrywise l1 norm
    of every C.
    """
    _check_fit_matches(data, fit)
    loss = 0.0
    for m, block in enumerate(data):
        R = residual_matrix(block, fit.alpha[m], fit.B[m], fit.C[m])
        loss += 0.5 / block.n * float((R * R).sum())
    pen_b = float(group_norms(fit.B).sum()) if data.p else 0.0
    pen_c = sum(float(np.abs(c).sum()) for c in fit.C)
    return loss + hp.lam * pen_b + hp.gamma * pen_c
