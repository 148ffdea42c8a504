"""Regenerate the committed test fixtures under tests/data/.

Run from the repository root:

    python3 tools/make_fixtures.py

Two datasets are produced:

* toy/      two small datasets (the second without specific covariates) plus
            expected.json, the unpenalized normal-equations solution computed
            here by least squares.  Fitting with both penalties at zero must
            reproduce it.
* highdim/  a single dataset with 22 rows, 200 shared and 150 specific
            covariate columns, and a sparse planted signal, for exercising
            cross-validation when covariates far outnumber rows.

Cell values are written with repr(), which round-trips float64 exactly, so
the oracle computed from the in-memory arrays is also the oracle for the
parsed files.
"""

import json
import os

import numpy as np

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
DATA = os.path.join(ROOT, "tests", "data")


def write_csv(path, header, mat):
    lines = [",".join(header)]
    for row in np.atleast_2d(mat):
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def names(prefix, k):
    return ["%s%d" % (prefix, j + 1) for j in range(k)]


def make_toy():
    out = os.path.join(DATA, "toy")
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(20240817)
    expected = {"alpha": [], "B": [], "C": []}
    specs = [(12, 2), (14, 0)]
    for m, (n, r) in enumerate(specs):
        X = rng.standard_normal((n, 3))
        Z = rng.standard_normal((n, r))
        B = np.array([[1.0, -0.5], [0.0, 2.0], [0.7, 0.0]])
        C = np.array([[1.5, 0.0], [0.0, -1.0]])[:r]
        Y = 0.5 + X @ B + Z @ C + 0.3 * rng.standard_normal((n, 2))
        write_csv(os.path.join(out, "y%d.csv" % m), names("resp", 2), Y)
        write_csv(os.path.join(out, "x%d.csv" % m), names("x", 3), X)
        if r:
            write_csv(os.path.join(out, "z%d.csv" % m), names("z", r), Z)
        W = np.hstack([np.ones((n, 1)), X, Z])
        theta = np.linalg.lstsq(W, Y, rcond=None)[0]
        expected["alpha"].append(theta[0].tolist())
        expected["B"].append(theta[1:4].tolist())
        expected["C"].append(theta[4:].tolist())
    with open(os.path.join(out, "expected.json"), "w") as fh:
        json.dump(expected, fh, indent=2, sort_keys=True)
        fh.write("\n")


def make_highdim():
    out = os.path.join(DATA, "highdim")
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(20240818)
    n, p, r = 22, 200, 150
    X = rng.standard_normal((n, p))
    Z = rng.standard_normal((n, r))
    B = np.zeros((p, 2))
    B[0] = [2.0, 0.0]
    B[1] = [0.0, 2.0]
    B[2] = [1.5, 1.5]
    B[3] = [-1.0, 1.0]
    C = np.zeros((r, 2))
    C[0] = [1.5, 0.0]
    C[1] = [0.0, -1.5]
    C[2] = [1.0, 1.0]
    Y = X @ B + Z @ C + 0.5 * rng.standard_normal((n, 2))
    write_csv(os.path.join(out, "y.csv"), names("resp", 2), Y)
    write_csv(os.path.join(out, "x.csv"), names("x", p), X)
    write_csv(os.path.join(out, "z.csv"), names("z", r), Z)


if __name__ == "__main__":
    make_toy()
    make_highdim()
    print("fixtures written under", os.path.normpath(DATA))
