"""Independent reference implementations used to cross-check the library.

Everything here trades speed for obviousness: exhaustive sweeps, dense
eigendecompositions, a generic QP solver, and arbitrary-precision sums.
None of it shares code with the package under test.
"""

import math

import mpmath
import numpy as np


def deer_midpoint_sweep(bonafide, attack):
    """D-EER by brute force: evaluate every midpoint threshold, then
    interpolate linearly where the apcer/bpcer step curves cross.

    Classification rule: attack iff score >= threshold.
    """
    bonafide = [float(v) for v in bonafide]
    attack = [float(v) for v in attack]
    distinct = sorted(set(bonafide) | set(attack))
    thresholds = [distinct[0] - 1.0]
    for lo, hi in zip(distinct, distinct[1:]):
        thresholds.append((lo + hi) / 2.0)
    thresholds.append(distinct[-1] + 1.0)

    points = []
    for t in thresholds:
        apcer = sum(1 for v in attack if v < t) / len(attack)
        bpcer = sum(1 for v in bonafide if v >= t) / len(bonafide)
        points.append((apcer, bpcer))

    for idx, (apcer, bpcer) in enumerate(points):
        diff = apcer - bpcer
        if diff >= 0.0:
            if diff == 0.0:
                return apcer
            a0, b0 = points[idx - 1]
            a1, b1 = apcer, bpcer
            s = (b0 - a0) / ((a1 - a0) - (b1 - b0))
            return a0 + s * (a1 - a0)
    raise AssertionError("apcer never reached bpcer")


def pca_projector_eig(X):
    """Principal directions via dense eigendecomposition of the unbiased
    sample covariance.  Returns eigenvalues (descending) and eigenvectors
    as rows, for building projection operators.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    return evals[order], evecs[:, order].T


def svm_qp_primal(X, y, c_param):
    """Soft-margin linear SVM solved as a primal QP with cvxopt.

    Variables: [w (d), b (1), xi (n)].  Minimize (1/2)||w||^2 + C sum xi
    subject to y_i (w.x_i + b) >= 1 - xi_i and xi_i >= 0.
    """
    from cvxopt import matrix, solvers

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    nv = d + 1 + n

    P = np.zeros((nv, nv))
    P[:d, :d] = np.eye(d)
    q = np.zeros(nv)
    q[d + 1:] = c_param

    # -y_i (w.x_i + b) - xi_i <= -1  and  -xi_i <= 0
    G = np.zeros((2 * n, nv))
    h = np.zeros(2 * n)
    G[:n, :d] = -y[:, None] * X
    G[:n, d] = -y
    G[:n, d + 1:] = -np.eye(n)
    h[:n] = -1.0
    G[n:, d + 1:] = -np.eye(n)

    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-10
    solvers.options["reltol"] = 1e-10
    solvers.options["feastol"] = 1e-10
    sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h))
    z = np.array(sol["x"]).ravel()
    return z[:d], z[d]


def gmm_log_likelihood_mp(weights, means, variances, x, dps=50):
    """Average of nothing, just one sample's mixture log-density, summed
    naively in mpmath arbitrary precision.  ``variances`` has one row per
    component (full diagonal, already expanded for spherical models).
    """
    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        k = len(x)
        for w, mu, var in zip(weights, means, variances):
            quad = mpmath.mpf(0)
            logdet = mpmath.mpf(0)
            for j in range(k):
                diff = mpmath.mpf(float(x[j])) - mpmath.mpf(float(mu[j]))
                v = mpmath.mpf(float(var[j]))
                quad += diff * diff / v
                logdet += mpmath.log(v)
            log_comp = (
                -mpmath.mpf(k) / 2 * mpmath.log(2 * mpmath.pi)
                - logdet / 2
                - quad / 2
            )
            total += mpmath.mpf(float(w)) * mpmath.e**log_comp
        return float(mpmath.log(total))


def gaussian_nll_scale():
    """Log-density of a standard 2-D Gaussian at its mode: -ln(2 pi)."""
    return -math.log(2.0 * math.pi)
