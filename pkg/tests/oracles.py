"""Independent reference computations used to check the solvers.

Everything here goes through dense linear algebra on the fixed-policy
generator and shares no code with the iterative solver path.
"""

import numpy as np

from ctmdp import CtmdpModel, StationaryPolicy


def dense_generator(model: CtmdpModel, f: StationaryPolicy) -> np.ndarray:
    """Fixed-policy generator matrix Q_f as a dense array."""
    n = model.n
    Q = np.zeros((n, n))
    for x in range(n):
        ys, rates = model.kernel.row(x, f[x])
        Q[x, ys] = rates
    return Q


def reward_vector(model: CtmdpModel, f: StationaryPolicy) -> np.ndarray:
    return np.array([model.rewards.rate(x, f[x]) for x in range(model.n)])


def discounted_value(model: CtmdpModel, f: StationaryPolicy,
                     alpha: float) -> np.ndarray:
    """Fixed-policy discounted value from the linear system
    (alpha*I - Q_f) J = r_f."""
    Q = dense_generator(model, f)
    r = reward_vector(model, f)
    return np.linalg.solve(alpha * np.eye(model.n) - Q, r)


def stationary_distribution(model: CtmdpModel,
                            f: StationaryPolicy) -> np.ndarray:
    """Stationary distribution of the fixed-policy chain (assumes it is
    irreducible on the full space)."""
    Q = dense_generator(model, f)
    n = model.n
    A = np.vstack([Q.T, np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return pi


def policy_gain(model: CtmdpModel, f: StationaryPolicy) -> float:
    pi = stationary_distribution(model, f)
    return float(pi @ reward_vector(model, f))


def transient_mean(model: CtmdpModel, f: StationaryPolicy, x0: int,
                   u, t: float) -> float:
    """E_x0 u(x(t)) via the matrix exponential of the fixed-policy
    generator (eigen/series solve, independent of the simulator)."""
    from scipy.linalg import expm
    Q = dense_generator(model, f)
    u = np.asarray(u, dtype=np.float64)
    return float((expm(Q * t) @ u)[x0])
