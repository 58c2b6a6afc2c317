"""Event-driven simulation of the controlled jump process.

Exact jump-chain construction, no time discretization. Random streams
come from the counter-based Philox generator; the stream for replication
i of a run with master seed s uses key = (s << 64) + i, which makes every
report bit-reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .families import PotlachPolicy, PotlachProcess
from .model import CtmdpModel, ModelError, StationaryPolicy

RNG_FAMILY = "numpy.random.Philox"
MAX_JUMPS = 10 ** 8


class SimulationError(RuntimeError):
    """Explosion suspected: the per-path jump-count guard was exceeded."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


def stream(seed: int, rep: int) -> np.random.Generator:
    """Replication RNG: Philox keyed by (seed, rep)."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(rep)))


def rng_info(seed: int) -> dict:
    return {"family": RNG_FAMILY, "seed": int(seed),
            "derivation": "key = (seed << 64) + replication_index"}


@dataclass
class PathRecorder:
    """One realized trajectory: jump times, visited states, action path."""

    times: np.ndarray          # segment start times, times[0] = 0
    states: np.ndarray         # state at each segment (indices, or points)
    actions: list              # action vector in force on each segment
    horizon: float
    reward_integral: float
    checkpoint_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    checkpoint_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def state_at(self, t: float):
        if t < 0 or t > self.horizon:
            raise ValueError("time outside the recorded horizon")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[i]


def _policy_tables(model: CtmdpModel, f: StationaryPolicy):
    model.check_policy(f)
    n = model.n
    exit_rates = np.empty(n)
    targets, cums = [], []
    r_f = np.empty(n)
    for x in range(n):
        ys, rates = model.kernel.row(x, f[x])
        off = ys != x
        ys_off, rates_off = ys[off], rates[off]
        lam = float(rates_off.sum())
        exit_rates[x] = lam
        targets.append(ys_off)
        cums.append(np.cumsum(rates_off) / lam if lam > 0 else rates_off)
        r_f[x] = model.rewards.rate(x, f[x])
    return exit_rates, targets, cums, r_f


def _run_tabulated(model, f, x0, horizon, rng, checkpoints=None,
                   cp_fn=None, record=False, max_jumps=MAX_JUMPS):
    """Core stepper. Returns (reward_integral, occupation_time, path pieces,
    checkpoint records); `cp_fn(state, reward_so_far)` is evaluated exactly
    at each checkpoint time."""
    exit_rates, targets, cums, r_f = _policy_tables(model, f)
    checkpoints = np.asarray(checkpoints if checkpoints is not None else [],
                             dtype=np.float64)
    cp_vals = []
    cp_i = 0
    occupation = np.zeros(model.n)
    x = int(x0)
    t = 0.0
    rint = 0.0
    times, states = [0.0], [x]
    jumps = 0
    while True:
        lam = exit_rates[x]
        dt = rng.exponential(1.0 / lam) if lam > 0 else np.inf
        t_next = min(t + dt, horizon)
        while cp_i < len(checkpoints) and checkpoints[cp_i] <= t_next:
            tc = checkpoints[cp_i]
            cp_vals.append(cp_fn(x, rint + r_f[x] * (tc - t))
                           if cp_fn else float(x))
            cp_i += 1
        rint += r_f[x] * (t_next - t)
        occupation[x] += t_next - t
        if t + dt >= horizon:
            break
        t = t_next
        u = rng.random()
        x = int(targets[x][np.searchsorted(cums[x], u)])
        jumps += 1
        if jumps > max_jumps:
            raise SimulationError(
                f"jump-count guard ({max_jumps}) exceeded; drift condition "
                f"likely violated", last_state=x)
        if record:
            times.append(t)
            states.append(x)
    return rint, occupation, (times, states) if record else None, cp_vals


def simulate_path(model, f, x0, horizon: float, seed: int,
                  checkpoints=None, cp_fn=None,
                  max_jumps: int = MAX_JUMPS) -> PathRecorder:
    """Simulate one trajectory under a stationary policy.

    Dispatches on the model type: tabulated CTMDP instances take a
    `StationaryPolicy`; the continuous-state redistribution process takes
    a `PotlachPolicy`.
    """
    rng = stream(seed, 0)
    if isinstance(model, PotlachProcess):
        return _simulate_potlach(model, f, x0, horizon, rng, checkpoints,
                                 max_jumps)
    rint, _, path, cp_vals = _run_tabulated(
        model, f, x0, horizon, rng, checkpoints=checkpoints, cp_fn=cp_fn,
        record=True, max_jumps=max_jumps)
    times, states = path
    return PathRecorder(
        times=np.array(times), states=np.array(states),
        actions=[model.actions[s][f[s]] for s in states],
        horizon=horizon, reward_integral=rint,
        checkpoint_times=np.asarray(checkpoints if checkpoints is not None
                                    else [], dtype=np.float64),
        checkpoint_values=np.array(cp_vals))


def _simulate_potlach(proc: PotlachProcess, policy: PotlachPolicy, x0,
                      horizon, rng, checkpoints, max_jumps):
    if not isinstance(policy, PotlachPolicy):
        raise ModelError("the redistribution process takes a PotlachPolicy")
    checkpoints = np.asarray(checkpoints if checkpoints is not None else [],
                             dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64).copy()
    t = 0.0
    rint = 0.0
    times, states = [0.0], [x.copy()]
    cp_vals, cp_i = [], 0
    jumps = 0
    rate = proc.total_rate
    while True:
        dt = rng.exponential(1.0 / rate)
        t_next = min(t + dt, horizon)
        while cp_i < len(checkpoints) and checkpoints[cp_i] <= t_next:
            cp_vals.append(proc.weight(x))
            cp_i += 1
        rint += proc.reward(x, policy) * (t_next - t)
        if t + dt >= horizon:
            break
        t = t_next
        x = proc.jump(x, policy, rng)
        jumps += 1
        if jumps > max_jumps:
            raise SimulationError(f"jump-count guard ({max_jumps}) exceeded",
                                  last_state=x.tolist())
        times.append(t)
        states.append(x.copy())
    return PathRecorder(times=np.array(times), states=np.array(states),
                        actions=[policy] * len(states), horizon=horizon,
                        reward_integral=rint,
                        checkpoint_times=checkpoints,
                        checkpoint_values=np.array(cp_vals))


@dataclass
class SimulationReport:
    values: np.ndarray           # per-replication time-averaged reward
    mean: float
    se: float
    occupation: np.ndarray       # pooled visit-time fractions
    horizon: float
    reps: int
    rng: dict

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "mean": self.mean,
                "se": self.se, "occupation": self.occupation.tolist(),
                "horizon": self.horizon, "reps": self.reps, "rng": self.rng}


def estimate_average_reward(model: CtmdpModel, f: StationaryPolicy, x0: int,
                            horizon: float, reps: int,
                            seed: int) -> SimulationReport:
    """Monte Carlo estimate of the long-run average reward under f."""
    values = np.empty(reps)
    occupation = np.zeros(model.n)
    for rep in range(reps):
        rng = stream(seed, rep)
        rint, occ, _, _ = _run_tabulated(model, f, x0, horizon, rng)
        values[rep] = rint / horizon
        occupation += occ
    occupation /= occupation.sum()
    se = float(values.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return SimulationReport(values=values, mean=float(values.mean()), se=se,
                            occupation=occupation, horizon=horizon, reps=reps,
                            rng=rng_info(seed))


@dataclass
class CheckpointReport:
    checkpoints: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    bounds: np.ndarray
    passed: bool
    rng: dict
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"checkpoints": self.checkpoints.tolist(),
                "means": self.means.tolist(), "ses": self.ses.tolist(),
                "bounds": self.bounds.tolist(), "passed": self.passed,
                "rng": self.rng, "detail": self.detail}


def _checkpoint_samples(model, f, x0, checkpoints, reps, seed, value_fn):
    """value_fn(state) sampled at the checkpoint times, per replication."""
    checkpoints = np.asarray(checkpoints, dtype=np.float64)
    horizon = float(checkpoints[-1]) * (1 + 1e-12)
    out = np.empty((reps, len(checkpoints)))
    for rep in range(reps):
        rng = stream(seed, rep)
        if isinstance(model, PotlachProcess):
            rec = _simulate_potlach(model, f, x0, horizon, rng, checkpoints,
                                    MAX_JUMPS)
            out[rep] = rec.checkpoint_values
        else:
            _, _, _, vals = _run_tabulated(model, f, x0, horizon, rng,
                                           checkpoints=checkpoints,
                                           cp_fn=lambda s, ri: value_fn(s))
            out[rep] = vals
    return out


def check_lyapunov_bound(model, f, x0, checkpoints, reps: int,
                         seed: int) -> CheckpointReport:
    """Empirical check of E w(x(t)) <= exp(-c t) w(x0) + b/c at checkpoints."""
    if isinstance(model, PotlachProcess):
        w0 = model.weight(x0)
        c, b = model.drift_constant, 0.0
        samples = _checkpoint_samples(model, f, x0, checkpoints, reps, seed,
                                      None)
    else:
        if model.lyapunov is None:
            raise ModelError("model carries no Lyapunov data")
        w = model.lyapunov.w
        w0 = w[int(x0)]
        c, b = model.lyapunov.c, model.lyapunov.b
        samples = _checkpoint_samples(model, f, x0, checkpoints, reps, seed,
                                      lambda s: w[s])
    checkpoints = np.asarray(checkpoints, dtype=np.float64)
    means = samples.mean(axis=0)
    ses = samples.std(axis=0, ddof=1) / np.sqrt(reps)
    bounds = np.exp(-c * checkpoints) * w0 + b / c
    passed = bool(np.all(means <= bounds + 3.0 * ses))
    return CheckpointReport(checkpoints=checkpoints, means=means, ses=ses,
                            bounds=bounds, passed=passed, rng=rng_info(seed),
                            detail={"c": c, "b": b, "w_x0": float(w0)})


@dataclass
class ErgodicityReport:
    checkpoints: np.ndarray
    diffs: dict                  # probe index -> per-start mean |E u - mu(u)|
    rho_hat: float | None
    R_hat: float | None
    empirical: bool
    flagged: bool
    rng: dict

    def to_dict(self) -> dict:
        return {"checkpoints": self.checkpoints.tolist(),
                "diffs": {str(k): v.tolist() for k, v in self.diffs.items()},
                "rho_hat": self.rho_hat, "R_hat": self.R_hat,
                "empirical": self.empirical, "flagged": self.flagged,
                "rng": self.rng}


def estimate_ergodicity(model: CtmdpModel, f: StationaryPolicy, probes,
                        x0_pair, checkpoints, reps: int,
                        seed: int) -> ErgodicityReport:
    """Empirical decay rate of |E_x u(x(t)) - mu_f(u)| for probe functions.

    mu_f is estimated from the pooled occupation measure of a long run;
    the decay exponent is fit by least squares on the log gaps above the
    two-standard-error noise floor. Reported values carry an explicit
    empirical flag; nothing here is a proof.
    """
    checkpoints = np.asarray(checkpoints, dtype=np.float64)
    occ = estimate_average_reward(model, f, int(x0_pair[0]),
                                  horizon=float(checkpoints[-1]) * 10,
                                  reps=4, seed=seed + 1).occupation
    diffs = {}
    pts, vals = [], []
    for pi, u in enumerate(probes):
        u = np.asarray(u, dtype=np.float64)
        mu_u = float(occ @ u)
        per_start = []
        for x0 in x0_pair:
            samples = _checkpoint_samples(model, f, int(x0), checkpoints,
                                          reps, seed, lambda s: u[s])
            means = samples.mean(axis=0)
            ses = samples.std(axis=0, ddof=1) / np.sqrt(reps)
            gap = np.abs(means - mu_u)
            per_start.append(gap)
            keep = gap > 2.0 * ses
            pts.extend(checkpoints[keep].tolist())
            vals.extend(np.log(gap[keep]).tolist())
        diffs[pi] = np.stack(per_start)
    if len(pts) >= 2 and np.ptp(pts) > 0:
        slope, intercept = np.polyfit(pts, vals, 1)
        rho_hat = float(-slope)
        R_hat = float(np.exp(intercept))
        flagged = rho_hat <= 0
    else:
        rho_hat, R_hat, flagged = None, None, True
    return ErgodicityReport(checkpoints=checkpoints, diffs=diffs,
                            rho_hat=rho_hat, R_hat=R_hat, empirical=True,
                            flagged=flagged, rng=rng_info(seed))
