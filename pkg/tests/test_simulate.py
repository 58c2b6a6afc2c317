import numpy as np
import pytest
from scipy import stats

import ctmdp
from ctmdp import (PotlachPolicy, StationaryPolicy, check_lyapunov_bound,
                   estimate_average_reward, estimate_ergodicity,
                   simulate_path)
from ctmdp.simulate import MAX_JUMPS, stream

import oracles


@pytest.fixture(scope="module")
def mm20():
    return ctmdp.build("mmn0", {"lambda": 1, "mu1": 2, "mu2": 2.5,
                                "N": 2, "G": 1})


def zero_policy(m):
    return StationaryPolicy(choice=np.zeros(m.n, dtype=np.int64))


def test_reproducible_paths(mm20):
    f = zero_policy(mm20)
    a = simulate_path(mm20, f, 0, 500.0, seed=11)
    b = simulate_path(mm20, f, 0, 500.0, seed=11)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.states, b.states)
    assert a.reward_integral == b.reward_integral


def test_different_seeds_differ(mm20):
    f = zero_policy(mm20)
    a = simulate_path(mm20, f, 0, 500.0, seed=11)
    b = simulate_path(mm20, f, 0, 500.0, seed=12)
    assert not np.array_equal(a.times, b.times)


def test_absorbing_state_single_segment():
    m = ctmdp.CtmdpModel(
        states=ctmdp.StateSpace(size=1),
        actions=ctmdp.ActionSets(sets=(((0.0,),),)),
        kernel=ctmdp.RateKernel([[[(0, 0.0)]]]),
        rewards=ctmdp.RewardTable(table=((3.0,),)),
    )
    rec = simulate_path(m, zero_policy(m), 0, 10.0, seed=0)
    assert rec.times.tolist() == [0.0]
    assert rec.reward_integral == pytest.approx(30.0)


def test_reward_integral_matches_segments(mm20):
    f = zero_policy(mm20)
    rec = simulate_path(mm20, f, 0, 200.0, seed=4)
    r = np.array([mm20.rewards.rate(int(s), 0) for s in rec.states])
    ends = np.append(rec.times[1:], rec.horizon)
    assert rec.reward_integral == pytest.approx(float(r @ (ends - rec.times)))


def test_state_at_reconstruction(mm20):
    rec = simulate_path(mm20, zero_policy(mm20), 0, 50.0, seed=8)
    for t in (0.0, 10.0, 49.9):
        i = np.searchsorted(rec.times, t, side="right") - 1
        assert rec.state_at(t) == rec.states[i]
    with pytest.raises(ValueError):
        rec.state_at(51.0)


def test_holding_times_exponential(mm20):
    # holding times in state 0 against Exponential(lambda=1), KS at 1%
    f = zero_policy(mm20)
    rec = simulate_path(mm20, f, 0, 30000.0, seed=21)
    ends = np.append(rec.times[1:], rec.horizon)
    hold = (ends - rec.times)[:-1]          # last segment is censored
    in0 = hold[np.array(rec.states[:-1]) == 0]
    assert len(in0) >= 10 ** 4
    d, _ = stats.kstest(in0[:10 ** 4], "expon", args=(0, 1.0))
    assert d < 1.63 / np.sqrt(10 ** 4)      # 1% critical value


def test_jump_frequencies_match_rates():
    m = ctmdp.build("birth_death", {"lambda": 1, "mu1": 3, "mu2": 4,
                                    "p1": 0.4, "N": 10, "G": 1})
    f = zero_policy(m)
    rec = simulate_path(m, f, 2, 20000.0, seed=13)
    st_, nxt = np.array(rec.states[:-1]), np.array(rec.states[1:])
    from2 = nxt[st_ == 2]
    counts = {y: int(np.sum(from2 == y)) for y in (0, 1, 3)}
    total = len(from2)
    # rates out of 2: down1 = 0.6*3*2, down2 = 0.4*3*2, up = 2
    probs = np.array([2.4, 3.6, 2.0]) / 8.0
    for y, p in zip((0, 1, 3), probs):
        se = np.sqrt(p * (1 - p) / total)
        assert abs(counts[y] / total - p) <= 3 * se


def test_average_reward_constant_is_exact(mm20):
    flat_r = ctmdp.CtmdpModel(
        states=mm20.states, actions=mm20.actions, kernel=mm20.kernel,
        rewards=ctmdp.RewardTable(table=((2.0,),) * mm20.n),
    )
    rep = estimate_average_reward(flat_r, zero_policy(mm20), 0, 100.0, 5,
                                  seed=1)
    assert rep.mean == pytest.approx(2.0)
    assert rep.se == pytest.approx(0.0)


def test_occupation_matches_stationary_distribution(mm20):
    f = zero_policy(mm20)
    rep = estimate_average_reward(mm20, f, 0, 1e5, 4, seed=2)
    pi = oracles.stationary_distribution(mm20, f)
    assert np.max(np.abs(rep.occupation - pi)) <= 0.01
    assert abs(rep.mean - 6.0 / 13.0) <= 3 * rep.se + 1e-12


def test_report_names_rng_contract(mm20):
    rep = estimate_average_reward(mm20, zero_policy(mm20), 0, 10.0, 2, seed=5)
    assert rep.rng["family"] == "numpy.random.Philox"
    assert rep.rng["seed"] == 5
    g1 = stream(5, 0).random(3)
    g2 = stream(5, 0).random(3)
    assert np.array_equal(g1, g2)


def test_explosion_guard_raises():
    m = ctmdp.build("mmn0", {"lambda": 50, "mu1": 60, "mu2": 61, "N": 2,
                             "G": 1})
    with pytest.raises(ctmdp.SimulationError):
        simulate_path(m, zero_policy(m), 0, 1e6, seed=0, max_jumps=100)
    assert MAX_JUMPS == 10 ** 8


def test_lyapunov_bound_trivial_weight(mm20):
    lyap = ctmdp.LyapunovData(w=np.ones(mm20.n), c=1.0, b=1.0, M=3.0,
                              M_q=5.0)
    m = ctmdp.CtmdpModel(states=mm20.states, actions=mm20.actions,
                         kernel=mm20.kernel, rewards=mm20.rewards,
                         lyapunov=lyap)
    rep = check_lyapunov_bound(m, zero_policy(m), 0, [0.5, 1.0, 2.0], 10,
                               seed=3)
    assert rep.passed


def test_checkpoint_means_ordered_in_start_state():
    m = ctmdp.build("birth_death", {"lambda": 1, "mu1": 3, "mu2": 4,
                                    "N": 25, "G": 1})
    f = zero_policy(m)
    cps = [0.25, 0.5, 1.0, 2.0]
    lo = check_lyapunov_bound(m, f, 5, cps, 120, seed=6)
    hi = check_lyapunov_bound(m, f, 15, cps, 120, seed=6)
    ses = np.sqrt(lo.ses ** 2 + hi.ses ** 2)
    assert np.all(lo.means <= hi.means + 3 * ses)


def test_ergodicity_decay_visible(mm20):
    f = zero_policy(mm20)
    probe = np.arange(mm20.n, dtype=float)
    rep = estimate_ergodicity(mm20, f, [probe], (2, 0),
                              [0.25, 0.5, 1.0, 2.0, 4.0], 400, seed=9)
    assert rep.empirical
    assert not rep.flagged
    assert rep.rho_hat > 0


def test_ergodicity_no_mixing_flagged():
    m = ctmdp.CtmdpModel(
        states=ctmdp.StateSpace(size=2),
        actions=ctmdp.ActionSets(sets=(((0.0,),), ((0.0,),))),
        kernel=ctmdp.RateKernel([[[(0, 0.0)]], [[(1, 0.0)]]]),
        rewards=ctmdp.RewardTable(table=((1.0,), (0.0,))),
    )
    rep = estimate_ergodicity(m, zero_policy(m), [np.array([0.0, 1.0])],
                              (0, 1), [0.5, 1.0, 2.0], 20, seed=10)
    assert rep.flagged


def test_transient_mean_matrix_exponential_crosscheck(mm20):
    # simulated E x(t) against the matrix-exponential oracle
    f = zero_policy(mm20)
    probe = np.arange(mm20.n, dtype=float)
    from ctmdp.simulate import _checkpoint_samples
    samples = _checkpoint_samples(mm20, f, 2, [0.5], 600, 17,
                                  lambda s: probe[s])
    ref = oracles.transient_mean(mm20, f, 2, probe, 0.5)
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean() - ref) <= 3 * se + 1e-12


def test_potlach_path_and_drift():
    proc = ctmdp.build("potlach", {"d": 2, "lambda": 2.0})
    pol = PotlachPolicy(matrix=np.full((2, 2), 0.5), q=np.zeros(2))
    rec = simulate_path(proc, pol, [1.0, 1.0], 3.0, seed=14)
    assert rec.states.shape[1] == 2
    assert np.all(rec.states >= 0)
    assert proc.total_rate == 2.0
    assert proc.drift_constant == pytest.approx(0.5)
    rep = check_lyapunov_bound(proc, pol, np.array([5.0, 5.0]),
                               [0.5, 1.0, 2.0, 4.0], 300, seed=15)
    assert rep.passed
