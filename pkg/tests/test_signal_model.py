import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flutterbayes.aeroelastic import ModalSolution, modal_solve
from flutterbayes.errors import InvalidParameters, NonPositiveVariance, ZeroSignal
from flutterbayes.signal_model import (
    EnvelopeParameters,
    FreeDecayRecord,
    NoiseModel,
    clean_response,
    default_time_grid,
    envelope_from_initial_condition,
    log_likelihood,
    read_record,
    synthesize_record,
    wrap_phase,
    write_record,
)


@pytest.fixture(scope="module")
def truth(nominal):
    return envelope_from_initial_condition(nominal, 32.4)


def test_cosine_quarter_periods():
    t = np.array([0.0, math.pi / 2, math.pi])
    env = EnvelopeParameters(1.0, 0.0, 0.0, 0.0)
    u = clean_response(env, ModalSolution(1.0, 0.0, 3.0, 0.0), t)
    assert u == pytest.approx([1.0, 0.0, -1.0], abs=1e-15)


def test_exponential_halving():
    beta = math.log(2)
    env = EnvelopeParameters(1.0, 0.0, 0.0, 0.0)
    u = clean_response(env, ModalSolution(2 * math.pi, beta, 5.0, 0.0), np.array([0.0, 1.0, 2.0]))
    assert u == pytest.approx([1.0, 0.5, 0.25], rel=1e-12)


@given(a1=st.floats(-2, 2), a2=st.floats(-2, 2), b1=st.floats(-3, 3), b2=st.floats(-3, 3),
       w1=st.floats(0.5, 30), w2=st.floats(0.5, 30), be1=st.floats(0, 2), be2=st.floats(0, 2))
def test_label_swap_invariance(a1, a2, b1, b2, w1, w2, be1, be2):
    t = default_time_grid(50)
    env = EnvelopeParameters(a1, a2, b1, b2)
    modal = ModalSolution(w1, be1, w2, be2)
    assert clean_response(env.swapped(), modal.swapped(), t) == pytest.approx(
        clean_response(env, modal, t), rel=1e-12, abs=1e-12)


def test_wrap_phase_range():
    b = np.linspace(-20, 20, 1001)
    w = wrap_phase(b)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert np.allclose(np.cos(w), np.cos(b)) and np.allclose(np.sin(w), np.sin(b))
    assert wrap_phase(-math.pi) == pytest.approx(math.pi)


def test_default_grid():
    t = default_time_grid()
    assert t.size == 200 and t[1] - t[0] == pytest.approx(0.01) and t[0] == 0.0


def test_envelope_reproduces_initial_condition(nominal):
    for dof, q0 in (("heave", 0.01), ("pitch", 0.05)):
        env, modal = envelope_from_initial_condition(nominal, 27.0, dof=dof)
        assert clean_response(env, modal, np.array([0.0]))[0] == pytest.approx(q0, rel=1e-10)
        assert (modal.omega_1, modal.beta_1) == pytest.approx(
            (modal_solve(nominal, 27.0).omega_1, modal_solve(nominal, 27.0).beta_1), rel=1e-12)


def test_envelope_zero_initial_velocity(nominal):
    env, modal = envelope_from_initial_condition(nominal, 37.8, dof="pitch")
    h = 1e-6
    u = clean_response(env, modal, np.array([0.0, h, 2 * h]))
    deriv = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    assert abs(deriv) < 1e-5


def test_noise_level(truth):
    env, modal = truth
    t = np.arange(100_000) / 100.0
    rec = synthesize_record(env, modal, t, 0.12, 5)
    clean = clean_response(env, modal, t)
    rms = math.sqrt(np.mean(clean**2))
    assert np.std(rec.u - clean) == pytest.approx(0.12 * rms, rel=0.01)
    assert rec.gamma_true == pytest.approx((0.12 * rms) ** 2, rel=1e-12)


def test_noise_reproducible_and_seed_sensitive(truth):
    env, modal = truth
    t = default_time_grid()
    a = synthesize_record(env, modal, t, 0.12, 7)
    b = synthesize_record(env, modal, t, 0.12, 7)
    c = synthesize_record(env, modal, t, 0.12, 8)
    assert np.array_equal(a.u, b.u)
    assert not np.any(a.u == c.u)


def test_zero_signal_rejected():
    env = EnvelopeParameters(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ZeroSignal):
        synthesize_record(env, ModalSolution(1.0, 0.1, 2.0, 0.1, 10.0), default_time_grid(), 0.1, 0)


def test_record_validation():
    with pytest.raises(InvalidParameters):
        FreeDecayRecord(t=np.array([0.0, 0.0]), u=np.zeros(2), U=1.0, gamma_true=1.0)
    with pytest.raises(InvalidParameters):
        FreeDecayRecord(t=np.array([0.0, 1.0]), u=np.zeros(3), U=1.0, gamma_true=1.0)
    with pytest.raises(NonPositiveVariance):
        NoiseModel(0.0)


def test_single_sample_likelihood():
    env = EnvelopeParameters(1.0, 0.0, 0.0, 0.0)
    modal = ModalSolution(1.0, 0.0, 2.0, 0.0)
    rec = FreeDecayRecord(t=np.array([0.0]), u=np.array([2.0]), U=0.0, gamma_true=1.0)
    assert log_likelihood(rec, env, modal, 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5, rel=1e-15)
    with pytest.raises(NonPositiveVariance):
        log_likelihood(rec, env, modal, 0.0)


def test_noiseless_likelihood_local_maximum(truth):
    env, modal = truth
    t = default_time_grid()
    rec = synthesize_record(env, modal, t, 0.0, None)
    gamma = 1e-6
    best = log_likelihood(rec, env, modal, gamma)
    x = np.array([env.a_1, env.a_2, env.b_1, env.b_2, modal.omega_1, modal.omega_2, modal.beta_1, modal.beta_2])
    for k in range(8):
        for step in np.linspace(-0.05, 0.05, 11):
            if step == 0:
                continue
            y = x.copy()
            y[k] *= 1 + step
            e = EnvelopeParameters(*y[:4])
            m = ModalSolution(y[4], y[6], y[5], y[7], modal.U)
            assert log_likelihood(rec, e, m, gamma) < best


def test_likelihood_additive(truth):
    env, modal = truth
    t = default_time_grid()
    r1 = synthesize_record(env, modal, t, 0.12, 1)
    r2 = synthesize_record(env, modal, t, 0.12, 2)
    joined = FreeDecayRecord(t=np.concatenate([t, t + 10.0]),
                             u=np.concatenate([r1.u, clean_response(env, modal, t + 10.0)
                                               + (r2.u - clean_response(env, modal, t))]),
                             U=r1.U, gamma_true=r1.gamma_true)
    shifted = FreeDecayRecord(t=t + 10.0, u=joined.u[t.size:], U=r1.U, gamma_true=r1.gamma_true)
    g = r1.gamma_true
    total = log_likelihood(r1, env, modal, g) + log_likelihood(shifted, env, modal, g)
    assert log_likelihood(joined, env, modal, g) == pytest.approx(total, rel=1e-12)


def test_perturbed_frequency_lowers_likelihood(truth):
    env, modal = truth
    rec = synthesize_record(env, modal, default_time_grid(), 0.0, None)
    bumped = ModalSolution(modal.omega_1 * 1.001, modal.beta_1, modal.omega_2, modal.beta_2)
    assert log_likelihood(rec, env, bumped, 1e-6) < log_likelihood(rec, env, modal, 1e-6)


def test_record_round_trip_bit_exact(tmp_path, truth):
    env, modal = truth
    rec = synthesize_record(env, modal, default_time_grid(), 0.12, 42)
    path = tmp_path / "rec.csv"
    write_record(rec, path)
    back = read_record(path)
    assert np.array_equal(back.t, rec.t) and np.array_equal(back.u, rec.u)
    assert back.U == rec.U and back.gamma_true == rec.gamma_true and back.seed == 42


def test_record_arrays_read_only(truth):
    env, modal = truth
    rec = synthesize_record(env, modal, default_time_grid(), 0.12, 0)
    with pytest.raises(ValueError):
        rec.u[0] = 1.0
