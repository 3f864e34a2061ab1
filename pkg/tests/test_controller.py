import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptchi import controller as C
from adaptchi.errors import InfiniteResponse, InsufficientSpectrum, NoUltimateGain
from adaptchi.mps import SingularSpectrum
from oracles import pid_char_poly, quadratic_roots

ABS = dict(reference="absolute")


def spectrum_with_entropy(k: int) -> SingularSpectrum:
    """Flat spectrum of length k, entropy ln k."""
    return SingularSpectrum(np.full(k, k**-0.5))


# -- config ------------------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = C.ControllerConfig()
    assert (cfg.gains.kp, cfg.gains.ki, cfg.gains.kd) == (2.0, 0.1, 0.5)
    assert cfg.alpha_ema == 0.3 and cfg.gamma_margin == 1.2 and cfg.beta_predict == 0.4
    assert cfg.target == pytest.approx(math.log(64) - 0.5)
    for bad in (dict(chi_min=0), dict(chi_min=10, chi_max=5), dict(alpha_ema=0.0),
                dict(alpha_ema=1.5), dict(gamma_margin=0.9), dict(mode="nope")):
        with pytest.raises(ValueError):
            C.ControllerConfig(**bad)
    with pytest.raises(ValueError):
        C.PidGains(kp=-1)


# -- EMA ---------------------------------------------------------------------------


def test_ema_examples():
    st_ = C.BondControllerState(chi=4)
    C.ema_update(st_, 0.5, 0.3)
    assert st_.ema == 0.5 and st_.initialized
    st_ = C.BondControllerState(chi=4, ema=0.0, initialized=True)
    C.ema_update(st_, 1.0, 0.5)
    assert st_.ema == 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 5.0))
def test_ema_fixed_point(alpha, s):
    st_ = C.BondControllerState(chi=4)
    for _ in range(50):
        C.ema_update(st_, s, alpha)
    assert st_.ema == pytest.approx(s, abs=1e-12)
    assert len(st_.history) <= 3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(-3, 3), st.floats(-3, 3),
       st.lists(st.tuples(st.floats(0, 4), st.floats(0, 4)), min_size=1, max_size=20))
def test_ema_linearity(alpha, a, b, series):
    s1 = C.BondControllerState(chi=2)
    s2 = C.BondControllerState(chi=2)
    s3 = C.BondControllerState(chi=2)
    for x, y in series:
        C.ema_update(s1, x, alpha)
        C.ema_update(s2, y, alpha)
        C.ema_update(s3, a * x + b * y, alpha)
    assert s3.ema == pytest.approx(a * s1.ema + b * s2.ema, abs=1e-12)


def test_time_constant():
    assert C.ema_time_constant(1 - math.exp(-1)) == pytest.approx(1.0)
    assert C.ema_time_constant(0.5) == pytest.approx(1.4426950408889634)
    taus = [C.ema_time_constant(a) for a in (0.5, 0.1, 0.01, 1e-4)]
    assert all(x < y for x, y in zip(taus, taus[1:]))
    with pytest.raises(InfiniteResponse):
        C.ema_time_constant(1.0)


# -- direct map ----------------------------------------------------------------------


def test_chi_target_direct():
    assert C.chi_target_direct(math.log(4), 1.0, 1, 64) == 4
    assert C.chi_target_direct(math.log(4), 1.5, 1, 64) == 6
    assert C.chi_target_direct(10.0, 1.0, 1, 256) == 256
    assert C.chi_target_direct(0.0, 1.0, 2, 64) == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(1.0, 3.0), st.floats(0.05, 0.95))
def test_direct_mode_settles(k, gamma, alpha):
    cfg = C.ControllerConfig(mode="direct", gamma_margin=gamma, alpha_ema=alpha, chi_min=1,
                             chi_max=512, predictor_order="off")
    spec = spectrum_with_entropy(k)
    st_ = C.BondControllerState(chi=1)
    steps = math.ceil(5 * C.ema_time_constant(alpha))
    for _ in range(steps):
        chi, _ = C.controller_update(st_, spec, cfg)
    for _ in range(50):
        assert C.controller_update(st_, spec, cfg)[0] == chi
    assert chi >= math.exp(st_.ema) * gamma - 1


def test_direct_singlet():
    cfg = C.ControllerConfig(mode="direct", gamma_margin=1.0, chi_min=1)
    st_ = C.cold_start(1)
    singlet = SingularSpectrum([2**-0.5, 2**-0.5])
    for _ in range(80):
        chi, _ = C.controller_update(st_, singlet, cfg)
    assert chi == 2


# -- PID -----------------------------------------------------------------------------


def test_pid_zero_error():
    cfg = C.ControllerConfig(s_target=1.0, **ABS)
    st_ = C.BondControllerState(chi=10, initialized=True)
    C.pid_step(st_, 1.0, cfg)
    assert st_.chi == 10 and st_.last_terms.dchi == 0


def test_pid_hand_example():
    cfg = C.ControllerConfig(s_target=1.0, **ABS)
    st_ = C.BondControllerState(chi=10, prev_error=0.5, integral=0.0, initialized=True)
    C.pid_step(st_, 1.5, cfg)
    t = st_.last_terms
    assert t.p == pytest.approx(1.0) and st_.integral == pytest.approx(0.05)
    assert t.d == pytest.approx(0.0) and t.dchi == 1 and st_.chi == 11


def test_pid_anti_windup_at_ceiling():
    cfg = C.ControllerConfig(s_target=1.0, chi_max=16, **ABS)
    st_ = C.BondControllerState(chi=16, integral=0.3, initialized=True)
    C.pid_step(st_, 2.0, cfg)
    assert st_.chi == 16 and st_.integral == 0.3 and st_.last_terms.clamped


@settings(max_examples=40, deadline=None)
# kp * excess >= 0.5 so the very first step already pushes past the ceiling
@given(st.floats(0.25, 3.0), st.floats(0.01, 2.0), st.floats(0.0, 2.0))
def test_anti_windup_bound(excess, ki, drop):
    cfg = C.ControllerConfig(s_target=1.0, chi_max=32, gains=C.PidGains(2.0, ki, 0.5), **ABS)
    st_ = C.BondControllerState(chi=32, initialized=True)
    for _ in range(100):
        C.pid_step(st_, 1.0 + excess, cfg)
        assert st_.chi == 32
    assert st_.integral == 0.0
    e_after = -drop
    C.pid_step(st_, 1.0 + e_after, cfg)
    assert abs(st_.integral) <= ki * abs(e_after) + 1e-15


def test_round_half_away():
    assert [C.round_half_away(x) for x in (0.5, 1.5, -0.5, -1.5, 0.49, -2.2)] == [1, 2, -1, -2, 0, -2]


def test_multiplicative_scale():
    cfg = C.ControllerConfig(s_target=1.0, pid_scale="multiplicative", chi_ref=10, chi_max=256,
                             gains=C.PidGains(10.0, 0.0, 0.0), **ABS)
    st_ = C.BondControllerState(chi=32, initialized=True)
    C.pid_step(st_, 1.5, cfg)
    # dchi = 5 -> chi * (1 + 5/10)
    assert st_.chi == 48


def test_pid_constant_spectrum_absolute_reference():
    s = math.log(4)
    cfg = C.ControllerConfig(s_target=s, chi_min=2, chi_max=64, **ABS)
    st_ = C.cold_start(2)
    st_.chi = 12
    spec = spectrum_with_entropy(4)
    chis = [C.controller_update(st_, spec, cfg)[0] for _ in range(200)]
    assert max(chis[-50:]) - min(chis[-50:]) <= 1


def test_pid_capacity_reference_equilibrium():
    cfg = C.ControllerConfig(gamma_margin=3.0, chi_min=2, chi_max=64)
    st_ = C.cold_start(2)
    spec = spectrum_with_entropy(3)
    chis = [C.controller_update(st_, spec, cfg)[0] for _ in range(200)]
    assert max(chis[-50:]) == min(chis[-50:])
    # inside the proportional dead band around gamma * e^S = 9
    assert abs(math.log(chis[-1] / 9.0)) * cfg.gains.kp < 0.5 + cfg.gains.ki * 50


# -- prediction ----------------------------------------------------------------------


def test_predict_examples():
    st_ = C.BondControllerState(chi=2)
    st_.history.extend([0.4, 0.5])
    assert C.predict_entropy(st_, 1.0).value == pytest.approx(0.6)
    assert C.predict_entropy(st_, 0.0).value == 0.5
    st_ = C.BondControllerState(chi=2)
    st_.history.extend([0.5, 0.5, 0.5])
    assert C.predict_entropy(st_, 0.8, "quadratic").value == 0.5
    short = C.BondControllerState(chi=2)
    short.history.append(0.3)
    p = C.predict_entropy(short, 0.4)
    assert p.reactive_fallback and p.value == 0.3


def test_predict_floor_at_zero():
    st_ = C.BondControllerState(chi=2)
    st_.history.extend([1.0, 0.1])
    assert C.predict_entropy(st_, 5.0).value == 0.0


spectra = st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=30).map(
    lambda v: SingularSpectrum(np.sort(np.array(v))[::-1]))


@settings(max_examples=60, deadline=None)
@given(st.lists(spectra, min_size=1, max_size=15), st.sampled_from(C.MODES),
       st.integers(1, 8), st.integers(0, 60), st.floats(0.0, 2.0))
def test_clamp_containment(seq, mode, lo, span, beta):
    cfg = C.ControllerConfig(mode=mode, chi_min=lo, chi_max=lo + span, beta_predict=beta,
                             gains=C.PidGains(9.0, 3.0, 4.0))
    st_ = C.cold_start(lo)
    for spec in seq:
        chi, _ = C.controller_update(st_, spec, cfg)
        assert lo <= chi <= lo + span


@settings(max_examples=40, deadline=None)
@given(st.lists(spectra, min_size=1, max_size=15), st.sampled_from(["direct", "pid"]))
def test_beta_zero_is_reactive(seq, mode):
    a = C.ControllerConfig(mode=mode, beta_predict=0.0, predictor_order="linear")
    b = C.ControllerConfig(mode=mode, predictor_order="off")
    sa, sb = C.cold_start(2), C.cold_start(2)
    for spec in seq:
        ca, _ = C.controller_update(sa, spec, a)
        cb, _ = C.controller_update(sb, spec, b)
        assert ca == cb
        assert sa.last_trace.s_pred == sb.last_trace.s_pred


@settings(max_examples=40, deadline=None)
@given(st.lists(spectra, min_size=1, max_size=15), st.integers(2, 40),
       st.sampled_from(C.REFERENCES))
def test_zero_gains_identity(seq, chi0, reference):
    cfg = C.ControllerConfig(gains=C.PidGains(0, 0, 0), reference=reference)
    st_ = C.cold_start(2)
    st_.chi = chi0
    for spec in seq:
        assert C.controller_update(st_, spec, cfg)[0] == chi0


def test_fixed_and_threshold_modes():
    spec = SingularSpectrum([1.0, 1e-3, 1e-12])
    assert C.controller_update(C.cold_start(2), spec, C.ControllerConfig(mode="fixed"))[0] == 64
    thr = C.ControllerConfig(mode="threshold", eps_trunc=1e-10, chi_min=1)
    assert C.controller_update(C.cold_start(1), spec, thr)[0] == 2


def test_trace_record_fields():
    st_ = C.cold_start(2)
    C.controller_update(st_, SingularSpectrum([0.8, 0.6]), C.ControllerConfig(), sweep=3, bond=5)
    t = st_.last_trace
    assert (t.sweep, t.bond) == (3, 5)
    assert C.TRACE_COLUMNS == ("sweep", "bond", "s_raw", "s_ema", "s_pred", "e", "p", "i", "d",
                               "dchi", "chi", "clamped")


# -- loop gain and stability ----------------------------------------------------------


def test_loop_gain_saturated():
    chi = 200
    g = C.loop_gain_estimate(np.ones(chi + 1), chi)
    assert g == pytest.approx(1 / chi, rel=0.1)


def test_loop_gain_exponential():
    lam = np.exp(-np.arange(1, 30, dtype=float))
    assert C.loop_gain_estimate(lam, 10) < 0.1 / 10


def test_loop_gain_needs_spectrum():
    with pytest.raises(InsufficientSpectrum):
        C.loop_gain_estimate(np.ones(8), 8)


def test_jury_examples():
    default = C.PidGains()
    assert C.jury_stability(default, 1 / 128).stable
    assert not C.jury_stability(C.PidGains(2.0, 2000.0, 0.5), 1 / 8).stable
    for k in range(1, 101):
        r = C.jury_stability(default, 3 / 8 * k / 100)
        assert r.stable and r.jury_stable
    with pytest.raises(ValueError):
        C.jury_stability(default, 0.0)


def test_jury_matches_closed_form_roots():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        kp, ki, kd = rng.uniform(0, 10, 3) * rng.choice([1e-2, 1, 10], 3)
        g = rng.uniform(1e-6, 1.0)
        rep = C.jury_stability(C.PidGains(kp, ki, kd), g)
        roots = quadratic_roots(*pid_char_poly(kp, ki, kd, g))
        oracle = max(abs(z) for z in roots) < 1
        if abs(max(abs(z) for z in roots) - 1) < 1e-9:
            continue
        assert rep.jury_stable == oracle == rep.stable


def test_max_stable_gain():
    grid = [k / 100 for k in range(1, 101)]
    assert C.max_stable_gain(C.PidGains(), grid) == 1.0
    unstable = C.max_stable_gain(C.PidGains(2.0, 2000.0, 0.5), grid)
    assert unstable < 1.0


# -- Ziegler-Nichols --------------------------------------------------------------------


def test_zn_identities():
    g = C.ziegler_nichols_gains(20.0, 4.0)
    assert g.kp == 0.6 * 20.0 and g.ki == 1.2 * 20.0 / 4.0 and g.kd == 0.075 * 20.0 * 4.0


def test_zn_saturated_plant():
    plant = lambda chi: min(math.log(20.0), math.log(chi))  # noqa: E731
    rep = C.ziegler_nichols_tune(plant, [float(k) for k in range(1, 65)])
    assert math.isfinite(rep.k_ultimate) and rep.t_ultimate >= 2
    assert rep.tuned.kp == 0.6 * rep.k_ultimate
    # frozen from a closed-loop run of this plant
    assert (rep.k_ultimate, rep.t_ultimate) == (28.0, 2.0)


def test_zn_constant_plant():
    cfg = C.ControllerConfig(chi_max=256, reference="absolute", s_target=1.0)
    with pytest.raises(NoUltimateGain) as info:
        C.ziegler_nichols_tune(lambda chi: 1.0, [1.0, 4.0, 16.0, 64.0], cfg=cfg)
    assert len(info.value.diagnostics) == 4


def test_detect_oscillation():
    assert C.detect_oscillation([10, 12] * 10) == 2.0
    assert C.detect_oscillation([10] * 20) is None
    assert C.detect_oscillation([10, 11] * 10) is None  # amplitude below 2
