"""Per-bond bond-dimension controllers.

Each bond of the MPS owns a :class:`BondControllerState`. After every SVD at
that bond the measured entropy is smoothed by an exponential moving average,
optionally extrapolated one step ahead, and turned into the bond dimension to
use at the bond's next visit. Four policies are available:

``fixed``      always ``chi_max``
``threshold``  number of singular values above ``eps_trunc * sigma_1``
``direct``     ``ceil(gamma * exp(S))``
``pid``        integer PID update of chi with clamping and anti-windup

The PID error is ``e = S_in - S_ref``: positive error means more entanglement
than the reference and grows chi. With ``reference="absolute"`` the reference is
the fixed ``s_target``. With ``reference="capacity"`` it is the entropy the
current bond can carry with margin, ``ln(chi / gamma)``, which makes the
equilibrium coincide with the direct map ``chi = gamma * exp(S)``.

Also here: loop-gain estimate, Jury stability check of the linearized loop and
Ziegler-Nichols tuning against a synthetic entropy plant.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegeneratePolynomial,
    InfiniteResponse,
    InsufficientSpectrum,
    NoUltimateGain,
)
from .mps import SPECTRUM_CUTOFF, SingularSpectrum, entropy_from_spectrum

MODES = ("fixed", "threshold", "direct", "pid")
PREDICTORS = ("off", "linear", "quadratic")
REFERENCES = ("absolute", "capacity")
PID_SCALES = ("additive", "multiplicative")

HISTORY_LEN = 3


@dataclass(frozen=True)
class PidGains:
    kp: float = 2.0
    ki: float = 0.1
    kd: float = 0.5

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"gain {name}={v} must be finite and non-negative")

    def scaled(self, factor: float) -> "PidGains":
        return PidGains(self.kp * factor, self.ki * factor, self.kd * factor)


@dataclass(frozen=True)
class ControllerConfig:
    """Settings shared by all bond controllers of one simulation.

    ``s_target`` only matters for ``reference="absolute"``; when left unset
    it defaults to ``ln(chi_max) - 0.5``.
    """

    mode: str = "pid"
    alpha_ema: float = 0.3
    gamma_margin: float = 1.2
    s_target: float | None = None
    gains: PidGains = field(default_factory=PidGains)
    beta_predict: float = 0.4
    predictor_order: str = "linear"
    chi_min: int = 2
    chi_max: int = 64
    pid_scale: str = "additive"
    chi_ref: float = 10.0
    reference: str = "capacity"
    eps_trunc: float = 1e-10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown controller mode {self.mode!r}")
        if self.predictor_order not in PREDICTORS:
            raise ValueError(f"unknown predictor order {self.predictor_order!r}")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference {self.reference!r}")
        if self.pid_scale not in PID_SCALES:
            raise ValueError(f"unknown pid_scale {self.pid_scale!r}")
        if not 0 < self.alpha_ema <= 1:
            raise ValueError("alpha_ema must lie in (0, 1]")
        if self.gamma_margin < 1:
            raise ValueError("gamma_margin must be >= 1")
        if self.beta_predict < 0:
            raise ValueError("beta_predict must be >= 0")
        if self.chi_min < 1 or self.chi_min > self.chi_max:
            raise ValueError("need 1 <= chi_min <= chi_max")
        if self.chi_ref <= 0:
            raise ValueError("chi_ref must be positive")
        if isinstance(self.gains, dict):
            object.__setattr__(self, "gains", PidGains(**self.gains))

    @property
    def target(self) -> float:
        if self.s_target is not None:
            return self.s_target
        return math.log(self.chi_max) - 0.5

    def with_gains(self, gains: PidGains) -> "ControllerConfig":
        return replace(self, gains=gains)


@dataclass
class PidTerms:
    e: float
    p: float
    i: float
    d: float
    dchi: int
    chi_raw: int
    clamped: bool


@dataclass
class BondControllerState:
    """Mutable per-bond controller memory.

    ``history`` holds the last three EMA values, newest last.
    """

    chi: int
    ema: float = 0.0
    prev_error: float = 0.0
    integral: float = 0.0
    initialized: bool = False
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LEN))
    last_terms: PidTerms | None = None
    last_trace: "TraceRecord | None" = None

    def copy(self) -> "BondControllerState":
        return replace(self, history=deque(self.history, maxlen=HISTORY_LEN))


def cold_start(chi_min: int) -> BondControllerState:
    """DMRG initial state: chi at its floor, smoothed entropy zero."""
    st = BondControllerState(chi=chi_min, initialized=True)
    st.history.append(0.0)
    return st


@dataclass(frozen=True)
class TraceRecord:
    sweep: int
    bond: int
    s_raw: float
    s_ema: float
    s_pred: float
    e: float
    p: float
    i: float
    d: float
    dchi: int
    chi: int
    clamped: bool


TRACE_COLUMNS = tuple(TraceRecord.__dataclass_fields__)


def clamp(x: int, lo: int, hi: int) -> int:
    return max(lo, min(x, hi))


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


# -- smoothing and prediction --------------------------------------------------


def ema_update(state: BondControllerState, s_raw: float, alpha: float) -> BondControllerState:
    """Fold one raw entropy sample into the moving average (in place)."""
    if not state.initialized:
        state.ema = float(s_raw)
        state.initialized = True
    else:
        state.ema = alpha * s_raw + (1.0 - alpha) * state.ema
    state.history.append(state.ema)
    return state


def ema_time_constant(alpha: float) -> float:
    if alpha == 1:
        raise InfiniteResponse("alpha = 1 follows the input instantly; no time constant")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return -1.0 / math.log1p(-alpha)


@dataclass(frozen=True)
class Prediction:
    value: float
    reactive_fallback: bool = False


def predict_entropy(state: BondControllerState, beta: float, order: str = "linear") -> Prediction:
    """One-step-ahead extrapolation of the smoothed entropy, floored at 0.

    Falls back to the current smoothed value (flagged) when the history is too
    short for the requested order.
    """
    h = list(state.history)
    cur = h[-1] if h else state.ema
    if order == "off":
        return Prediction(cur)
    need = 3 if order == "quadratic" else 2
    if len(h) < need:
        return Prediction(cur, reactive_fallback=True)
    s = cur + beta * (h[-1] - h[-2])
    if order == "quadratic":
        s += beta * (h[-1] - 2.0 * h[-2] + h[-3])
    return Prediction(max(0.0, s))


# -- chi policies --------------------------------------------------------------


def chi_target_direct(s_smoothed: float, gamma: float, chi_min: int, chi_max: int) -> int:
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    x = gamma * math.exp(min(s_smoothed, 700.0))
    # guard against ceil(4.000000000000001) for exact inversions like exp(ln 4)
    target = math.ceil(x - 1e-9 * x)
    return clamp(target, chi_min, chi_max)


def reference_entropy(state: BondControllerState, cfg: ControllerConfig) -> float:
    if cfg.reference == "capacity":
        return math.log(state.chi / cfg.gamma_margin)
    return cfg.target


def pid_step(state: BondControllerState, s_input: float, cfg: ControllerConfig) -> BondControllerState:
    """One integer PID update of ``state.chi`` (in place).

    The integral contribution of this step is only committed when the raw
    output needed no clamping, so saturation never winds the accumulator up. ``state.last_terms`` records the individual terms.
    """
    g = cfg.gains
    e = s_input - reference_entropy(state, cfg)
    p = g.kp * e
    integral = state.integral + g.ki * e
    d = g.kd * (e - state.prev_error)
    dchi = round_half_away(p + integral + d)
    if cfg.pid_scale == "additive":
        chi_raw = state.chi + dchi
    else:
        chi_raw = round_half_away(state.chi * (1.0 + dchi / cfg.chi_ref))
    chi_new = clamp(chi_raw, cfg.chi_min, cfg.chi_max)
    clamped = chi_new != chi_raw
    if not clamped:
        state.integral = integral
    state.last_terms = PidTerms(e, p, state.integral, d, dchi, chi_raw, clamped)
    state.prev_error = e
    state.chi = chi_new
    return state


def rank_above(spectrum, eps: float) -> int:
    lam = spectrum.values if isinstance(spectrum, SingularSpectrum) else np.asarray(spectrum)
    if lam.size == 0 or lam[0] <= 0:
        return 1
    return max(1, int(np.count_nonzero(lam > eps * lam[0])))


def controller_update(
    state: BondControllerState,
    spectrum,
    cfg: ControllerConfig,
    sweep: int = 0,
    bond: int | None = None,
) -> tuple[int, BondControllerState]:
    """Consume the spectrum just measured at a bond; return chi for its next visit."""
    s_raw = entropy_from_spectrum(spectrum)
    ema_update(state, s_raw, cfg.alpha_ema)
    if cfg.predictor_order == "off":
        s_in = state.ema
    else:
        s_in = predict_entropy(state, cfg.beta_predict, cfg.predictor_order).value

    e = p = i = d = 0.0
    clamped = False
    chi_before = state.chi
    if cfg.mode == "fixed":
        chi = cfg.chi_max
    elif cfg.mode == "threshold":
        chi = clamp(rank_above(spectrum, cfg.eps_trunc), cfg.chi_min, cfg.chi_max)
    elif cfg.mode == "direct":
        chi = chi_target_direct(s_in, cfg.gamma_margin, cfg.chi_min, cfg.chi_max)
    else:
        pid_step(state, s_in, cfg)
        t = state.last_terms
        chi = state.chi
        e, p, i, d, clamped = t.e, t.p, t.i, t.d, t.clamped
    state.chi = chi
    if bond is None:
        bond = spectrum.bond_index if isinstance(spectrum, SingularSpectrum) else 0
    state.last_trace = TraceRecord(
        sweep, bond, s_raw, state.ema, s_in, e, p, i, d, chi - chi_before, chi, clamped
    )
    return chi, state


# -- stability analysis --------------------------------------------------------


def _entropy_of_leading(lam: np.ndarray, k: int) -> float:
    p = lam[:k] ** 2
    p = p / p.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def loop_gain_estimate(spectrum, chi_star: int) -> float:
    """Entropy change from admitting the ``(chi_star + 1)``-th Schmidt value."""
    lam = spectrum.values if isinstance(spectrum, SingularSpectrum) else np.asarray(spectrum, float)
    if chi_star < 1:
        raise ValueError("chi_star must be >= 1")
    if chi_star + 1 > lam.shape[0]:
        raise InsufficientSpectrum(
            f"need {chi_star + 1} singular values, spectrum has {lam.shape[0]}")
    lam = np.sort(np.abs(lam))[::-1]
    return _entropy_of_leading(lam, chi_star + 1) - _entropy_of_leading(lam, chi_star)


@dataclass(frozen=True)
class StabilityReport:
    loop_gain: float
    pole_moduli: tuple[float, float]
    jury_a: bool
    jury_b: bool
    jury_c: bool
    stable: bool

    @property
    def jury_stable(self) -> bool:
        return self.jury_a and self.jury_b and self.jury_c


def characteristic_coefficients(gains: PidGains, g: float) -> tuple[float, float, float]:
    """``(a2, a1, a0)`` of ``a2 z^2 + a1 z + a0`` for the linearized loop."""
    kp, ki, kd = gains.kp, gains.ki, gains.kd
    return 1 + g * kp + g * kd, -(2 + g * kp - g * ki - 2 * g * kd), 1 + g * kd


def jury_stability(gains: PidGains, g: float) -> StabilityReport:
    if not g > 0:
        raise ValueError("loop gain must be positive")
    a2, a1, a0 = characteristic_coefficients(gains, g)
    if a2 == 0:
        raise DegeneratePolynomial("leading coefficient vanishes")
    roots = np.roots([a2, a1, a0])
    if roots.shape[0] == 1:
        roots = np.append(roots, 0.0)
    moduli = tuple(sorted(float(abs(r)) for r in roots))
    b = -a1
    ja = a0 > 0
    jb = a2 + a0 > abs(b)
    jc = a0**2 > a2**-2 * (b / 2) ** 2
    return StabilityReport(g, moduli, bool(ja), bool(jb), bool(jc), bool(max(moduli) < 1))


def max_stable_gain(gains: PidGains, g_grid: Sequence[float]) -> float:
    """Largest grid value below which every grid point is stable (0 if none)."""
    best = 0.0
    for g in sorted(g_grid):
        if not jury_stability(gains, g).stable:
            break
        best = g
    return best


# -- Ziegler-Nichols -------------------------------------------------------------


@dataclass(frozen=True)
class TuneReport:
    k_ultimate: float
    t_ultimate: float
    tuned: PidGains
    scanned: tuple = ()


def ziegler_nichols_gains(k_ultimate: float, t_ultimate: float) -> PidGains:
    return PidGains(0.6 * k_ultimate, 1.2 * k_ultimate / t_ultimate, 0.075 * k_ultimate * t_ultimate)


def detect_oscillation(chi_series: Sequence[int]) -> float | None:
    """Period of a sustained oscillation in ``chi_series``, or ``None``.

    Sustained means at least three sign alternations of the first difference
    and a peak-to-peak amplitude of at least 2; the period is the mean spacing
    of local maxima.
    """
    x = np.asarray(chi_series, dtype=float)
    if x.size < 4 or np.ptp(x) < 2:
        return None
    dx = np.diff(x)
    nz = np.flatnonzero(dx)
    signs = np.sign(dx[nz])
    if np.count_nonzero(signs[1:] != signs[:-1]) < 3:
        return None
    # a maximum is where a rise is followed (after any plateau) by a fall
    peaks = [int(nz[k]) + 1 for k in range(len(nz) - 1) if signs[k] > 0 and signs[k + 1] < 0]
    if len(peaks) < 2:
        return None
    return float(np.mean(np.diff(peaks)))


def closed_loop_chi(
    plant: Callable[[int], float],
    cfg: ControllerConfig,
    sweeps: int,
    chi0: int | None = None,
) -> list[int]:
    """Run the EMA + PID loop against ``plant`` (chi -> entropy) for ``sweeps`` steps."""
    st = BondControllerState(chi=cfg.chi_min if chi0 is None else chi0)
    series = [st.chi]
    for _ in range(sweeps):
        ema_update(st, plant(st.chi), cfg.alpha_ema)
        if cfg.predictor_order == "off":
            s_in = st.ema
        else:
            s_in = predict_entropy(st, cfg.beta_predict, cfg.predictor_order).value
        pid_step(st, s_in, cfg)
        series.append(st.chi)
    return series


def ziegler_nichols_tune(
    plant: Callable[[int], float],
    kp_grid: Sequence[float],
    sweeps: int = 60,
    cfg: ControllerConfig | None = None,
    chi0: int | None = None,
) -> TuneReport:
    """Find the ultimate gain by raising ``kp`` (``ki = kd = 0``) along ``kp_grid``.

    Raises:
        NoUltimateGain: no grid point produced a sustained oscillation; the
            exception carries per-gain diagnostics.
    """
    if not len(kp_grid):
        raise ValueError("kp_grid is empty")
    cfg = cfg or ControllerConfig(mode="pid", chi_min=2, chi_max=256)
    diagnostics = []
    for kp in kp_grid:
        run_cfg = cfg.with_gains(PidGains(float(kp), 0.0, 0.0))
        series = closed_loop_chi(plant, run_cfg, sweeps, chi0)
        window = series[-max(4, sweeps // 2):]
        period = detect_oscillation(window)
        diagnostics.append({"kp": float(kp), "chi_min": int(min(window)),
                            "chi_max": int(max(window)), "period": period})
        if period is not None:
            return TuneReport(float(kp), period, ziegler_nichols_gains(float(kp), period),
                              tuple(diagnostics))
    raise NoUltimateGain(f"no sustained oscillation for kp in [{kp_grid[0]}, {kp_grid[-1]}]",
                         diagnostics)
