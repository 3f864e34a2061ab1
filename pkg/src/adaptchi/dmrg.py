"""Two-site DMRG with per-bond controlled truncation.

Environment blocks are cached and updated incrementally as the orthogonality
center moves. Every split feeds its singular spectrum to the bond's
controller; the controller's answer is the truncation rank used the next time
the sweep passes that bond.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import controller as ctl
from . import linalg
from .errors import EigenNonConvergence, InternalConsistency, InvalidDistribution
from .models import MatrixProductOperator, ModelSpec, build_mpo
from .mps import (
    SPECTRUM_CUTOFF,
    SingularSpectrum,
    MatrixProductState,
    canonicalize,
    neel_state,
    parameter_count,
    random_mps,
    split_two_site,
)

log = logging.getLogger(__name__)

_ONES = np.ones((1, 1, 1), dtype=complex)


@dataclass(frozen=True)
class DmrgConfig:
    """Run settings.

    Attributes:
        max_sweeps: hard cap on full (left-right-left) sweeps.
        eps_conv: stop when ``|dE / E|`` between consecutive sweeps is below this.
        eig_tol: residual tolerance of the local Lanczos solve.
        eig_max_iter: operator applications allowed per local solve.
        controller: truncation policy for every bond.
        initial_state: ``"auto"`` (Neel for XXZ, biased random MPS for
            transverse Ising), ``"neel"`` or ``"random"``.
        seed: seed for random initial states.
        initial_chi: bond dimension of a random initial state; by default
            ``chi_max`` for the fixed policy and ``chi_min`` otherwise.
        chi_timing: ``"current"`` truncates each split with the controller's
            answer to that split's own spectrum; ``"next_visit"`` keeps the
            answer for the bond's next visit.
        trunc_floor: relative singular-value floor applied at every split.
    """

    max_sweeps: int = 30
    eps_conv: float = 1e-8
    eig_tol: float = 1e-10
    eig_max_iter: int = 400
    krylov_dim: int = 40
    controller: ctl.ControllerConfig = field(default_factory=ctl.ControllerConfig)
    initial_state: str = "auto"
    seed: int = 0
    initial_chi: int | None = None
    trunc_floor: float = SPECTRUM_CUTOFF
    backend_policy: linalg.BackendPolicy = field(default_factory=linalg.BackendPolicy)
    trace: bool = False
    chi_timing: str = "current"

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not self.eps_conv > 0:
            raise ValueError("eps_conv must be positive")
        if self.chi_timing not in ("current", "next_visit"):
            raise ValueError(f"unknown chi_timing {self.chi_timing!r}")
        if self.initial_chi is not None and self.initial_chi < 1:
            raise ValueError("initial_chi must be >= 1")
        if self.initial_state not in ("auto", "neel", "random"):
            raise ValueError(f"unknown initial state {self.initial_state!r}")


@dataclass
class SweepRecord:
    sweep_index: int
    energy: float
    delta_e_rel: float
    chi_profile: list[int]
    entropy_profile: list[float]
    max_trunc_error: float
    wall_time: float
    parameter_count: int
    average_chi: float
    max_chi: int
    lanczos_matvecs: int = 0


@dataclass
class DmrgResult:
    mps: MatrixProductState
    records: list[SweepRecord]
    converged: bool
    trace: list[ctl.TraceRecord] = field(default_factory=list)
    monotonicity_violation: float = 0.0

    @property
    def energy(self) -> float:
        return self.records[-1].energy

    @property
    def sweeps(self) -> int:
        return len(self.records)

    @property
    def wall_time(self) -> float:
        return float(sum(r.wall_time for r in self.records))


# -- environments ---------------------------------------------------------------


def extend_left(block: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Absorb one site into a left block; legs ``(ket, mpo, bra)``."""
    t = np.tensordot(block, a, axes=(0, 0))                # w a* s b
    t = np.tensordot(t, w, axes=([0, 2], [0, 2]))          # a* b s' x
    return np.tensordot(t, a.conj(), axes=([0, 2], [0, 1]))  # b x b*


def extend_right(block: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    t = np.tensordot(b, block, axes=(2, 0))                 # b s y c*
    t = np.tensordot(t, w, axes=([1, 2], [2, 3]))           # b c* x s'
    return np.tensordot(t, b.conj(), axes=([3, 1], [1, 2]))  # b x b*


class Environment:
    """Cached partial contractions of ``<psi|H|psi>``.

    ``left[i]`` covers sites ``< i`` and ``right[i]`` covers sites ``>= i``.
    Bond ``i`` (sites ``i, i+1``) needs ``left[i]`` and ``right[i + 2]``.
    """

    def __init__(self, mps: MatrixProductState, mpo: MatrixProductOperator, center: int = 0):
        n = mps.n
        self.n = n
        self.left: list[np.ndarray | None] = [None] * (n + 1)
        self.right: list[np.ndarray | None] = [None] * (n + 1)
        self.left[0] = _ONES
        self.right[n] = _ONES
        for i in range(center):
            self.left[i + 1] = extend_left(self.left[i], mps.tensors[i], mpo.tensors[i])
        for i in range(n - 1, center + 1, -1):
            self.right[i] = extend_right(self.right[i + 1], mps.tensors[i], mpo.tensors[i])
        self.l_valid = center
        self.r_valid = center + 2 if center + 2 <= n else n

    def blocks(self, bond: int):
        if bond > self.l_valid or bond + 2 < self.r_valid:
            raise InternalConsistency(
                f"environment stale for bond {bond} (left valid <= {self.l_valid}, "
                f"right valid >= {self.r_valid})")
        return self.left[bond], self.right[bond + 2]

    def absorb_left(self, site: int, a: np.ndarray, w: np.ndarray) -> None:
        self.left[site + 1] = extend_left(self.left[site], a, w)
        self.l_valid = site + 1
        self.r_valid = max(self.r_valid, site + 2)

    def absorb_right(self, site: int, b: np.ndarray, w: np.ndarray) -> None:
        self.right[site] = extend_right(self.right[site + 1], b, w)
        self.r_valid = site
        self.l_valid = min(self.l_valid, site - 1)


def apply_effective_hamiltonian(env: Environment, mpo: MatrixProductOperator, theta: np.ndarray,
                                bond: int) -> np.ndarray:
    """``H_eff @ theta`` for the two-site tensor at ``bond`` (shape ``(a, s, t, c)``)."""
    lblock, rblock = env.blocks(bond)
    return _heff(lblock, mpo.tensors[bond], mpo.tensors[bond + 1], rblock, theta)


def _heff(lblock, w1, w2, rblock, theta):
    t = np.tensordot(lblock, theta, axes=(0, 0))             # w a* s t c
    t = np.tensordot(t, w1, axes=([0, 2], [0, 2]))           # a* t c s' x
    t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))           # a* c s' t' y
    t = np.tensordot(t, rblock, axes=([1, 4], [0, 1]))       # a* s' t' c*
    return t


# -- sweeping -------------------------------------------------------------------


def _initial_controllers(n: int, cfg: ctl.ControllerConfig) -> list[ctl.BondControllerState]:
    start = cfg.chi_max if cfg.mode in ("fixed", "threshold") else cfg.chi_min
    return [replace(ctl.cold_start(cfg.chi_min), chi=start) for _ in range(n - 1)]


def _requested_chi(state: ctl.BondControllerState, cfg: DmrgConfig) -> tuple[int, float]:
    c = cfg.controller
    if c.mode == "fixed":
        # a fixed-chi baseline keeps chi_max even where the spectrum has vanished
        return c.chi_max, 0.0
    if c.mode == "threshold":
        return c.chi_max, max(c.eps_trunc, cfg.trunc_floor)
    return state.chi, cfg.trunc_floor


class _Counter:
    def __init__(self):
        self.matvecs = 0


def _optimize_bond(mps, mpo, env, bond, cfg, counter):
    a, b = mps.tensors[bond], mps.tensors[bond + 1]
    theta = np.tensordot(a, b, axes=(2, 0))
    shape = theta.shape
    lblock, rblock = env.blocks(bond)
    w1, w2 = mpo.tensors[bond], mpo.tensors[bond + 1]

    def matvec(v):
        counter.matvecs += 1
        return _heff(lblock, w1, w2, rblock, v.reshape(shape)).reshape(-1)

    try:
        energy, vec = linalg.eigs_lowest(matvec, theta.size, theta.reshape(-1), cfg.eig_tol,
                                         cfg.eig_max_iter, cfg.krylov_dim)
    except EigenNonConvergence as exc:
        exc.bond = bond
        raise
    return energy, vec.reshape(shape)


def two_site_sweep(
    mps: MatrixProductState,
    mpo: MatrixProductOperator,
    env: Environment,
    cfg: DmrgConfig,
    controllers: list[ctl.BondControllerState],
    sweep_index: int = 0,
    prev_energy: float | None = None,
    trace: list | None = None,
):
    """One left-to-right plus right-to-left pass; ``mps`` must have center 0.

    Mutates ``mps``, ``env`` and ``controllers`` in place and returns
    ``(mps, env, record)``.
    """
    if mps.center != 0:
        raise InternalConsistency("sweep must start with the orthogonality center at site 0")
    n = mps.n
    t0 = time.perf_counter()
    counter = _Counter()
    entropies = [0.0] * (n - 1)
    max_err = 0.0
    energy = float("nan")
    order = [(i, "right") for i in range(n - 1)] + [(i, "left") for i in range(n - 2, -1, -1)]
    for bond, absorb in order:
        energy, theta = _optimize_bond(mps, mpo, env, bond, cfg, counter)
        st = controllers[bond]
        if cfg.chi_timing == "current" and cfg.controller.mode in ("pid", "direct"):
            # measure first, then truncate with the controller's fresh answer
            full = linalg.svd_full(theta.reshape(theta.shape[0] * theta.shape[1], -1))
            ctl.controller_update(st, SingularSpectrum(full.sigma, bond), cfg.controller,
                                  sweep=sweep_index, bond=bond)
            updated = True
        else:
            updated = False
        chi_req, floor = _requested_chi(st, cfg)
        backend = linalg.select_backend(cfg.backend_policy, chi_req)
        left, _, right, out = split_two_site(theta, chi_req, floor, absorb=absorb,
                                             bond_index=bond, renormalize=True, backend=backend)
        mps.tensors[bond], mps.tensors[bond + 1] = left, right
        if absorb == "right":
            mps.center = bond + 1
            env.absorb_left(bond, left, mpo.tensors[bond])
        else:
            mps.center = bond
            env.absorb_right(bond + 1, right, mpo.tensors[bond + 1])
        entropies[bond] = out.entropy
        max_err = max(max_err, out.truncation_error)
        if not updated:
            ctl.controller_update(st, out.spectrum, cfg.controller, sweep=sweep_index, bond=bond)
        if trace is not None:
            trace.append(st.last_trace)

    wall = time.perf_counter() - t0
    chis = list(mps.bond_dims)
    de = float("nan") if prev_energy is None else abs(energy - prev_energy) / max(abs(energy), 1e-300)
    record = SweepRecord(
        sweep_index=sweep_index,
        energy=float(energy),
        delta_e_rel=de,
        chi_profile=chis,
        entropy_profile=entropies,
        max_trunc_error=float(max_err),
        wall_time=wall,
        parameter_count=parameter_count(mps),
        average_chi=float(np.mean(chis)) if chis else 1.0,
        max_chi=int(max(chis)) if chis else 1,
        lanczos_matvecs=counter.matvecs,
    )
    return mps, env, record


def initial_mps(spec: ModelSpec, cfg: DmrgConfig) -> MatrixProductState:
    kind = cfg.initial_state
    if kind == "auto":
        kind = "neel" if spec.family == "heisenberg_xxz" else "random"
    if kind == "neel":
        return neel_state(spec.n, spec.d)
    chi0 = cfg.initial_chi
    if chi0 is None:
        c = cfg.controller
        chi0 = c.chi_max if c.mode == "fixed" else c.chi_min
    return random_mps(spec.n, spec.d, chi0, cfg.seed, bias=1.0)


def run_dmrg(spec: ModelSpec, cfg: DmrgConfig, mps: MatrixProductState | None = None,
             mpo: MatrixProductOperator | None = None) -> DmrgResult:
    """Ground-state search; stops on ``|dE/E| < eps_conv`` or after ``max_sweeps``.

    Non-convergence is reported through ``DmrgResult.converged``, not raised.
    """
    mpo = mpo or build_mpo(spec)
    psi = canonicalize(mps if mps is not None else initial_mps(spec, cfg), 0)
    env = Environment(psi, mpo, 0)
    controllers = _initial_controllers(psi.n, cfg.controller)
    trace: list | None = [] if cfg.trace else None
    records: list[SweepRecord] = []
    prev = None
    converged = False
    worst_rise = 0.0
    for k in range(cfg.max_sweeps):
        psi, env, rec = two_site_sweep(psi, mpo, env, cfg, controllers, k, prev, trace)
        records.append(rec)
        log.debug("sweep %d E=%.12f dE=%.2e chi_max=%d chi_avg=%.2f", k, rec.energy,
                  rec.delta_e_rel, rec.max_chi, rec.average_chi)
        if prev is not None:
            worst_rise = max(worst_rise, rec.energy - prev)
            if rec.delta_e_rel < cfg.eps_conv:
                converged = True
                break
        prev = rec.energy
    if worst_rise > 1e-10:
        log.info("energy rose by up to %.3e between sweeps", worst_rise)
    return DmrgResult(psi, records, converged, trace or [], max(0.0, worst_rise))


def expectation_energy(mps: MatrixProductState, mpo: MatrixProductOperator) -> float:
    """``<psi|H|psi>`` by full contraction (``mps`` assumed normalized)."""
    block = _ONES
    for a, w in zip(mps.tensors, mpo.tensors):
        block = extend_left(block, a, w)
    return float(block[0, 0, 0].real)


def tvd(p, q) -> float:
    """Total variation distance between two probability vectors."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != q.shape:
        raise InvalidDistribution(f"length mismatch: {p.shape[0]} vs {q.shape[0]}")
    for name, x in (("p", p), ("q", q)):
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise InvalidDistribution(f"{name} has negative or non-finite entries")
        if abs(x.sum() - 1.0) > 1e-8:
            raise InvalidDistribution(f"{name} sums to {x.sum()!r}, not 1")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))
