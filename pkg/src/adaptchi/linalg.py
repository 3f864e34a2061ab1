"""Dense linear-algebra kernel: SVD, lowest eigenpair, backend dispatch.

Every decomposition in the package goes through this module so that an
accelerator backend can be slotted in behind :func:`select_backend` without
touching the MPS or DMRG code. Only the host (LAPACK via numpy/scipy)
backend ships; ``external`` is a registration hook.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import EigenNonConvergence, InvalidMatrix, InvalidRank, NumericalFailure

REFERENCE = "reference"
EXTERNAL = "external"
BACKENDS = (REFERENCE, EXTERNAL)

# Relative gap under which the singular values straddling a cut count as tied.
DEGENERATE_CUT_TOL = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """Factors of ``m = u @ diag(sigma) @ v_dagger``.

    ``sigma`` is non-increasing; ``u`` has isometric columns and ``v_dagger``
    isometric rows. ``degenerate_cut`` is set by truncation when the last kept
    value is numerically tied with the first dropped one.
    """

    u: np.ndarray
    sigma: np.ndarray
    v_dagger: np.ndarray
    degenerate_cut: bool = False

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v_dagger


@dataclass(frozen=True)
class BackendPolicy:
    accelerator_threshold: int = 64
    backend: str = EXTERNAL

    def __post_init__(self):
        if self.accelerator_threshold < 1:
            raise ValueError("accelerator_threshold must be >= 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")


def _host_svd(m: np.ndarray):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on ill-conditioned input; gesvd is slower but robust
        try:
            return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"SVD did not converge: {exc}") from exc


_registry_lock = threading.Lock()
_REGISTRY: dict[str, Callable] = {REFERENCE: _host_svd}


def register_backend(svd: Callable, name: str = EXTERNAL) -> None:
    """Install an SVD implementation under ``name``.

    ``svd(m)`` must return ``(u, s, vh)`` with numpy semantics
    (``full_matrices=False``). Meant to be called once at startup.
    """
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    with _registry_lock:
        _REGISTRY[name] = svd


def unregister_backend(name: str = EXTERNAL) -> None:
    if name == REFERENCE:
        raise ValueError("the reference backend cannot be removed")
    with _registry_lock:
        _REGISTRY.pop(name, None)


def registered_backends() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def select_backend(policy: BackendPolicy, chi: int) -> str:
    """Pick the backend for a bond of dimension ``chi``.

    Small bonds stay on the host: transfer overhead dominates below the
    threshold. Falls back to the reference backend if nothing else is
    registered.
    """
    if chi < policy.accelerator_threshold:
        return REFERENCE
    if policy.backend in _REGISTRY:
        return policy.backend
    return REFERENCE


def _check_matrix(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidMatrix(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("matrix contains NaN or Inf entries")
    return m


def _fix_gauge(u: np.ndarray, vh: np.ndarray):
    # rotate each left vector so its largest-magnitude entry is real positive
    idx = np.argmax(np.abs(u), axis=0)
    pivots = u[idx, np.arange(u.shape[1])]
    mags = np.abs(pivots)
    phase = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    u = u * phase.conj()
    vh = vh * phase[:, None]
    return u, vh


def svd_full(m, backend: str = REFERENCE) -> SvdResult:
    """Thin SVD with a deterministic phase convention.

    Raises:
        InvalidMatrix: non-finite or empty input.
        NumericalFailure: LAPACK did not converge.
    """
    m = _check_matrix(m)
    impl = _REGISTRY.get(backend, _host_svd)
    u, s, vh = impl(m)
    u, s, vh = np.asarray(u), np.asarray(s), np.asarray(vh)
    if not np.all(np.isfinite(s)):
        raise NumericalFailure("SVD produced non-finite singular values")
    u, vh = _fix_gauge(u, vh)
    return SvdResult(u, s, vh)


def _truncate(res: SvdResult, keep: int) -> SvdResult:
    s = res.sigma
    degenerate = False
    if keep < s.shape[0] and s[0] > 0:
        degenerate = bool(abs(s[keep - 1] - s[keep]) <= DEGENERATE_CUT_TOL * s[0])
    return SvdResult(
        np.ascontiguousarray(res.u[:, :keep]),
        s[:keep].copy(),
        np.ascontiguousarray(res.v_dagger[:keep, :]),
        degenerate,
    )


def svd_truncated(m, keep: int, backend: str = REFERENCE) -> SvdResult:
    """Leading ``keep`` singular triplets of ``m`` (optimal rank-``keep`` approximation)."""
    m = _check_matrix(m)
    if not 1 <= keep <= min(m.shape):
        raise InvalidRank(f"keep={keep} outside [1, {min(m.shape)}]")
    return _truncate(svd_full(m, backend), keep)


def eigs_lowest(
    apply_h: Callable[[np.ndarray], np.ndarray],
    dim: int,
    v0,
    tol: float = 1e-10,
    max_iter: int = 200,
    krylov_dim: int = 40,
):
    """Lowest eigenpair of a Hermitian operator by restarted Lanczos.

    Full reorthogonalisation is used inside each Krylov block, which keeps the
    Ritz residual estimate reliable; the block is restarted from the current
    Ritz vector when it fills up. ``max_iter`` counts operator applications.

    Args:
        apply_h: callback computing ``H @ v`` for a 1-D vector of length ``dim``.
        dim: dimension of the space.
        v0: starting vector (any non-zero norm).
        tol: stop once ``||H v - E v|| <= tol * max(1, |E|)``.
        max_iter: budget of ``apply_h`` calls.
        krylov_dim: Krylov block size before restarting.

    Returns:
        ``(energy, vector)`` with a unit-norm vector.

    Raises:
        EigenNonConvergence: budget exhausted; carries the best residual.
    """
    v = np.asarray(v0).reshape(-1)
    if v.shape[0] != dim:
        raise ValueError(f"v0 has length {v.shape[0]}, expected {dim}")
    dtype = np.result_type(v.dtype, np.float64)
    v = v.astype(dtype, copy=True)
    nrm = np.linalg.norm(v)
    if not nrm > 0:
        raise ValueError("v0 must have non-zero norm")
    v /= nrm

    kmax = max(1, min(dim, krylov_dim))
    matvecs = 0
    best = np.inf
    basis = np.empty((kmax, dim), dtype=dtype)
    energy = np.nan
    while True:
        basis[0] = v
        alphas: list[float] = []
        betas: list[float] = []
        w = np.asarray(apply_h(v)).reshape(-1)
        matvecs += 1
        dtype_w = np.result_type(w.dtype, dtype)
        if dtype_w != basis.dtype:
            basis = basis.astype(dtype_w)
        for j in range(kmax):
            a = float(np.vdot(basis[j], w).real)
            alphas.append(a)
            w = w - a * basis[j]
            if j > 0:
                w = w - betas[-1] * basis[j - 1]
            # two passes of classical Gram-Schmidt against the whole block
            for _ in range(2):
                w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
            b = float(np.linalg.norm(w))

            if j == 0:
                theta = np.array([alphas[0]])
                y = np.array([[1.0]])
            else:
                theta, y = scipy.linalg.eigh_tridiagonal(
                    np.array(alphas), np.array(betas), select="i", select_range=(0, 0)
                )
            energy = float(theta[0])
            resid = b * abs(y[-1, 0])
            best = min(best, resid)
            scale = tol * max(1.0, abs(energy))
            exhausted = b <= 1e-14 * max(1.0, abs(energy))
            if resid <= scale or exhausted or j == kmax - 1 or matvecs >= max_iter:
                x = y[:, 0] @ basis[: j + 1]
                x /= np.linalg.norm(x)
                if resid <= scale or exhausted:
                    return energy, x
                break
            betas.append(b)
            basis[j + 1] = w / b
            w = np.asarray(apply_h(basis[j + 1])).reshape(-1)
            matvecs += 1
        if matvecs >= max_iter:
            raise EigenNonConvergence(
                f"Lanczos did not reach tol={tol:g} in {max_iter} operator applications",
                residual=best,
            )
        v = x
