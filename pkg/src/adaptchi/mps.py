"""Matrix product states with per-bond dimensions.

Site tensors are complex arrays indexed ``(left, phys, right)``. Open boundary
conditions: the outer bonds have dimension 1.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .errors import (
    DegenerateSpectrum,
    InvalidBasisState,
    InvalidRank,
    SizeGuard,
    SnapshotFormatError,
)

DTYPE = np.complex128
# singular values below this fraction of the largest are treated as noise
SPECTRUM_CUTOFF = 1e-14
STATEVECTOR_MAX_SITES = 20


@dataclass(frozen=True)
class SingularSpectrum:
    values: np.ndarray
    bond_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class TruncationOutcome:
    kept_chi: int
    truncation_error: float
    entropy: float
    spectrum: SingularSpectrum
    degenerate_cut: bool = False


@dataclass
class MatrixProductState:
    """Chain of rank-3 site tensors.

    Attributes:
        tensors: site tensors shaped ``(chi_left, d, chi_right)``.
        center: orthogonality center, or ``None`` when no gauge is known.
    """

    tensors: list[np.ndarray]
    center: int | None = None

    def __post_init__(self):
        if not self.tensors:
            raise ValueError("an MPS needs at least one site")
        self.tensors = [np.asarray(t, dtype=DTYPE) for t in self.tensors]
        validate(self)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[2] for t in self.tensors[:-1])

    def copy(self) -> "MatrixProductState":
        return MatrixProductState([t.copy() for t in self.tensors], self.center)

    def norm(self) -> float:
        return float(np.sqrt(abs(overlap(self, self))))


def validate(mps: MatrixProductState) -> None:
    ts = mps.tensors
    for i, t in enumerate(ts):
        if t.ndim != 3 or min(t.shape) < 1:
            raise ValueError(f"site {i}: expected a non-empty rank-3 tensor, got {t.shape}")
        if t.shape[1] != ts[0].shape[1]:
            raise ValueError(f"site {i}: physical dimension {t.shape[1]} != {ts[0].shape[1]}")
    if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
        raise ValueError("boundary bond dimensions must be 1")
    for i in range(len(ts) - 1):
        if ts[i].shape[2] != ts[i + 1].shape[0]:
            raise ValueError(f"bond {i}: {ts[i].shape[2]} != {ts[i + 1].shape[0]}")
    if mps.center is not None and not 0 <= mps.center < len(ts):
        raise ValueError(f"canonical center {mps.center} out of range")


def product_state(n: int, d: int, local_states) -> MatrixProductState:
    local_states = list(local_states)
    if len(local_states) != n:
        raise InvalidBasisState(f"expected {n} local states, got {len(local_states)}")
    tensors = []
    for i, s in enumerate(local_states):
        if not 0 <= int(s) < d:
            raise InvalidBasisState(f"site {i}: basis index {s} not in [0, {d})")
        t = np.zeros((1, d, 1), dtype=DTYPE)
        t[0, int(s), 0] = 1.0
        tensors.append(t)
    return MatrixProductState(tensors, center=0)


def neel_state(n: int, d: int = 2) -> MatrixProductState:
    return product_state(n, d, [i % 2 for i in range(n)])


def max_bond_dims(n: int, d: int, chi: int) -> list[int]:
    """Bond dimensions ``min(chi, d**i, d**(n-i))`` for bonds ``i = 1..n-1``."""
    dims = []
    for i in range(1, n):
        # compare exponents first so huge chains never build huge ints
        cap = chi
        for k in (i, n - i):
            if k * np.log(d) < np.log(cap) + 1e-12:
                cap = min(cap, d**k)
        dims.append(int(cap))
    return dims


def random_mps(n: int, d: int, chi: int, seed: int, bias: float = 0.0) -> MatrixProductState:
    """Normalized random MPS, right-canonical (center 0).

    ``bias`` shifts every entry before normalization; a positive value leans
    the state toward the uniform superposition.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [1] + max_bond_dims(n, d, chi) + [1]
    tensors = []
    for i in range(n):
        shape = (dims[i], d, dims[i + 1])
        t = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        tensors.append(t + bias)
    mps = canonicalize(MatrixProductState(tensors), 0)
    c = mps.tensors[0]
    mps.tensors[0] = c / np.linalg.norm(c)
    return mps


def _spectrum_values(spec) -> np.ndarray:
    if isinstance(spec, SingularSpectrum):
        return spec.values
    return np.asarray(spec, dtype=float).reshape(-1)


def entropy_from_spectrum(spec) -> float:
    """Von Neumann entropy in nats of a Schmidt spectrum."""
    lam = np.abs(_spectrum_values(spec))
    if lam.size == 0 or not np.any(lam > 0):
        raise DegenerateSpectrum("spectrum carries no weight")
    lam = lam[lam > SPECTRUM_CUTOFF * lam.max()]
    p = lam**2
    p = p / p.sum()
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log(p))))


def truncation_error(spec, kept: int) -> float:
    lam = _spectrum_values(spec)
    if not 1 <= kept <= lam.shape[0]:
        raise InvalidRank(f"kept={kept} outside [1, {lam.shape[0]}]")
    tail = lam[kept:]
    return float(np.sqrt(np.sum(tail * tail)))


def split_two_site(
    theta,
    chi_request: int,
    trunc_floor: float = SPECTRUM_CUTOFF,
    absorb: str = "right",
    d: int | None = None,
    bond_index: int = 0,
    renormalize: bool = False,
    backend: str = linalg.REFERENCE,
):
    """Split a two-site tensor into two site tensors by truncated SVD.

    ``theta`` is either a ``(chi_l, d, d, chi_r)`` array or its
    ``(d*chi_l, d*chi_r)`` matricization (then ``d`` is required). Keeps
    ``min(chi_request, #{sigma > trunc_floor * sigma_1})`` values. The kept
    singular values go into the right tensor for ``absorb="right"`` (the left
    one is then left-isometric) and vice versa.

    Returns:
        ``(left, spectrum, right, outcome)``; ``spectrum`` holds the kept
        values, ``outcome.spectrum`` the full pre-truncation one.
    """
    theta = np.asarray(theta)
    if theta.ndim == 4:
        chi_l, d, d2, chi_r = theta.shape
        if d2 != d:
            raise ValueError("both sites must share the physical dimension")
    elif theta.ndim == 2:
        if d is None:
            raise ValueError("matrix input needs the physical dimension d")
        if theta.shape[0] % d or theta.shape[1] % d:
            raise ValueError(f"shape {theta.shape} not divisible by d={d}")
        chi_l, chi_r = theta.shape[0] // d, theta.shape[1] // d
    else:
        raise ValueError("theta must be rank 2 or rank 4")
    if chi_request < 1:
        raise InvalidRank("chi_request must be >= 1")
    if absorb not in ("left", "right"):
        raise ValueError("absorb must be 'left' or 'right'")

    res = linalg.svd_full(theta.reshape(chi_l * d, d * chi_r), backend)
    sigma = res.sigma
    if not sigma[0] > 0:
        raise DegenerateSpectrum("two-site tensor is zero")
    above = int(np.count_nonzero(sigma > trunc_floor * sigma[0]))
    kept = max(1, min(chi_request, above, sigma.shape[0]))
    cut = linalg._truncate(res, kept)

    full = SingularSpectrum(sigma, bond_index)
    outcome = TruncationOutcome(
        kept_chi=kept,
        truncation_error=truncation_error(full, kept),
        entropy=entropy_from_spectrum(full),
        spectrum=full,
        degenerate_cut=cut.degenerate_cut,
    )
    s = cut.sigma
    if renormalize:
        s = s / np.linalg.norm(s)
    u, vh = cut.u, cut.v_dagger
    if absorb == "right":
        vh = s[:, None] * vh
    else:
        u = u * s
    left = u.reshape(chi_l, d, kept)
    right = vh.reshape(kept, d, chi_r)
    return left, SingularSpectrum(s, bond_index), right, outcome


def _left_qr(t: np.ndarray):
    l, d, r = t.shape
    q, rr = np.linalg.qr(t.reshape(l * d, r))
    return q.reshape(l, d, q.shape[1]), rr


def _right_qr(t: np.ndarray):
    l, d, r = t.shape
    q, rr = np.linalg.qr(t.reshape(l, d * r).T)
    # t = rr.T @ q.T with q.T right-isometric
    return q.T.reshape(q.shape[1], d, r), rr.T


def canonicalize(mps: MatrixProductState, center: int) -> MatrixProductState:
    """Return a mixed-canonical copy with orthogonality center ``center``."""
    n = mps.n
    if not 0 <= center < n:
        raise ValueError(f"center {center} outside [0, {n})")
    ts = [t.copy() for t in mps.tensors]
    for i in range(center):
        q, r = _left_qr(ts[i])
        ts[i] = q
        ts[i + 1] = np.tensordot(r, ts[i + 1], axes=(1, 0))
    for i in range(n - 1, center, -1):
        q, l = _right_qr(ts[i])
        ts[i] = q
        ts[i - 1] = np.tensordot(ts[i - 1], l, axes=(2, 0))
    return MatrixProductState(ts, center)


def is_left_isometry(t: np.ndarray, atol: float = 1e-10) -> bool:
    l, d, r = t.shape
    m = t.reshape(l * d, r)
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(r))) <= atol)


def is_right_isometry(t: np.ndarray, atol: float = 1e-10) -> bool:
    l, d, r = t.shape
    m = t.reshape(l, d * r)
    return bool(np.max(np.abs(m @ m.conj().T - np.eye(l))) <= atol)


def check_canonical(mps: MatrixProductState, atol: float = 1e-10) -> bool:
    c = mps.center
    if c is None:
        return False
    return all(is_left_isometry(mps.tensors[i], atol) for i in range(c)) and all(
        is_right_isometry(mps.tensors[i], atol) for i in range(c + 1, mps.n)
    )


def to_statevector(mps: MatrixProductState) -> np.ndarray:
    """Dense amplitudes, first site most significant."""
    if mps.n > STATEVECTOR_MAX_SITES:
        raise SizeGuard(f"N={mps.n} exceeds the statevector limit of {STATEVECTOR_MAX_SITES}")
    psi = mps.tensors[0].reshape(mps.d, -1)
    for t in mps.tensors[1:]:
        psi = np.tensordot(psi, t, axes=(1, 0)).reshape(-1, t.shape[2])
    return psi.reshape(-1)


def overlap(bra: MatrixProductState, ket: MatrixProductState) -> complex:
    """``<bra|ket>`` by transfer-matrix contraction."""
    if bra.n != ket.n:
        raise ValueError("chains differ in length")
    env = np.ones((1, 1), dtype=DTYPE)
    for a, b in zip(bra.tensors, ket.tensors):
        env = np.tensordot(env, b, axes=(1, 0))
        env = np.tensordot(a.conj(), env, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def bond_entropies(mps: MatrixProductState) -> np.ndarray:
    """Entanglement entropy at every bond (works in any gauge)."""
    mps = canonicalize(mps, 0)
    ts = mps.tensors
    out = []
    for i in range(mps.n - 1):
        l, d, r = ts[i].shape
        res = linalg.svd_full(ts[i].reshape(l * d, r))
        out.append(entropy_from_spectrum(res.sigma))
        ts[i] = res.u.reshape(l, d, -1)
        ts[i + 1] = np.tensordot(res.sigma[:, None] * res.v_dagger, ts[i + 1], axes=(1, 0))
    return np.array(out)


def parameter_count(mps: MatrixProductState) -> int:
    return int(sum(t.size for t in mps.tensors))


def average_bond_dim(mps: MatrixProductState) -> float:
    if mps.n < 2:
        raise ValueError("average bond dimension needs at least two sites")
    return float(np.mean(mps.bond_dims))


# -- snapshot container -------------------------------------------------------

MAGIC = b"ACHI"
SNAPSHOT_VERSION = 1


def dumps(mps: MatrixProductState) -> bytes:
    """Serialize to the versioned ``ACHI`` binary container.

    Layout (little-endian): magic, u32 version, u32 N, u32 d, i32 center
    (-1 when unset), N pairs of u32 (left, right) dims, then the complex128
    entries of each site in C order.
    """
    buf = io.BytesIO()
    center = -1 if mps.center is None else mps.center
    buf.write(MAGIC)
    buf.write(struct.pack("<IIIi", SNAPSHOT_VERSION, mps.n, mps.d, center))
    for t in mps.tensors:
        buf.write(struct.pack("<II", t.shape[0], t.shape[2]))
    for t in mps.tensors:
        buf.write(np.ascontiguousarray(t, dtype="<c16").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> MatrixProductState:
    if data[:4] != MAGIC:
        raise SnapshotFormatError("not an ACHI snapshot (bad magic)")
    try:
        version, n, d, center = struct.unpack_from("<IIIi", data, 4)
        if version != SNAPSHOT_VERSION:
            raise SnapshotFormatError(f"unsupported snapshot version {version}")
        off = 20
        dims = []
        for _ in range(n):
            dims.append(struct.unpack_from("<II", data, off))
            off += 8
        tensors = []
        for l, r in dims:
            count = l * d * r
            arr = np.frombuffer(data, dtype="<c16", count=count, offset=off)
            tensors.append(arr.reshape(l, d, r).astype(DTYPE))
            off += 16 * count
    except SnapshotFormatError:
        raise
    except (struct.error, ValueError) as exc:
        raise SnapshotFormatError(f"truncated or corrupt snapshot: {exc}") from exc
    if off != len(data):
        raise SnapshotFormatError("trailing bytes after snapshot payload")
    return MatrixProductState(tensors, None if center < 0 else center)


def save(mps: MatrixProductState, path) -> None:
    Path(path).write_bytes(dumps(mps))


def load(path) -> MatrixProductState:
    return loads(Path(path).read_bytes())
