"""Spin-chain Hamiltonians as MPOs, plus exact reference energies.

Two operator conventions are supported. ``spin_half`` builds terms from
``S = sigma / 2``; ``pauli`` uses the Pauli matrices directly, so bilinear
energies are four times larger.

Operator-tensor legs are ordered ``(left_bond, phys_out, phys_in, right_bond)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SizeGuard, UnsupportedModel

FAMILIES = ("heisenberg_xxz", "transverse_ising")
CONVENTIONS = ("spin_half", "pauli")

DENSE_MAX_SITES = 12
ED_MAX_SITES = 14
MPO_DENSE_MAX_SITES = 12

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_ID = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ModelSpec:
    """Nearest-neighbour chain with open boundaries.

    ``heisenberg_xxz``: ``sum jx XX + jy YY + jz ZZ + h sum Z``.
    ``transverse_ising``: ``-jz sum ZZ - h sum X``.
    X, Y, Z are Pauli matrices or spin operators depending on ``convention``.
    """

    family: str = "heisenberg_xxz"
    n: int = 20
    jx: float = 1.0
    jy: float = 1.0
    jz: float = 1.0
    h: float = 0.0
    convention: str = "pauli"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedModel(f"unsupported model family {self.family!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.n < 2:
            raise ValueError("a chain needs n >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def d(self) -> int:
        return 2


def heisenberg(n: int, jz: float = 1.0, convention: str = "pauli") -> ModelSpec:
    return ModelSpec("heisenberg_xxz", n, 1.0, 1.0, jz, 0.0, convention)


def transverse_ising(n: int, h: float = 1.0, j: float = 1.0, convention: str = "pauli") -> ModelSpec:
    return ModelSpec("transverse_ising", n, 0.0, 0.0, j, h, convention)


def spin_operators(convention: str):
    """``(X, Y, Z, I)`` in the requested convention."""
    f = 0.5 if convention == "spin_half" else 1.0
    return f * _SX, f * _SY, f * _SZ, _ID


@dataclass
class MatrixProductOperator:
    tensors: list[np.ndarray]

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[3] for w in self.tensors[:-1])


def _bulk_tensor(spec: ModelSpec) -> np.ndarray:
    x, y, z, eye = spin_operators(spec.convention)
    if spec.family == "heisenberg_xxz":
        w = np.zeros((5, 5, 2, 2), dtype=complex)
        w[0, 0] = eye
        w[1, 0], w[2, 0], w[3, 0] = x, y, z
        w[4, 0] = spec.h * z
        w[4, 1], w[4, 2], w[4, 3] = spec.jx * x, spec.jy * y, spec.jz * z
        w[4, 4] = eye
    else:
        w = np.zeros((3, 3, 2, 2), dtype=complex)
        w[0, 0] = eye
        w[1, 0] = z
        w[2, 0] = -spec.h * x
        w[2, 1] = -spec.jz * z
        w[2, 2] = eye
    # (a, b, out, in) -> (a, out, in, b)
    return w.transpose(0, 2, 3, 1)


def build_mpo(spec: ModelSpec) -> MatrixProductOperator:
    """Operator-sum MPO: bond dimension 5 (XXZ) or 3 (transverse Ising)."""
    if spec.family not in FAMILIES:
        raise UnsupportedModel(f"unsupported model family {spec.family!r}")
    w = _bulk_tensor(spec)
    last = w.shape[0] - 1
    tensors = []
    for i in range(spec.n):
        t = w
        if i == 0:
            t = t[last:last + 1]
        if i == spec.n - 1:
            t = t[:, :, :, 0:1]
        tensors.append(np.ascontiguousarray(t))
    return MatrixProductOperator(tensors)


def identity_mpo(n: int, d: int = 2) -> MatrixProductOperator:
    t = np.eye(d, dtype=complex).reshape(1, d, d, 1)
    return MatrixProductOperator([t.copy() for _ in range(n)])


def mpo_to_dense(mpo: MatrixProductOperator) -> np.ndarray:
    if mpo.n > MPO_DENSE_MAX_SITES:
        raise SizeGuard(f"dense MPO reconstruction limited to {MPO_DENSE_MAX_SITES} sites")
    # acc: (out, in, bond)
    acc = mpo.tensors[0][0]
    for w in mpo.tensors[1:]:
        acc = np.tensordot(acc, w, axes=(2, 0))  # (O, I, o, i, b)
        o, i_, o2, i2, b = acc.shape
        acc = acc.transpose(0, 2, 1, 3, 4).reshape(o * o2, i_ * i2, b)
    return acc[:, :, 0]


def _site_op(op, i: int, n: int, sparse: bool):
    if sparse:
        left = sp.identity(2**i, dtype=complex, format="csr")
        right = sp.identity(2 ** (n - i - 1), dtype=complex, format="csr")
        return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")
    return np.kron(np.kron(np.eye(2**i), op), np.eye(2 ** (n - i - 1)))


def hamiltonian_matrix(spec: ModelSpec, sparse: bool = False):
    """Explicit sum of local terms, independent of the MPO construction."""
    n = spec.n
    if n > DENSE_MAX_SITES and not sparse:
        raise SizeGuard(f"dense Hamiltonian limited to {DENSE_MAX_SITES} sites")
    x, y, z, _ = spin_operators(spec.convention)
    X = [_site_op(x, i, n, sparse) for i in range(n)]
    Z = [_site_op(z, i, n, sparse) for i in range(n)]
    dim = 2**n
    H = sp.csr_matrix((dim, dim), dtype=complex) if sparse else np.zeros((dim, dim), dtype=complex)
    if spec.family == "heisenberg_xxz":
        Y = [_site_op(y, i, n, sparse) for i in range(n)]
        for i in range(n - 1):
            H = H + spec.jx * (X[i] @ X[i + 1]) + spec.jy * (Y[i] @ Y[i + 1])
            H = H + spec.jz * (Z[i] @ Z[i + 1])
        if spec.h:
            for i in range(n):
                H = H + spec.h * Z[i]
    elif spec.family == "transverse_ising":
        for i in range(n - 1):
            H = H - spec.jz * (Z[i] @ Z[i + 1])
        for i in range(n):
            H = H - spec.h * X[i]
    else:
        raise UnsupportedModel(spec.family)
    return H


def tfim_free_fermion_energy(n: int, j: float = 1.0, h: float = 1.0) -> float:
    """Ground energy of ``-j sum ZZ - h sum X`` (Pauli form, open chain).

    After Jordan-Wigner the chain is a quadratic fermion problem whose
    single-particle energies are twice the singular values of the bidiagonal
    matrix with ``h`` on the diagonal and ``j`` above it; the ground energy is
    minus their sum.
    """
    b = np.diag(np.full(n, float(h))) + np.diag(np.full(n - 1, float(j)), 1)
    return float(-np.sum(np.linalg.svd(b, compute_uv=False)))


def exact_ground_energy(spec: ModelSpec, method: str = "auto", max_sites: int = ED_MAX_SITES) -> float:
    """Reference ground-state energy.

    Args:
        method: ``"auto"`` (free fermions for transverse Ising, otherwise dense
            or sparse diagonalization), ``"dense"``, ``"sparse"`` or
            ``"free_fermion"``.
        max_sites: size cap for the diagonalization paths; raise it
            deliberately for the extended N=20 checks.
    """
    if method == "auto":
        method = "free_fermion" if spec.family == "transverse_ising" else (
            "dense" if spec.n <= 10 else "sparse")
    if method == "free_fermion":
        if spec.family != "transverse_ising":
            raise UnsupportedModel("free-fermion path only covers the transverse Ising chain")
        f = 0.5 if spec.convention == "spin_half" else 1.0
        return tfim_free_fermion_energy(spec.n, spec.jz * f * f, spec.h * f)
    if spec.n > max_sites:
        raise SizeGuard(f"N={spec.n} exceeds the exact-diagonalization cap of {max_sites}")
    if method == "dense":
        return float(np.linalg.eigvalsh(hamiltonian_matrix(spec))[0])
    if method == "sparse":
        H = hamiltonian_matrix(spec, sparse=True)
        v0 = np.random.default_rng(0).standard_normal(H.shape[0])
        vals = spla.eigsh(H, k=1, which="SA", v0=v0, tol=1e-13, return_eigenvectors=False)
        return float(vals[0].real)
    raise ValueError(f"unknown method {method!r}")


def bethe_reference() -> float:
    """Thermodynamic-limit Heisenberg energy per site, spin-1/2 convention."""
    return 0.25 - math.log(2.0)


def bethe_reference_pauli() -> float:
    return 4.0 * bethe_reference()
