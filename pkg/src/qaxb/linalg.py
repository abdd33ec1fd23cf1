"""Finite-dimensional operator substrate.

Lattice models of the canonical pair, bounded-operator wrappers (dense or
matrix-free), the z-transform, spectral functional calculus for one
selfadjoint operator and for a commuting (operator, reflection) pair,
Gaussian probe packets, tensor-leg embeddings and defect measurement.

Dense matrices are used up to dimension ``DENSE_LIMIT``; everything
larger must stay matrix-free (three-leg objects at per-leg dimension 512
would otherwise be materialized).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError, JointCalcError

DENSE_LIMIT = 4096

#: relative threshold below which an eigenvalue counts as kernel
KERNEL_RTOL = 1e-8

#: relative eigenvalue-cluster width for the joint calculus
CLUSTER_RTOL = 1e-6

#: reflection eigenvalues must sit within this distance of {-1, 0, +1}
RHO_HARD_TOL = 1e-3
RHO_ROUND_TOL = 1e-6


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

class LinOp:
    """A linear operator on C^dim: dense entries or a matrix-free applier.

    ``apply`` accepts a vector of shape (dim,) or a batch (dim, k).
    """

    dim: int

    def apply(self, x):
        raise NotImplementedError

    def apply_adjoint(self, x):
        raise NotImplementedError

    @property
    def H(self) -> "LinOp":
        return _AdjointOp(self)

    def to_dense(self) -> np.ndarray:
        if self.dim > DENSE_LIMIT:
            raise ValidationError(
                f"refusing to materialize a {self.dim}-dimensional operator "
                f"(dense limit {DENSE_LIMIT})")
        return np.asarray(self.apply(np.eye(self.dim, dtype=complex)))

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            return ProductOp(self, other)
        return self.apply(other)

    def __add__(self, other):
        return SumOp(self, other, 1.0)

    def __sub__(self, other):
        return SumOp(self, other, -1.0)

    def __mul__(self, scalar):
        return ScaledOp(self, scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledOp(self, -1.0)


class DenseOp(LinOp):
    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"dense operator needs a square matrix, got shape {m.shape}")
        self.matrix = m
        self.dim = m.shape[0]

    def apply(self, x):
        return self.matrix @ x

    def apply_adjoint(self, x):
        return self.matrix.conj().T @ x

    def to_dense(self):
        return self.matrix


class FuncOp(LinOp):
    """Matrix-free operator from an applier and its adjoint applier."""

    def __init__(self, dim, apply_fn, adjoint_fn, label=""):
        self.dim = dim
        self._apply = apply_fn
        self._adjoint = adjoint_fn
        self.label = label

    def apply(self, x):
        return self._apply(x)

    def apply_adjoint(self, x):
        return self._adjoint(x)


class _AdjointOp(LinOp):
    def __init__(self, base):
        self.base = base
        self.dim = base.dim

    def apply(self, x):
        return self.base.apply_adjoint(x)

    def apply_adjoint(self, x):
        return self.base.apply(x)

    @property
    def H(self):
        return self.base


class ProductOp(LinOp):
    def __init__(self, left, right):
        if left.dim != right.dim:
            raise ValidationError(f"dimension mismatch {left.dim} vs {right.dim}")
        self.left, self.right = left, right
        self.dim = left.dim

    def apply(self, x):
        return self.left.apply(self.right.apply(x))

    def apply_adjoint(self, x):
        return self.right.apply_adjoint(self.left.apply_adjoint(x))


class SumOp(LinOp):
    def __init__(self, left, right, sign):
        if left.dim != right.dim:
            raise ValidationError(f"dimension mismatch {left.dim} vs {right.dim}")
        self.left, self.right, self.sign = left, right, sign
        self.dim = left.dim

    def apply(self, x):
        return self.left.apply(x) + self.sign * self.right.apply(x)

    def apply_adjoint(self, x):
        return self.left.apply_adjoint(x) + np.conj(self.sign) * self.right.apply_adjoint(x)


class ScaledOp(LinOp):
    def __init__(self, base, scalar):
        self.base, self.scalar = base, complex(scalar)
        self.dim = base.dim

    def apply(self, x):
        return self.scalar * self.base.apply(x)

    def apply_adjoint(self, x):
        return np.conj(self.scalar) * self.base.apply_adjoint(x)


def identity_op(dim) -> LinOp:
    return FuncOp(dim, lambda x: np.array(x, copy=True), lambda x: np.array(x, copy=True), "I")


def as_dense(op) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    return op.to_dense()


def adjoint_defect(op: LinOp, rng, probes: int = 3) -> float:
    """Max relative defect of <A phi, psi> = <phi, A* psi> on random probes."""
    worst = 0.0
    for _ in range(probes):
        phi = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
        psi = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
        lhs = np.vdot(psi, op.apply(phi))
        rhs = np.vdot(op.apply_adjoint(psi), phi)
        scale = max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def hermitize(matrix):
    return 0.5 * (matrix + matrix.conj().T)


def hermiticity_defect(matrix) -> float:
    matrix = np.asarray(matrix)
    scale = max(np.linalg.norm(matrix), 1e-300)
    return float(np.linalg.norm(matrix - matrix.conj().T) / scale)


# ---------------------------------------------------------------------------
# lattice and canonical pair
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeLine:
    """Position grid q_j = q0 + j*dq with the standard centered momentum grid.

    The momentum spectrum is p_m = hbar * (2*pi/(n*dq)) * (m - n/2); plane
    waves e^{i p q / hbar}/sqrt(n) are exactly orthonormal on the grid.
    """

    n: int
    q0: float
    dq: float
    hbar: float

    def __post_init__(self):
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValidationError(f"lattice size must be a power of two >= 4, got {self.n}")
        if self.dq <= 0:
            raise ValidationError(f"lattice spacing must be positive, got {self.dq}")

    @property
    def positions(self) -> np.ndarray:
        return self.q0 + self.dq * np.arange(self.n)

    @property
    def momenta(self) -> np.ndarray:
        return self.hbar * (2 * math.pi / (self.n * self.dq)) * (np.arange(self.n) - self.n / 2)

    def momentum_frame(self) -> np.ndarray:
        """Unitary U with columns the plane waves; P = U diag(p) U*."""
        phase = np.outer(self.positions, self.momenta) / self.hbar
        return np.exp(1j * phase) / math.sqrt(self.n)


def canonical_pair(lattice: LatticeLine):
    """Position and momentum operators (Q, P) on the lattice, both selfadjoint."""
    q = DenseOp(np.diag(lattice.positions.astype(complex)))
    u = lattice.momentum_frame()
    p = DenseOp(hermitize((u * lattice.momenta) @ u.conj().T))
    return q, p


# ---------------------------------------------------------------------------
# z-transform
# ---------------------------------------------------------------------------

def z_transform(op) -> np.ndarray:
    """Bounded encoding z_T = T (I + T*T)^(-1/2); always has norm <= 1."""
    t = as_dense(op)
    u, s, vh = np.linalg.svd(t)
    return (u * (s / np.sqrt(1.0 + s * s))) @ vh


def inverse_z(z) -> np.ndarray:
    """Recover T = Z (I - Z*Z)^(-1/2); requires ||Z|| strictly below 1."""
    z = as_dense(z)
    u, s, vh = np.linalg.svd(z)
    if s.max(initial=0.0) >= 1.0 - 1e-8:
        raise ValidationError("inverse z-transform is numerically singular",
                              defect=float(s.max(initial=0.0)))
    return (u * (s / np.sqrt(1.0 - s * s))) @ vh


# ---------------------------------------------------------------------------
# functional calculus
# ---------------------------------------------------------------------------

def func_calc(op, fn, hermiticity_tol: float = 1e-10) -> np.ndarray:
    """f(T) for selfadjoint T by eigendecomposition; exact on diagonal input."""
    t = as_dense(op)
    asym = hermiticity_defect(t)
    if asym > hermiticity_tol:
        raise ValidationError("func_calc input is not selfadjoint", defect=asym)
    off = t - np.diag(np.diag(t))
    if not off.any():
        vals = fn(np.real(np.diag(t)))
        return np.diag(np.asarray(vals, dtype=complex))
    w, v = np.linalg.eigh(hermitize(t))
    return (v * np.asarray(fn(w), dtype=complex)) @ v.conj().T


@dataclass
class JointSpectrum:
    """Joint diagonalization of a commuting (selfadjoint, reflection) pair.

    ``transform`` holds orthonormal eigenvectors as columns; column i
    carries eigenvalue ``values[i]`` of the first operator and label
    ``labels[i]`` in {-1, 0, +1} of the reflection.
    """

    transform: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    rho_rounding: float = 0.0

    def lines(self):
        """Group columns into (value, label, index arrays)."""
        out = []
        order = np.lexsort((self.labels, self.values))
        i = 0
        vals, labs = self.values[order], self.labels[order]
        while i < len(order):
            j = i
            while j < len(order) and vals[j] == vals[i] and labs[j] == labs[i]:
                j += 1
            out.append((float(vals[i]), int(labs[i]), order[i:j]))
            i = j
        return out


def joint_spectrum(f, phi, support: str = "negative",
                   commute_tol: float = 1e-8) -> JointSpectrum:
    """Simultaneously diagonalize f and a reflection phi commuting with it.

    phi^2 must be (numerically) the spectral projection chi(f<0) when
    ``support`` is "negative", or chi(f!=0) when "nonzero"; the reflection
    eigenvalues are classified into {-1, 0, +1} with a hard failure when
    any of them strays more than RHO_HARD_TOL from that set.  Commutation
    and projection defects are measured relative to the operator scales.
    """
    fm = as_dense(f)
    pm = as_dense(phi)
    for name, m in (("f", fm), ("phi", pm)):
        asym = hermiticity_defect(m)
        if asym > 1e-8:
            raise ValidationError(f"joint_spectrum: {name} is not selfadjoint", defect=asym)
    fnorm = max(np.linalg.norm(fm, 2), 1e-300)
    pnorm = max(np.linalg.norm(pm, 2), 1e-300)
    comm = np.linalg.norm(fm @ pm - pm @ fm, 2) / (fnorm * pnorm)
    if comm > commute_tol:
        raise ValidationError("joint_spectrum: operators do not commute", defect=comm)
    p2 = pm @ pm
    idem = np.linalg.norm(p2 @ p2 - p2, 2) / max(np.linalg.norm(p2, 2), 1e-300) if p2.any() else 0.0
    if idem > 1e-8:
        raise ValidationError("joint_spectrum: phi^2 is not a projection", defect=idem)

    w, v = np.linalg.eigh(hermitize(fm))
    kernel_tol = KERNEL_RTOL * max(np.abs(w).max(initial=0.0), 1e-300)
    # domination check: phi^2 must vanish where the declared support does
    if support == "negative":
        outside = w > -kernel_tol
    elif support == "nonzero":
        outside = np.abs(w) <= kernel_tol
    else:
        raise ValueError(f"unknown support {support!r}")
    if np.any(outside):
        vo = v[:, outside]
        dom = np.linalg.norm(p2 @ vo, 2)
        if dom > 1e-6:
            raise ValidationError(
                f"joint_spectrum: phi^2 is not dominated by the declared support ({support})",
                defect=float(dom))

    # cluster eigenvalues of f, then diagonalize phi inside each cluster
    cluster_tol = CLUSTER_RTOL * max(np.abs(w).max(initial=0.0), 1e-300)
    values = np.empty(len(w))
    labels = np.zeros(len(w), dtype=int)
    transform = np.array(v, copy=True)
    rho_rounding = 0.0
    i = 0
    while i < len(w):
        j = i
        while j + 1 < len(w) and w[j + 1] - w[i] <= cluster_tol:
            j += 1
        idx = slice(i, j + 1)
        rep = float(np.mean(w[idx]))
        values[idx] = rep
        if rep < -kernel_tol:
            block = v[:, idx]
            sub = hermitize(block.conj().T @ pm @ block)
            rw, rv = np.linalg.eigh(sub)
            rounded = np.round(rw).astype(int)
            dist = np.abs(rw - rounded)
            if np.any(np.abs(rounded) > 1) or np.any(dist > RHO_HARD_TOL):
                raise JointCalcError(
                    f"reflection eigenvalue {rw[np.argmax(dist)]:+.6f} too far from "
                    "{-1, 0, +1} on a negative cluster")
            rho_rounding = max(rho_rounding, float(dist.max(initial=0.0)))
            transform[:, idx] = block @ rv
            labels[idx] = rounded
        elif rep <= kernel_tol:
            values[idx] = 0.0
        i = j + 1
    return JointSpectrum(transform=transform, values=values, labels=labels,
                         rho_rounding=rho_rounding)


def joint_calc(f, phi, fn, support: str = "negative",
               commute_tol: float = 1e-8) -> np.ndarray:
    """F(f, phi) = sum of F(r, rho) over the joint spectral lines."""
    spec = joint_spectrum(f, phi, support=support, commute_tol=commute_tol)
    diag = np.array([fn(r, rho) for r, rho in zip(spec.values, spec.labels)], dtype=complex)
    return (spec.transform * diag) @ spec.transform.conj().T


# ---------------------------------------------------------------------------
# packets and defects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Packet:
    """Normalized discretized Gaussian at phase-space center (q_c, p_c)."""

    lattice: LatticeLine
    q_c: float
    p_c: float
    width: float
    vector: np.ndarray = field(repr=False, compare=False, default=None)


def gaussian_packet(lattice: LatticeLine, q_c: float, p_c: float, width: float) -> Packet:
    """Gaussian e^{-(q-q_c)^2/(4 w^2)} e^{i p_c q/hbar}, normalized on the grid.

    The center must sit at least 4 widths from both lattice ends, and the
    resulting boundary mass (outside [q0+4w, q0+n dq-4w]) must stay below
    1e-6; violations are rejected rather than silently wrapped.
    """
    if width <= 0:
        raise ValidationError(f"packet width must be positive, got {width}")
    q = lattice.positions
    lo, hi = lattice.q0, lattice.q0 + lattice.n * lattice.dq
    if q_c - lo < 4 * width or hi - q_c < 4 * width:
        raise ValidationError(
            f"packet center {q_c:.3f} closer than 4 widths to a lattice end [{lo:.3f}, {hi:.3f}]")
    amp = np.exp(-((q - q_c) ** 2) / (4.0 * width ** 2)).astype(complex)
    amp *= np.exp(1j * p_c * q / lattice.hbar)
    amp /= np.linalg.norm(amp)
    inside = (q >= lo + 4 * width) & (q <= hi - 4 * width)
    boundary_mass = float(np.sum(np.abs(amp[~inside]) ** 2))
    if boundary_mass > 1e-6:
        raise ValidationError("packet boundary mass above 1e-6", defect=boundary_mass)
    return Packet(lattice=lattice, q_c=q_c, p_c=p_c, width=width, vector=amp)


@dataclass
class DefectReport:
    max: float
    mean: float
    op_norm: float | None = None

    def __str__(self):
        extra = f", op_norm={self.op_norm:.3e}" if self.op_norm is not None else ""
        return f"defect(max={self.max:.3e}, mean={self.mean:.3e}{extra})"


def defect(a, b, vectors) -> DefectReport:
    """Residual statistics of ||(A - B) v|| over probe vectors."""
    a_op = a if isinstance(a, LinOp) else DenseOp(a)
    b_op = b if isinstance(b, LinOp) else DenseOp(b)
    if a_op.dim != b_op.dim:
        raise ValidationError(f"dimension mismatch {a_op.dim} vs {b_op.dim}")
    norms = []
    for v in vectors:
        vec = v.vector if isinstance(v, Packet) else np.asarray(v)
        norms.append(float(np.linalg.norm(a_op.apply(vec) - b_op.apply(vec))))
    op_norm = None
    if isinstance(a_op, DenseOp) and isinstance(b_op, DenseOp):
        op_norm = float(np.linalg.norm(a_op.matrix - b_op.matrix, 2))
    return DefectReport(max=max(norms), mean=float(np.mean(norms)), op_norm=op_norm)


# ---------------------------------------------------------------------------
# tensor legs
# ---------------------------------------------------------------------------

def _embed_apply(op, legs, dims, x, adjoint):
    x = np.asarray(x, dtype=complex)
    batched = x.ndim == 2
    batch = x.shape[1] if batched else 1
    full = list(dims) + [batch]
    arr = x.reshape(full)
    axes = [l - 1 for l in legs]
    arr = np.moveaxis(arr, axes, range(len(axes)))
    moved_shape = arr.shape
    sel = int(np.prod([dims[a] for a in axes]))
    mat = arr.reshape(sel, -1)
    out = op.apply_adjoint(mat) if adjoint else op.apply(mat)
    out = np.asarray(out).reshape(moved_shape)
    out = np.moveaxis(out, range(len(axes)), axes)
    out = out.reshape(int(np.prod(dims)), batch)
    return out if batched else out[:, 0]


def leg_embed(op: LinOp, legs, dims) -> FuncOp:
    """Act with ``op`` on the selected tensor legs (1-based), identity elsewhere.

    The operator's own leg order follows the order in ``legs``; embeddings
    on disjoint legs commute.
    """
    legs = tuple(legs)
    if len(set(legs)) != len(legs):
        raise ValidationError(f"repeated legs in {legs}")
    if any(l < 1 or l > len(dims) for l in legs):
        raise ValidationError(f"legs {legs} out of range for {len(dims)} legs")
    sel = int(np.prod([dims[l - 1] for l in legs]))
    if sel != op.dim:
        raise ValidationError(
            f"operator dimension {op.dim} does not match selected legs product {sel}")
    total = int(np.prod(dims))
    return FuncOp(
        total,
        lambda x: _embed_apply(op, legs, dims, x, adjoint=False),
        lambda x: _embed_apply(op, legs, dims, x, adjoint=True),
        label=f"embed{legs}",
    )


def kron_all(*mats) -> np.ndarray:
    out = np.asarray(mats[0], dtype=complex)
    for m in mats[1:]:
        out = np.kron(out, np.asarray(m, dtype=complex))
    return out
