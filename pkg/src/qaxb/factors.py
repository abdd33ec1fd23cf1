"""Structured matrix-free factors built from per-leg spectral data.

A ``SpectralLeg`` describes one tensor leg through a diagonalizing frame,
the eigenvalues of the leg operator in that frame, and the leg reflection
as a signed permutation of the frame basis (sign 0 marks the reflection
kernel).  Products of such legs give:

* ``QexpFactor`` - the quantum exponential F(T, tau*chi(T<0)) of the
  product operator T = (x) legs with total reflection tau, evaluated as
  g1(T) + g2(T)*tau.  This identity holds whenever tau commutes with T
  and tau^2 = chi(T != 0); both are validated from the leg data.  The
  evaluator therefore never needs a global eigendecomposition and applies
  in O(dim) after per-leg frame transforms.

* ``PhaseOp`` - exp(i * coef * v1 (x) v2 (x) ...) with each v_l diagonal
  in its own frame; used for the mixed position/momentum phase factors.

Frames are dense per-leg unitaries (legs stay small even when the product
space is large).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .deformation import QexpProfile
from .errors import ValidationError
from .linalg import KERNEL_RTOL, LinOp, hermitize


@dataclass
class SpectralLeg:
    """One tensor leg: operator = frame diag(vals) frame*, reflection a signed permutation.

    ``flip`` records whether the reflection negates the leg eigenvalues
    (vals[perm] = -vals, the M-pair case) or preserves them (vals[perm] =
    vals, e.g. an identity reflection next to a positive operator).
    """

    vals: np.ndarray
    perm: np.ndarray
    sign: np.ndarray
    frame: np.ndarray | None = None
    flip: int = -1
    pairing_defect: float = 0.0

    def __post_init__(self):
        self.vals = np.asarray(self.vals, dtype=float)
        self.perm = np.asarray(self.perm, dtype=int)
        self.sign = np.asarray(self.sign, dtype=float)
        n = len(self.vals)
        if not np.array_equal(self.perm[self.perm], np.arange(n)):
            raise ValidationError("leg reflection permutation is not an involution")
        scale = max(np.abs(self.vals).max(initial=0.0), 1e-300)
        live = self.sign != 0
        err = np.abs(self.vals[self.perm] - self.flip * self.vals)[live].max(initial=0.0)
        if err > 1e-8 * scale:
            raise ValidationError(
                f"reflection does not map eigenvalues to {self.flip:+d} times themselves",
                defect=float(err / scale))
        if np.any(self.sign[self.perm] != self.sign):
            raise ValidationError("reflection signs are not selfadjoint-consistent")

    @property
    def dim(self) -> int:
        return len(self.vals)

    def operator_dense(self) -> np.ndarray:
        d = np.diag(self.vals.astype(complex))
        if self.frame is None:
            return d
        return self.frame @ d @ self.frame.conj().T

    def reflection_dense(self) -> np.ndarray:
        n = self.dim
        r = np.zeros((n, n), dtype=complex)
        r[self.perm, np.arange(n)] = self.sign
        if self.frame is None:
            return r
        return self.frame @ r @ self.frame.conj().T


def identity_leg(vals, frame=None) -> SpectralLeg:
    """Leg whose reflection is the identity (commuting, e.g. a positive operator)."""
    vals = np.asarray(vals, dtype=float)
    n = len(vals)
    return SpectralLeg(vals=vals, perm=np.arange(n), sign=np.ones(n),
                       frame=frame, flip=1)


def pair_leg(b, beta) -> SpectralLeg:
    """Spectral leg of a dense M-pair (b, beta).

    Diagonalizes b, then replaces the negative-eigenvalue basis by beta
    applied to the positive one, which renders beta an exact signed
    permutation (a swap) in the new frame.  The projection defect of that
    replacement is recorded, not hidden.
    """
    b = np.asarray(b, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    w, v = np.linalg.eigh(hermitize(b))
    scale = max(np.abs(w).max(initial=0.0), 1e-300)
    tol = KERNEL_RTOL * scale
    pos = np.where(w > tol)[0]
    neg = np.where(w < -tol)[0]
    ker = np.where(np.abs(w) <= tol)[0]
    if len(pos) != len(neg):
        raise ValidationError(
            f"M-pair spectrum is not symmetric: {len(pos)} positive vs {len(neg)} negative")
    vp = v[:, pos]
    vn = beta @ vp  # should span the negative subspace, orthonormally
    defect = 0.0
    if vn.size:
        gram = vn.conj().T @ vn
        defect = float(np.linalg.norm(gram - np.eye(gram.shape[0])))
        # residual of b vn + vn diag(w_pos) measures how exactly beta pairs +mu with -mu
        defect = max(defect, float(np.linalg.norm(b @ vn + vn * w[pos])) / scale)
    vk = v[:, ker]
    n_pos = len(pos)
    n_ker = len(ker)
    raw = np.concatenate([vp, vn, vk], axis=1)
    # Loewdin orthonormalization: minimal correction, keeps the swap orientation
    u_f, _, vh_f = np.linalg.svd(raw)
    frame = u_f[:, :raw.shape[1]] @ vh_f
    defect = max(defect, float(np.linalg.norm(frame - raw)))
    vals = np.concatenate([w[pos], -w[pos], np.zeros(n_ker)])
    perm = np.concatenate([
        n_pos + np.arange(n_pos),
        np.arange(n_pos),
        2 * n_pos + np.arange(n_ker),
    ])
    sign = np.concatenate([np.ones(2 * n_pos), np.zeros(n_ker)])
    leg = SpectralLeg(vals=vals, perm=perm, sign=sign, frame=frame, flip=-1)
    leg.pairing_defect = defect
    return leg


def _to_tensor(x, dims):
    x = np.asarray(x, dtype=complex)
    batched = x.ndim == 2
    batch = x.shape[1] if batched else 1
    return x.reshape(list(dims) + [batch]), batched


def _frames_in(arr, legs):
    for ax, leg in enumerate(legs):
        if leg.frame is not None:
            arr = np.moveaxis(np.tensordot(leg.frame.conj().T, arr, axes=(1, ax)), 0, ax)
    return arr


def _frames_out(arr, legs):
    for ax, leg in enumerate(legs):
        if leg.frame is not None:
            arr = np.moveaxis(np.tensordot(leg.frame, arr, axes=(1, ax)), 0, ax)
    return arr


def _reflect(arr, legs):
    # (R psi)_i = sign[perm[i]] * psi[perm[i]] per axis, batch axis last
    for ax, leg in enumerate(legs):
        arr = np.take(arr, leg.perm, axis=ax)
        shape = [1] * arr.ndim
        shape[ax] = leg.dim
        arr = arr * leg.sign[leg.perm].reshape(shape)
    return arr


class QexpFactor(LinOp):
    """F(T, tau*chi(T<0)) for T, tau assembled from spectral legs.

    ``parity`` multiplies the total reflection (the (-1)^k factor);
    ``conjugate`` selects the adjoint F*.
    """

    def __init__(self, legs, profile: QexpProfile, parity: float = 1.0,
                 conjugate: bool = False):
        self.legs = list(legs)
        self.profile = profile
        self.parity = float(parity)
        self.conjugate = bool(conjugate)
        dims = [leg.dim for leg in self.legs]
        self.dims = dims
        self.dim = int(np.prod(dims))
        total_flip = int(np.prod([leg.flip for leg in self.legs]))
        if total_flip != 1:
            raise ValidationError(
                "total reflection must commute with the product operator "
                f"(product of leg flips is {total_flip})")
        tvals = self.legs[0].vals
        for leg in self.legs[1:]:
            tvals = np.multiply.outer(tvals, leg.vals)
        self._tvals = tvals
        g1 = profile.g1(tvals.ravel()).reshape(tvals.shape)
        g2 = profile.g2(tvals.ravel()).reshape(tvals.shape)
        if self.conjugate:
            g1, g2 = np.conj(g1), np.conj(g2)
        self._g1 = g1[..., None]
        self._g2 = g2[..., None]

    @property
    def H(self):
        out = object.__new__(QexpFactor)
        out.legs, out.profile = self.legs, self.profile
        out.parity, out.conjugate = self.parity, not self.conjugate
        out.dims, out.dim = self.dims, self.dim
        out._tvals = self._tvals
        out._g1, out._g2 = np.conj(self._g1), np.conj(self._g2)
        return out

    def apply(self, x):
        arr, batched = _to_tensor(x, self.dims)
        arr = _frames_in(arr, self.legs)
        out = self._g1 * arr + self.parity * (self._g2 * _reflect(arr, self.legs))
        out = _frames_out(out, self.legs)
        out = out.reshape(self.dim, -1)
        return out if batched else out[:, 0]

    def apply_adjoint(self, x):
        return self.H.apply(x)


class PhaseOp(LinOp):
    """exp(i * coef * v_1 (x) ... (x) v_n) with each v_l diagonal in its frame."""

    def __init__(self, leg_data, coef: float, conjugate: bool = False):
        # leg_data: list of (frame | None, vals)
        self.frames = [f for f, _ in leg_data]
        self.vals = [np.asarray(v, dtype=float) for _, v in leg_data]
        self.dims = [len(v) for v in self.vals]
        self.dim = int(np.prod(self.dims))
        self.coef = float(coef)
        grid = self.vals[0]
        for v in self.vals[1:]:
            grid = np.multiply.outer(grid, v)
        sign = -1.0 if conjugate else 1.0
        self._phase = np.exp(1j * sign * self.coef * grid)[..., None]
        self._conjugate = conjugate

    @property
    def H(self):
        out = object.__new__(PhaseOp)
        out.frames, out.vals, out.dims, out.dim = self.frames, self.vals, self.dims, self.dim
        out.coef = self.coef
        out._phase = np.conj(self._phase)
        out._conjugate = not self._conjugate
        return out

    def _transform(self, arr, forward):
        for ax, frame in enumerate(self.frames):
            if frame is None:
                continue
            mat = frame.conj().T if forward else frame
            arr = np.moveaxis(np.tensordot(mat, arr, axes=(1, ax)), 0, ax)
        return arr

    def apply(self, x):
        arr, batched = _to_tensor(x, self.dims)
        arr = self._transform(arr, forward=True)
        arr = arr * self._phase
        arr = self._transform(arr, forward=False)
        out = arr.reshape(self.dim, -1)
        return out if batched else out[:, 0]

    def apply_adjoint(self, x):
        return self.H.apply(x)
