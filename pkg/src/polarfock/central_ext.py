"""Central extension of the window operator group as (A, q) pairs.

An :class:`ExtElement` is a representative pair; two pairs are equivalent
iff their operators agree and det(q2^{-1} q1) = 1, so det(q) is a class
invariant.  The section tau(A) = (A, A_{++}) is defined where the ++ block
is invertible ("inside W"); outside it the section does not exist and we
raise :class:`SectionDomainError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .linop import (
    RANK_RTOL,
    PolarizedOperator,
    block_split,
    fredholm_det,
    schatten_norm,
)


class SectionDomainError(RuntimeError):
    """Raised when an operator leaves the domain of the tau section."""


def _invertible(m: np.ndarray, scale: float | None = None) -> bool:
    m = np.atleast_2d(m)
    s = np.linalg.svd(m, compute_uv=False)
    reference = max(s[0], 1e-300) if scale is None else max(scale, 1e-300)
    return s[-1] > RANK_RTOL * reference


def _det(m: np.ndarray) -> complex:
    """Determinant via slogdet, safe for moderately large windows."""
    sign, logabs = np.linalg.slogdet(np.atleast_2d(m))
    return complex(sign * np.exp(logabs))


@dataclass(frozen=True)
class ExtElement:
    """Representative pair (A, q) with q acting on the + block."""

    op: PolarizedOperator
    q: np.ndarray = field(repr=False)

    def __post_init__(self):
        qm = np.asarray(self.q, dtype=complex)
        p = self.op.window.pos_count
        if qm.shape != (p, p):
            raise ValueError("q must act on the + block")
        if not _invertible(self.op.entries) or not _invertible(qm):
            raise ValueError("ExtElement components must be invertible")
        object.__setattr__(self, "q", qm)

    def q_deviation(self) -> float:
        """Trace norm of a - q (reported only; vacuous at truncation)."""
        a, _, _, _ = block_split(self.op)
        return schatten_norm(a - self.q, 1)

    def det_q(self) -> complex:
        """Class invariant: det(q) is unchanged under the equivalence."""
        return _det(self.q)

    @staticmethod
    def identity(window) -> "ExtElement":
        return ExtElement(
            PolarizedOperator.identity(window),
            np.eye(window.pos_count, dtype=complex),
        )


def ext_mul(x: ExtElement, y: ExtElement) -> ExtElement:
    if x.op.window != y.op.window:
        raise ValueError("window mismatch")
    return ExtElement(x.op @ y.op, x.q @ y.q)


def ext_inv(x: ExtElement) -> ExtElement:
    return ExtElement(
        PolarizedOperator(x.op.window, np.linalg.inv(x.op.entries)),
        np.linalg.inv(x.q),
    )


def ext_equiv(x: ExtElement, y: ExtElement, tol: float = 1e-10) -> bool:
    """True iff the pairs represent the same class."""
    if x.op.window != y.op.window:
        return False
    if np.linalg.norm(x.op.entries - y.op.entries, 2) > tol:
        return False
    ratio = _det(np.linalg.solve(y.q, x.q))
    return bool(abs(ratio - 1.0) <= tol)


def section_tau(A: PolarizedOperator) -> ExtElement:
    """tau(A) = (A, A_{++}); only defined where the ++ block is invertible."""
    a, _, _, _ = block_split(A)
    if not _invertible(a, scale=np.abs(A.entries).max()):
        raise SectionDomainError("outside W: ++ block is singular")
    return ExtElement(A, a.copy())


def section_sigma_unitary(U: PolarizedOperator) -> ExtElement:
    """Unitary section via polar decomposition of the ++ block."""
    if not U.is_unitary(1e-10):
        raise ValueError("section_sigma_unitary needs a unitary operator")
    a, _, _, _ = block_split(U)
    if not _invertible(a, scale=np.abs(U.entries).max()):
        raise SectionDomainError("outside W: ++ block is singular")
    u, _, vh = np.linalg.svd(a)
    v_u = u @ vh
    return ExtElement(U, v_u)


def group_cocycle_chi(
    A: PolarizedOperator, B: PolarizedOperator, normalized: bool = False
) -> complex:
    """Group 2-cocycle det[A_{++} B_{++} ((AB)_{++})^{-1}] of the tau section."""
    if A.window != B.window:
        raise ValueError("window mismatch")
    a_a, _, _, _ = block_split(A)
    a_b, _, _, _ = block_split(B)
    a_ab, _, _, _ = block_split(A @ B)
    scale = max(np.abs(A.entries).max(), np.abs(B.entries).max())
    for blk in (a_a, a_b, a_ab):
        if not _invertible(blk, scale=scale):
            raise SectionDomainError("outside W: ++ block is singular")
    sa, la = np.linalg.slogdet(a_a)
    sb, lb = np.linalg.slogdet(a_b)
    sab, lab = np.linalg.slogdet(a_ab)
    chi = sa * sb / sab * np.exp(la + lb - lab)
    if normalized:
        chi = chi / abs(chi)
    return complex(chi)


def schwinger_cocycle(X: PolarizedOperator, Y: PolarizedOperator) -> complex:
    """tr(X_{-+} Y_{+-} - Y_{-+} X_{+-}), cross-checked against the
    eps-commutator form (1/4) tr(eps [eps,X] [eps,Y])."""
    if X.window != Y.window:
        raise ValueError("window mismatch")
    _, bx, cx, _ = block_split(X)
    _, by, cy, _ = block_split(Y)
    value = complex(np.trace(cx @ by) - np.trace(cy @ bx))
    eps = X.window.eps()
    comm_x = eps @ X.entries - X.entries @ eps
    comm_y = eps @ Y.entries - Y.entries @ eps
    alt = 0.25 * complex(np.trace(eps @ comm_x @ comm_y))
    scale = max(abs(value), abs(alt), 1.0)
    if abs(value - alt) > 1e-12 * scale:
        raise AssertionError(f"cocycle forms disagree: {value} vs {alt}")
    return value


def cocycle_from_chi(
    X: PolarizedOperator,
    Y: PolarizedOperator,
    h: float = 1e-3,
    richardson: bool = True,
) -> complex:
    """Mixed second difference of chi(e^{sX}, e^{tY}) - chi(e^{tY}, e^{sX}).

    Central O(h^2) scheme; one Richardson level brings the truncation error
    to O(h^4).  Converges to the Schwinger cocycle.
    """
    if X.window != Y.window:
        raise ValueError("window mismatch")
    window = X.window

    def chi_pair(s: float, t: float) -> complex:
        gs = PolarizedOperator(window, expm(s * X.entries))
        gt = PolarizedOperator(window, expm(t * Y.entries))
        try:
            return group_cocycle_chi(gs, gt) - group_cocycle_chi(gt, gs)
        except SectionDomainError as exc:
            raise SectionDomainError(
                f"domain exit during exponentiation at (s={s}, t={t})"
            ) from exc

    def mixed(step: float) -> complex:
        return (
            chi_pair(step, step)
            - chi_pair(step, -step)
            - chi_pair(-step, step)
            + chi_pair(-step, -step)
        ) / (4.0 * step * step)

    coarse = mixed(h)
    if not richardson:
        return coarse
    fine = mixed(h / 2.0)
    return (4.0 * fine - coarse) / 3.0
