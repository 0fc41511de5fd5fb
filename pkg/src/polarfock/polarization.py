"""Polarizations as subspaces of a mode window.

A polarization is held by an orthonormal column basis.  All rank and
intersection decisions use the shared relative singular-value threshold
from :mod:`polarfock.linop`; at finite truncation every pair of subspaces
is commensurable, so class membership is diagnosed through distances and
cutoff scans rather than booleans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linop import (
    RANK_RTOL,
    ModeWindow,
    PolarizedOperator,
    WindowedOperator,
    fredholm_det,
    fredholm_index,
    rank,
    schatten_norm,
)


@dataclass(frozen=True)
class Polarization:
    """Subspace of a mode window with an orthonormal column basis."""

    window: ModeWindow
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim != 2 or b.shape[0] != self.window.dim:
            raise ValueError("basis must be window_dim x k")
        k = b.shape[1]
        if not 1 <= k < self.window.dim:
            raise ValueError("need 1 <= dim V < window dim")
        gram = b.conj().T @ b - np.eye(k)
        if np.abs(gram).max() > 1e-12:
            raise ValueError("basis columns must be orthonormal to 1e-12")
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T


@dataclass(frozen=True)
class AdmissibleBasis:
    """Map from reference modes into the window spanning a target subspace.

    ``ref_defect`` reports the trace norm of P_ref o map - Id, the finite
    shadow of the determinant condition on admissible bases.
    """

    target: Polarization
    map: np.ndarray = field(repr=False)
    ref_defect: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.map, dtype=complex)
        if m.shape != (self.target.window.dim, self.target.dim):
            raise ValueError("map must be window_dim x dim(target)")
        object.__setattr__(self, "map", m)


def positive_half(window: ModeWindow) -> Polarization:
    """The canonical H_+ of the window."""
    b = np.zeros((window.dim, window.pos_count), dtype=complex)
    b[window.neg_count :, :] = np.eye(window.pos_count)
    return Polarization(window, b)


def negative_half(window: ModeWindow) -> Polarization:
    b = np.zeros((window.dim, window.neg_count), dtype=complex)
    b[: window.neg_count, :] = np.eye(window.neg_count)
    return Polarization(window, b)


def span(window: ModeWindow, vectors: np.ndarray) -> Polarization:
    """Polarization spanned by the given (not necessarily orthonormal) columns."""
    v = np.atleast_2d(np.asarray(vectors, dtype=complex))
    if v.shape[0] != window.dim:
        v = v.T
    q, r = np.linalg.qr(v)
    keep = np.abs(np.diag(r)) > RANK_RTOL * max(np.abs(np.diag(r)).max(), 1e-300)
    return Polarization(window, q[:, keep])


def _require_same_window(V: Polarization, W: Polarization) -> None:
    if V.window != W.window:
        raise ValueError("polarizations live on different windows")


def hs_distance(V: Polarization, W: Polarization) -> float:
    """Hilbert-Schmidt norm of P_V - P_W."""
    _require_same_window(V, W)
    return schatten_norm(V.projector() - W.projector(), 2)


def relative_charge(V: Polarization, W: Polarization) -> int:
    """Index of P_W restricted to V -> W.

    ker - coker of the compression cancels the rank, so the result is
    exactly dim V - dim W at finite dimension.
    """
    _require_same_window(V, W)
    compression = W.basis.conj().T @ V.basis
    r = rank(compression)
    index = (V.dim - r) - (W.dim - r)
    assert index == V.dim - W.dim
    return index


def apply_operator(A, V: Polarization) -> Polarization:
    """Image subspace A V, dropping directions that fall below rank threshold."""
    if isinstance(A, WindowedOperator):
        mat = A.core.entries
        window = A.core.window
    else:
        mat = A.entries
        window = A.window
    if window != V.window:
        raise ValueError("operator and polarization windows differ")
    return span(window, mat @ V.basis)


def charge_transform(A, V: Polarization) -> int:
    """Net charge created by A: charge(AV, H+) - charge(V, H+).

    Asserts agreement with the ++ Fredholm index of A.
    """
    if isinstance(A, PolarizedOperator):
        if rank(A.entries) < A.window.dim:
            raise ValueError("operator is singular on the window")
        expected = 0
        window = A.window
    else:
        expected = fredholm_index(A, "++")
        window = A.core.window
    hplus = positive_half(window)
    delta = relative_charge(apply_operator(A, V), hplus) - relative_charge(V, hplus)
    if delta != expected:
        raise AssertionError(
            f"charge transform {delta} disagrees with ++ index {expected}"
        )
    return delta


def intersection_dim(V: Polarization, W: Polarization) -> int:
    """dim(V cap W) via singular values of P_V P_W near one."""
    _require_same_window(V, W)
    s = np.linalg.svd(V.projector() @ W.projector(), compute_uv=False)
    return int(np.sum(s > 1.0 - RANK_RTOL))


def commensurability(V: Polarization, W: Polarization):
    """Codimensions of V cap W inside V and inside W."""
    k = intersection_dim(V, W)
    codim_v = V.dim - k
    codim_w = W.dim - k
    return codim_v, codim_w


def admissible_basis(
    W: Polarization,
    ref: Polarization,
    isometric: bool = False,
    require_invertible_overlap: bool = True,
) -> AdmissibleBasis:
    """Admissible basis for W relative to a reference polarization.

    The construction projects the reference into W and completes any rank
    deficiency by mapping ker(P_W|_ref) onto a complement of the image
    inside W, mirroring the existence proof for admissible bases.  The
    completion always yields an isomorphism onto W, but det(P_ref o map)
    vanishes identically whenever P_ref restricted to W is rank deficient
    (the Pfluecker zero set); with ``require_invertible_overlap`` that case
    raises instead of returning a zero-overlap basis.
    """
    _require_same_window(W, ref)
    if W.dim != ref.dim:
        raise ValueError("reference and target dimensions differ")
    k = W.dim
    # P_W restricted to ref, expressed on window coordinates
    coeff = W.basis.conj().T @ ref.basis  # k x k
    w_tilde = W.basis @ coeff
    u, s, vh = np.linalg.svd(coeff)
    cutoff = RANK_RTOL * max(s[0], 1e-300)
    deficiency = int(np.sum(s <= cutoff))
    mapping = w_tilde
    if deficiency:
        # complement of im(w_tilde) inside W
        img_dirs = u[:, : k - deficiency]
        comp = np.eye(k) - img_dirs @ img_dirs.conj().T
        q, r = np.linalg.qr(comp)
        keep = np.abs(np.diag(r)) > RANK_RTOL * max(np.abs(np.diag(r)).max(), 1e-300)
        comp_basis = W.basis @ q[:, keep][:, :deficiency]
        ker_dirs = vh.conj().T[:, k - deficiency :]
        mapping = w_tilde + comp_basis @ ker_dirs.conj().T
    if isometric:
        # polar step: map (map^H map)^{-1/2}
        uu, ss, vvh = np.linalg.svd(mapping, full_matrices=False)
        mapping = uu @ vvh
    overlap = ref.basis.conj().T @ mapping
    if require_invertible_overlap and abs(fredholm_det(overlap)) <= 1e-14:
        raise ValueError(
            "admissible-basis construction degenerate: P_ref restricted to the"
            " target is rank deficient, no completion can fix the determinant"
        )
    defect = schatten_norm(overlap - np.eye(k), 1)
    return AdmissibleBasis(W, mapping, ref_defect=defect)


def polarization_to_json(V: Polarization) -> dict:
    return {
        "neg": V.window.neg_count,
        "pos": V.window.pos_count,
        "re": V.basis.real.tolist(),
        "im": V.basis.imag.tolist(),
    }


def polarization_from_json(payload: dict) -> Polarization:
    try:
        window = ModeWindow(int(payload["neg"]), int(payload["pos"]))
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed polarization payload: {exc}") from exc
    if re.shape != im.shape or re.ndim != 2:
        raise ValueError("re/im must be matching 2-d arrays")
    return Polarization(window, re + 1j * im)
