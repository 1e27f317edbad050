"""Per-bin LCMV beamformer designs and adaptive weight computation.

Weights follow the ``z = w^H y`` convention; all arrays keep bins on a
leading axis so a whole spectrum (or a block of frames) is solved at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acoustics import REF_LEFT, REF_RIGHT, DirectivitySet

SIDES = ("left", "right")
REF_INDEX = {"left": REF_LEFT, "right": REF_RIGHT}
MAX_INTERFERER_CONSTRAINTS = 2  # k <= M - 2 for the 2+2 configuration


class DegenerateConstraintsError(np.linalg.LinAlgError):
    def __init__(self, bin_index, detail=""):
        self.bin_index = bin_index
        super().__init__(f"constraint matrix numerically rank deficient at bin {bin_index}{detail}")


class ConstraintCountError(ValueError):
    pass


@dataclass(frozen=True)
class DesignParams:
    zeta: float = 1.0
    eta: float = 0.2
    delta_deg: float = 5.0
    rho: float = 0.7
    loading: float = 1e-4
    forgetting: float = 0.985

    def __post_init__(self):
        if not 0 < self.zeta <= 1:
            raise ValueError(f"zeta must be in (0, 1], got {self.zeta}")
        if not 0 <= self.eta < 1:
            raise ValueError(f"eta must be in [0, 1), got {self.eta}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.delta_deg <= 0:
            raise ValueError(f"delta must be positive, got {self.delta_deg}")
        if not 0 < self.forgetting <= 1:
            raise ValueError(f"forgetting factor must be in (0, 1], got {self.forgetting}")


@dataclass
class ConstraintSet:
    """Per-bin constraint matrix ``C`` (bin, mic, k) and response gains ``g`` (bin, k).

    Gains are responses of the output ``w^H y``: a design satisfies
    ``w^H C = g``, i.e. ``C^H w = conj(g)``.
    """

    C: np.ndarray
    g: np.ndarray
    side: str
    angles: list = field(default_factory=list)
    design: str = ""

    @property
    def k(self) -> int:
        return self.C.shape[-1]


def hermitize(R):
    return 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))


def update_covariance(R_prev, y, lam):
    """One step of ``R = lam*R_prev + (1-lam)*y y^H`` (batched over leading axes)."""
    y = np.asarray(y)
    R = lam * R_prev + (1 - lam) * y[..., :, None] * np.conj(y[..., None, :])
    return hermitize(R)


def loaded(R, delta_rel):
    M = R.shape[-1]
    load = delta_rel * np.real(np.trace(R, axis1=-2, axis2=-1)) / M
    return R + load[..., None, None] * np.eye(M)


def lcmv_weights(R, C, g, delta_rel=1e-4, rank_tol=1e-10):
    """Minimum-variance weights subject to ``C^H w = g``.

    Solves against the diagonally loaded ``R + delta_rel*trace(R)/M*I`` by
    whitening with its Cholesky factor and taking a QR of the whitened
    constraints, which keeps the constraint residual at working precision.

    Parameters
    ----------
    R : (..., M, M) Hermitian positive semidefinite
    C : (..., M, k)
    g : (..., k) or (..., k, S) for S gain vectors sharing one ``C``

    Returns
    -------
    w : (..., M) or (..., M, S)
    """
    R = np.asarray(R, dtype=complex)
    C = np.asarray(C, dtype=complex)
    g = np.asarray(g, dtype=complex)
    vec = g.ndim == C.ndim - 1
    if vec:
        g = g[..., None]
    try:
        L = np.linalg.cholesky(loaded(R, delta_rel))
    except np.linalg.LinAlgError as exc:
        raise DegenerateConstraintsError(_first_bad_bin(R), ": covariance not positive definite") from exc
    Cw = np.linalg.solve(L, C)
    Q, Rq = np.linalg.qr(Cw)
    diag = np.abs(np.diagonal(Rq, axis1=-2, axis2=-1))
    ratio = diag.min(axis=-1) / np.maximum(diag.max(axis=-1), np.finfo(float).tiny)
    if np.any(ratio < rank_tol):
        bad = np.unravel_index(int(np.argmin(ratio)), ratio.shape) if ratio.ndim else ()
        raise DegenerateConstraintsError(bad)
    u = np.linalg.solve(np.conj(np.swapaxes(Rq, -1, -2)), g)
    w = np.linalg.solve(np.conj(np.swapaxes(L, -1, -2)), Q @ u)
    return w[..., 0] if vec else w


def _first_bad_bin(R):
    if R.ndim == 2:
        return ()
    ev = np.linalg.eigvalsh(hermitize(R))
    return np.unravel_index(int(np.argmin(ev[..., 0])), ev.shape[:-1])


def _g_entry(d, side):
    return d[:, REF_INDEX[side]]


def design_bmvdr(dset: DirectivitySet, theta_hat: float, side: str, snap: bool = False) -> ConstraintSet:
    d = dset.at(theta_hat, snap)
    return ConstraintSet(d[:, :, None], _g_entry(d, side)[:, None], side,
                         [float(np.mod(theta_hat, 360))], "bmvdr")


def design_robust_tlcmv(dset: DirectivitySet, theta_hat: float, delta: float, side: str,
                        snap: bool = False) -> ConstraintSet:
    angles = [float(np.mod(theta_hat + delta, 360)), float(np.mod(theta_hat - delta, 360))]
    ds = [dset.at(a, snap) for a in angles]
    C = np.stack(ds, axis=-1)
    g = np.stack([_g_entry(d, side) for d in ds], axis=-1)
    return ConstraintSet(C, g, side, angles, "robust_tlcmv")


def design_blcmv(dset: DirectivitySet, theta_hat: float, interferer_hats, zeta: float, eta: float,
                 side: str, snap: bool = False) -> ConstraintSet:
    interferer_hats = list(interferer_hats)
    if len(interferer_hats) > MAX_INTERFERER_CONSTRAINTS:
        raise ConstraintCountError(
            f"{len(interferer_hats)} interferer constraints requested; at most k <= M - 2 = "
            f"{MAX_INTERFERER_CONSTRAINTS} are available with 4 microphones"
        )
    angles = [float(np.mod(a, 360)) for a in [theta_hat, *interferer_hats]]
    ds = [dset.at(a, snap) for a in angles]
    gains = [zeta] + [eta] * len(interferer_hats)
    C = np.stack(ds, axis=-1)
    g = np.stack([s * _g_entry(d, side) for s, d in zip(gains, ds)], axis=-1)
    return ConstraintSet(C, g, side, angles, "blcmv")


def selector_weights(n_bins: int, side: str, n_mics: int = 4) -> np.ndarray:
    w = np.zeros((n_bins, n_mics), dtype=complex)
    w[:, REF_INDEX[side]] = 1.0
    return w


def apply_weights(w, y):
    """``z(f, t) = w^H(f[, t]) y(f, t)``; ``w`` is (bin, mic) or (frame, bin, mic)."""
    return np.einsum("...m,...m->...", np.conj(w), y)


def bmvdr_partial_noise(z, y_ref, rho):
    return rho * z + (1 - rho) * y_ref


def beampattern(w, dset: DirectivitySet) -> np.ndarray:
    """``|w^H(f) d(f, theta)|^2`` as a (bin, angle) grid."""
    resp = np.einsum("fm,afm->fa", np.conj(w), dset.responses)
    return np.abs(resp) ** 2


def isotropic_diffuse_covariance(dset: DirectivitySet) -> np.ndarray:
    d = dset.responses
    return np.einsum("afm,afn->fmn", d, np.conj(d)) / d.shape[0]


def fixed_weights(R, constraints: ConstraintSet, delta_rel=1e-4):
    return lcmv_weights(R, constraints.C, np.conj(constraints.g), delta_rel)


def adaptive_weights(cov_frames, constraints: dict, lam=0.985, delta_rel=1e-4,
                     warmup_frames=0, stride=1, init=1e-6, chunk=128):
    """Frame-by-frame weights from a recursively averaged covariance.

    ``cov_frames`` (frame, bin, mic) feed the covariance; frame ``t`` weights
    use the covariance updated through frame ``t``. Frames before
    ``warmup_frames`` use the reference-microphone selector. The covariance
    starts at ``init`` times the first frame's mean power times I, which keeps
    the weights invariant to the overall signal scale.

    Returns a dict side -> (frame, bin, mic) weights.
    """
    T, F, M = cov_frames.shape
    sides = list(constraints)
    C = constraints[sides[0]].C
    shared = all(np.array_equal(constraints[s].C, C) for s in sides)
    G = np.conj(np.stack([constraints[s].g for s in sides], axis=-1))  # (F, k, S)
    out = {s: np.empty((T, F, M), dtype=complex) for s in sides}
    for s in sides:
        out[s][:min(warmup_frames, T)] = selector_weights(F, s, M)

    p0 = float(np.mean(np.abs(cov_frames[0]) ** 2)) if T else 0.0
    R = np.broadcast_to(init * (p0 if p0 > 0 else 1.0) * np.eye(M, dtype=complex), (F, M, M)).copy()
    solve_at = [t for t in range(T) if t >= warmup_frames and (t - warmup_frames) % stride == 0]
    solve_set = set(solve_at)
    buf, buf_t = [], []

    def flush():
        if not buf:
            return
        Rb = np.stack(buf)
        if shared:
            W = lcmv_weights(Rb, C[None], G[None], delta_rel)
            for i, s in enumerate(sides):
                for j, t in enumerate(buf_t):
                    out[s][t] = W[j, :, :, i]
        else:
            for s in sides:
                W = lcmv_weights(Rb, constraints[s].C[None], np.conj(constraints[s].g)[None], delta_rel)
                for j, t in enumerate(buf_t):
                    out[s][t] = W[j]
        buf.clear()
        buf_t.clear()

    y = cov_frames
    for t in range(T):
        yt = y[t]
        R = lam * R + (1 - lam) * yt[:, :, None] * np.conj(yt[:, None, :])
        if t in solve_set:
            buf.append(hermitize(R))
            buf_t.append(t)
            if len(buf) >= chunk:
                flush()
    flush()
    # hold weights between strided solves
    if stride > 1:
        last = None
        for t in range(warmup_frames, T):
            if t in solve_set:
                last = t
            elif last is not None:
                for s in sides:
                    out[s][t] = out[s][last]
    return out
