"""The 14 parsimonious covariance parameterizations Sigma_g = lambda_g D_g A_g D_g^T.

Three-letter codes: volume / shape / orientation, each Equal, Variable or
(for the diagonal and spherical families) Identity.  Constrained M-step
estimation consumes per-component weighted scatter matrices W_g and masses
n_g and returns covariance sets that maximize the Gaussian part of the
EM Q-function under the model's constraints.  Closed forms exist for
EII, VII, EEI, EVI, VVI, EEE, EEV, EVV, VVV; the remaining models alternate
shape/volume updates with orientation updates (a majorize-minimize step for
the shared-orientation models) until the objective moves by less than
INNER_TOL or INNER_MAX_ITER is hit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneracyError

MODEL_CODES = (
    "EII", "VII",
    "EEI", "VEI", "EVI", "VVI",
    "EEE", "VEE", "EVE", "EEV", "VVE", "VEV", "EVV", "VVV",
)

INNER_TOL = 1e-8
INNER_MAX_ITER = 200
SHAPE_CLAMP = 1e-12

# Numbers of free parameters in the covariance set, by model code.
_PARAM_COUNT = {
    "EII": lambda d, G: 1,
    "VII": lambda d, G: G,
    "EEI": lambda d, G: d,
    "VEI": lambda d, G: G + (d - 1),
    "EVI": lambda d, G: 1 + G * (d - 1),
    "VVI": lambda d, G: G * d,
    "EEE": lambda d, G: d * (d + 1) // 2,
    "VEE": lambda d, G: G + (d + 2) * (d - 1) // 2,
    "EVE": lambda d, G: 1 + (d + 2 * G) * (d - 1) // 2,
    "EEV": lambda d, G: 1 + (d - 1) + G * (d * (d - 1) // 2),
    "VVE": lambda d, G: G + (d + 2 * G) * (d - 1) // 2,
    "VEV": lambda d, G: G + (d - 1) + G * (d * (d - 1) // 2),
    "EVV": lambda d, G: 1 + G * (d + 2) * (d - 1) // 2,
    "VVV": lambda d, G: G * (d * (d + 1) // 2),
}


def check_model_code(code: str) -> str:
    if code not in MODEL_CODES:
        raise ConfigError(f"unknown covariance model {code!r}; expected one of {MODEL_CODES}")
    return code


def param_count(model: str, d: int, G: int) -> int:
    """Free parameters needed to specify the covariance set for the model."""
    check_model_code(model)
    if d < 1 or G < 1:
        raise ConfigError("d and G must be positive")
    return int(_PARAM_COUNT[model](d, G))


@dataclass
class EigenDecomposition:
    """Sigma = volume * orientation @ diag(shape) @ orientation.T with det(shape) = 1."""

    volume: float
    orientation: np.ndarray  # d x d orthogonal, columns are unit eigenvectors
    shape: np.ndarray        # diagonal entries, positive, descending, product 1


@dataclass
class ScatterInput:
    """Sufficient statistics for the covariance M-step."""

    W: np.ndarray  # G x d x d symmetric PSD weighted scatters
    n: np.ndarray  # length-G responsibility masses

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.n = np.asarray(self.n, dtype=np.float64)
        if self.W.ndim != 3 or self.W.shape[1] != self.W.shape[2]:
            raise ConfigError(f"W must be G x d x d, got {self.W.shape}")
        if self.n.shape != (self.W.shape[0],):
            raise ConfigError("n must have one mass per scatter")
        if np.any(self.n < 0):
            raise ConfigError("masses must be non-negative")

    @property
    def G(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def N(self) -> float:
        return float(self.n.sum())


def _eigh_desc(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition, eigenvalues descending, deterministic signs.

    Ties keep LAPACK's original order (stable sort); each eigenvector is
    flipped so its largest-magnitude entry (lowest index on ties) is positive.
    """
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    anchor = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[anchor, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def decompose(Sigma: np.ndarray) -> EigenDecomposition:
    """Split an SPD matrix into volume, shape and orientation."""
    Sigma = np.asarray(Sigma, dtype=np.float64)
    d = Sigma.shape[0]
    if Sigma.shape != (d, d):
        raise ConfigError("Sigma must be square")
    if not np.allclose(Sigma, Sigma.T, atol=1e-10 * max(1.0, np.abs(Sigma).max())):
        raise ConfigError("Sigma must be symmetric")
    vals, vecs = _eigh_desc(Sigma)
    if vals[-1] <= 0:
        raise DegeneracyError(f"matrix is not positive definite (smallest eigenvalue {vals[-1]:g})")
    volume = float(np.exp(np.mean(np.log(vals))))
    return EigenDecomposition(volume=volume, orientation=vecs, shape=vals / volume)


def compose(decomp: EigenDecomposition) -> np.ndarray:
    """Rebuild volume * D diag(A) D^T, exactly symmetric."""
    D = decomp.orientation
    S = decomp.volume * (D * decomp.shape) @ D.T
    return 0.5 * (S + S.T)


def _det_root(vals: np.ndarray) -> float:
    """Geometric mean of positive eigenvalues, the det^(1/d) of an SPD matrix."""
    return float(np.exp(np.mean(np.log(vals))))


def _normalize_shape(raw: np.ndarray) -> tuple[np.ndarray, float]:
    """Clamp then rescale a positive vector to product 1; returns (shape, scale)."""
    raw = np.maximum(raw, SHAPE_CLAMP)
    scale = _det_root(raw)
    return raw / scale, scale


def gaussian_q_value(sigmas, scatter: ScatterInput) -> float:
    """Gaussian Q-function contribution -1/2 sum_g [tr(W_g S_g^-1) + n_g ln|S_g| + n_g d ln 2pi]."""
    d = scatter.d
    total = scatter.N * d * np.log(2.0 * np.pi)
    for W_g, n_g, S_g in zip(scatter.W, scatter.n, sigmas):
        sign, logdet = np.linalg.slogdet(S_g)
        if sign <= 0:
            return -np.inf
        total += float(np.trace(np.linalg.solve(S_g, W_g))) + n_g * logdet
    return -0.5 * total


def _objective(sigmas, scatter: ScatterInput) -> float:
    """sum_g [tr(W_g S_g^-1) + n_g ln|S_g|]; the quantity the M-step minimizes."""
    obj = 0.0
    for W_g, n_g, S_g in zip(scatter.W, scatter.n, sigmas):
        sign, logdet = np.linalg.slogdet(S_g)
        if sign <= 0:
            return np.inf
        obj += float(np.trace(np.linalg.solve(S_g, W_g))) + n_g * logdet
    return obj


def _clamped_eigh(W_g: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Descending eigendecomposition with near-zero eigenvalues lifted off zero."""
    vals, vecs = _eigh_desc(W_g)
    floor = 1e-12 * max(float(np.trace(W_g)) / W_g.shape[0], 1e-300)
    clamped = bool(vals[-1] < floor)
    return np.maximum(vals, floor), vecs, clamped


def _orientation_mm_step(D: np.ndarray, S_list, B_list) -> np.ndarray:
    """One majorize-minimize update of the shared orientation D.

    Minimizes sum_g tr(D' S_g D B_g) over orthogonal D (S_g symmetric PSD,
    B_g positive diagonal given as vectors).
    """
    M = np.zeros_like(D)
    for S_g, b_g in zip(S_list, B_list):
        omega = float(np.linalg.eigvalsh(S_g)[-1])
        M += (omega * D - S_g @ D) * b_g
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def mstep_covariances(
    model: str, scatter: ScatterInput, prev=None
) -> tuple[list[np.ndarray], bool]:
    """Constrained covariance M-step.

    Returns the G covariance matrices (shared factors bit-identical across
    components) and a flag saying whether ridge regularization had to be
    engaged.  Raises DegeneracyError when a component stays singular even
    after regularization.

    prev, when given, supplies the previous EM iteration's covariances; the
    shared-orientation models (EVE, VVE) warm-start their inner orientation
    search from it, which keeps successive M-steps monotone in the
    Q-function (the orientation objective is non-convex, so a cold start
    only reaches a partial optimum from the pooled-scatter basis).
    """
    check_model_code(model)
    d = scatter.d
    if scatter.N <= 0:
        raise DegeneracyError("total responsibility mass is zero")
    if np.any(scatter.n < 1e-12):
        g = int(np.argmax(scatter.n < 1e-12))
        raise DegeneracyError(f"component {g} has (near-)zero mass; cannot estimate its covariance")

    # Univariate data: shape and orientation are vacuous, only volume remains.
    if d == 1:
        model = "EII" if model[0] == "E" else "VII"

    if model in ("EVE", "VVE"):
        sigmas, clamped = _ESTIMATORS[model](scatter, prev)
    else:
        sigmas, clamped = _ESTIMATORS[model](scatter)
    return _regularize(sigmas, clamped)


def _regularize(sigmas, clamped: bool) -> tuple[list[np.ndarray], bool]:
    """Ridge any output whose smallest eigenvalue falls below 1e-10 * trace/d."""
    out = []
    regularized = clamped
    for g, S in enumerate(sigmas):
        S = np.asarray(S, dtype=np.float64)
        d = S.shape[0]
        scale = float(np.trace(S)) / d
        if not np.isfinite(scale) or scale <= 0:
            raise DegeneracyError(f"component {g} produced a singular covariance (trace {scale:g})")
        if float(np.linalg.eigvalsh(S)[0]) < 1e-10 * scale:
            S = S + (1e-8 * scale) * np.eye(d)
            regularized = True
            if float(np.linalg.eigvalsh(S)[0]) <= 0:
                raise DegeneracyError(f"component {g} stayed singular after regularization")
        out.append(S)
    return out, regularized


# ---------------------------------------------------------------------------
# Per-model estimators.  Each returns (list of Sigma_g, clamped flag).

def _est_eii(sc: ScatterInput):
    lam = float(sum(np.trace(W) for W in sc.W)) / (sc.N * sc.d)
    S = lam * np.eye(sc.d)
    return [S.copy() for _ in range(sc.G)], False


def _est_vii(sc: ScatterInput):
    out = []
    for W_g, n_g in zip(sc.W, sc.n):
        lam_g = float(np.trace(W_g)) / (n_g * sc.d)
        out.append(lam_g * np.eye(sc.d))
    return out, False


def _est_eei(sc: ScatterInput):
    diag = sum(np.diag(W) for W in sc.W) / sc.N
    S = np.diag(diag)
    return [S.copy() for _ in range(sc.G)], False


def _est_vvi(sc: ScatterInput):
    return [np.diag(np.diag(W_g) / n_g) for W_g, n_g in zip(sc.W, sc.n)], False


def _est_evi(sc: ScatterInput):
    shapes, scales = [], []
    clamped = False
    for W_g in sc.W:
        raw = np.diag(W_g).copy()
        clamped |= bool(np.any(raw < SHAPE_CLAMP))
        A_g, c_g = _normalize_shape(raw)
        shapes.append(A_g)
        scales.append(c_g)
    lam = float(sum(scales)) / sc.N
    return [np.diag(lam * A_g) for A_g in shapes], clamped


def _est_vei(sc: ScatterInput):
    diags = np.array([np.diag(W_g) for W_g in sc.W])  # G x d
    lam = np.array([float(np.trace(W_g)) / (n_g * sc.d) for W_g, n_g in zip(sc.W, sc.n)])
    clamped = False

    def build(B, lam):
        return [np.diag(l * B) for l in lam]

    prev = np.inf
    B = np.ones(sc.d)
    for _ in range(INNER_MAX_ITER):
        raw = (diags / lam[:, None]).sum(axis=0)
        clamped |= bool(np.any(raw < SHAPE_CLAMP))
        B, _ = _normalize_shape(raw)
        lam = (diags / B[None, :]).sum(axis=1) / (sc.n * sc.d)
        obj = _objective(build(B, lam), sc)
        if abs(prev - obj) <= INNER_TOL * (1.0 + abs(obj)):
            break
        prev = obj
    return build(B, lam), clamped


def _est_eee(sc: ScatterInput):
    S = sum(W for W in sc.W) / sc.N
    S = 0.5 * (S + S.T)
    return [S.copy() for _ in range(sc.G)], False


def _est_vvv(sc: ScatterInput):
    return [0.5 * (W_g + W_g.T) / n_g for W_g, n_g in zip(sc.W, sc.n)], False


def _est_eev(sc: ScatterInput):
    eigs = [_clamped_eigh(W_g) for W_g in sc.W]
    clamped = any(c for _, _, c in eigs)
    lamA = sum(vals for vals, _, _ in eigs) / sc.N
    out = [(vecs * lamA) @ vecs.T for _, vecs, _ in eigs]
    return [0.5 * (S + S.T) for S in out], clamped


def _est_evv(sc: ScatterInput):
    scales, shapes = [], []
    clamped = False
    for W_g in sc.W:
        vals, vecs, c = _clamped_eigh(W_g)
        clamped |= c
        c_g = _det_root(vals)
        scales.append(c_g)
        shapes.append((vecs * (vals / c_g)) @ vecs.T)
    lam = float(sum(scales)) / sc.N
    return [0.5 * lam * (C + C.T) for C in shapes], clamped


def _est_vee(sc: ScatterInput):
    lam = np.array([float(np.trace(W_g)) / (n_g * sc.d) for W_g, n_g in zip(sc.W, sc.n)])
    C = np.eye(sc.d)
    clamped = False

    def build(C, lam):
        return [l * C for l in lam]

    prev = np.inf
    for _ in range(INNER_MAX_ITER):
        raw = sum(W_g / l for W_g, l in zip(sc.W, lam))
        vals, vecs, c = _clamped_eigh(raw)
        clamped |= c
        C = (vecs * (vals / _det_root(vals))) @ vecs.T
        C = 0.5 * (C + C.T)
        Cinv_W = [np.linalg.solve(C, W_g) for W_g in sc.W]
        lam = np.array([float(np.trace(M)) for M in Cinv_W]) / (sc.n * sc.d)
        obj = _objective(build(C, lam), sc)
        if abs(prev - obj) <= INNER_TOL * (1.0 + abs(obj)):
            break
        prev = obj
    return build(C, lam), clamped


def _est_vev(sc: ScatterInput):
    eigs = [_clamped_eigh(W_g) for W_g in sc.W]
    clamped = any(c for _, _, c in eigs)
    omegas = np.array([vals for vals, _, _ in eigs])  # G x d, descending rows
    lam = np.array([float(np.trace(W_g)) / (n_g * sc.d) for W_g, n_g in zip(sc.W, sc.n)])
    A = np.ones(sc.d)

    def build(A, lam):
        return [l * (vecs * A) @ vecs.T for l, (_, vecs, _) in zip(lam, eigs)]

    prev = np.inf
    for _ in range(INNER_MAX_ITER):
        raw = (omegas / lam[:, None]).sum(axis=0)
        A, _ = _normalize_shape(raw)
        lam = (omegas / A[None, :]).sum(axis=1) / (sc.n * sc.d)
        obj = _objective(build(A, lam), sc)
        if abs(prev - obj) <= INNER_TOL * (1.0 + abs(obj)):
            break
        prev = obj
    return [0.5 * (S + S.T) for S in build(A, lam)], clamped


def _shared_orientation_fit(sc: ScatterInput, equal_volume: bool, prev=None):
    """Alternating estimation for EVE (equal volume) and VVE (variable volume).

    The orientation starts from the previous covariances when supplied
    (their shared eigenbasis), otherwise from the pooled scatter's basis.
    """
    if prev is not None:
        _, D = _eigh_desc(np.asarray(prev[0], dtype=np.float64))
    else:
        pooled = sum(W for W in sc.W)
        _, D = _eigh_desc(pooled)
    clamped = False

    def shape_volume(D):
        nonlocal clamped
        shapes, scales = [], []
        for W_g in sc.W:
            T_g = np.einsum("ji,jk,ki->i", D, W_g, D)  # diag(D' W_g D)
            clamped |= bool(np.any(T_g < SHAPE_CLAMP))
            A_g, c_g = _normalize_shape(T_g)
            shapes.append(A_g)
            scales.append(c_g)
        if equal_volume:
            lam = np.full(sc.G, float(sum(scales)) / sc.N)
        else:
            lam = np.array(scales) / sc.n
        return shapes, lam

    def build(D, shapes, lam):
        out = []
        for A, l in zip(shapes, lam):
            S = l * (D * A) @ D.T
            out.append(0.5 * (S + S.T))
        return out

    shapes, lam = shape_volume(D)
    prev = np.inf
    for _ in range(INNER_MAX_ITER):
        S_list = [W_g / l for W_g, l in zip(sc.W, lam)]
        B_list = [1.0 / A_g for A_g in shapes]
        D = _orientation_mm_step(D, S_list, B_list)
        shapes, lam = shape_volume(D)
        obj = _objective(build(D, shapes, lam), sc)
        if abs(prev - obj) <= INNER_TOL * (1.0 + abs(obj)):
            break
        prev = obj
    return build(D, shapes, lam), clamped


def _est_eve(sc: ScatterInput, prev=None):
    return _shared_orientation_fit(sc, equal_volume=True, prev=prev)


def _est_vve(sc: ScatterInput, prev=None):
    return _shared_orientation_fit(sc, equal_volume=False, prev=prev)


_ESTIMATORS = {
    "EII": _est_eii,
    "VII": _est_vii,
    "EEI": _est_eei,
    "VEI": _est_vei,
    "EVI": _est_evi,
    "VVI": _est_vvi,
    "EEE": _est_eee,
    "VEE": _est_vee,
    "EVE": _est_eve,
    "EEV": _est_eev,
    "VVE": _est_vve,
    "VEV": _est_vev,
    "EVV": _est_evv,
    "VVV": _est_vvv,
}
