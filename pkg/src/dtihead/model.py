"""Prediction head: projection, FiLM conditioning, cosine-RBF affinity.

The computation, for a drug embedding ``z_d`` and protein embedding ``z_t``:

    p_d = proj_drug_w @ z_d + proj_drug_b
    p_t = proj_prot_w @ z_t + proj_prot_b
    gamma = film_gamma_w @ p_t + film_gamma_b
    beta  = film_beta_w  @ p_t + film_beta_b
    h = gamma * p_d + beta              (FiLM; skipped entirely in no-FiLM mode)
    u = h / ||h||,  v = p_t / ||p_t||
    dist = clamp(1 - u . v, 0, 2)
    phi_j = exp(-(dist - mu_j)^2 / (2 sigma^2))
    pred = head_w . phi + head_b

Everything here is a pure function over immutable inputs; safe to call
concurrently. Gradients are hand-derived (no autodiff) and verified against
central finite differences by ``grad_check``.

Two execution paths share the same math: per-pair ``forward``/``backward``
(used by prediction, evaluation and gradient checking) and the vectorized
``forward_pairs``/``backward_pairs`` (used by the training loop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import DegenerateInputError, DimensionError, ParameterError

# Epsilon floor applied inside L2 normalization on the training path. Strict
# mode (eps=0) raises on zero-norm vectors instead.
DEFAULT_NORM_EPS = 1e-12

# Canonical parameter field order: (name, weight_decay, frozen). Flattening,
# optimizer masks and checkpoint layout all follow this order.
FIELDS = (
    ("proj_drug_w", True, False),
    ("proj_drug_b", False, False),
    ("proj_prot_w", True, False),
    ("proj_prot_b", False, False),
    ("film_gamma_w", True, False),
    ("film_gamma_b", False, False),
    ("film_beta_w", True, False),
    ("film_beta_b", False, False),
    ("rbf_centers", False, True),
    ("rbf_sigma", False, True),
    ("head_w", True, False),
    ("head_b", False, False),
)

FIELD_NAMES = tuple(name for name, _, _ in FIELDS)


@dataclass
class ParamBlock:
    """Container for the twelve parameter tensors (also used for gradients
    and optimizer moment buffers, which share the shapes)."""

    proj_drug_w: np.ndarray  # (d_shared, d_drug)
    proj_drug_b: np.ndarray  # (d_shared,)
    proj_prot_w: np.ndarray  # (d_shared, d_prot)
    proj_prot_b: np.ndarray  # (d_shared,)
    film_gamma_w: np.ndarray  # (d_shared, d_shared)
    film_gamma_b: np.ndarray  # (d_shared,)
    film_beta_w: np.ndarray  # (d_shared, d_shared)
    film_beta_b: np.ndarray  # (d_shared,)
    rbf_centers: np.ndarray  # (k,), frozen
    rbf_sigma: float  # frozen
    head_w: np.ndarray  # (k,)
    head_b: float

    @property
    def d_shared(self) -> int:
        return self.proj_drug_w.shape[0]

    @property
    def d_drug(self) -> int:
        return self.proj_drug_w.shape[1]

    @property
    def d_prot(self) -> int:
        return self.proj_prot_w.shape[1]

    @property
    def k(self) -> int:
        return self.rbf_centers.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flatten all fields into one float64 vector (canonical order)."""
        parts = []
        for name, _, _ in FIELDS:
            val = getattr(self, name)
            parts.append(np.asarray(val, dtype=np.float64).reshape(-1))
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec: np.ndarray, like: "ParamBlock") -> "ParamBlock":
        """Rebuild a block from a flat vector, taking shapes from ``like``."""
        out = {}
        pos = 0
        for name, _, _ in FIELDS:
            ref = getattr(like, name)
            if np.isscalar(ref):
                out[name] = float(vec[pos])
                pos += 1
            else:
                n = ref.size
                out[name] = vec[pos : pos + n].reshape(ref.shape)
                pos += n
        return cls(**out)

    @classmethod
    def zeros_like(cls, like: "ParamBlock") -> "ParamBlock":
        out = {}
        for name, _, _ in FIELDS:
            ref = getattr(like, name)
            out[name] = 0.0 if np.isscalar(ref) else np.zeros_like(ref)
        return cls(**out)

    def copy(self) -> "ParamBlock":
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = val if np.isscalar(val) else val.copy()
        return type(self)(**out)


class ModelParams(ParamBlock):
    """Trainable parameters of the head."""


class Gradients(ParamBlock):
    """Partial derivatives of a scalar loss, shaped like ModelParams."""


def decay_mask(params: ParamBlock) -> np.ndarray:
    """Flat 0/1 mask: 1 where decoupled weight decay applies (matrices and
    the head weight vector; never biases, centers or sigma)."""
    parts = []
    for name, decays, _ in FIELDS:
        val = getattr(params, name)
        n = 1 if np.isscalar(val) else val.size
        parts.append(np.full(n, 1.0 if decays else 0.0))
    return np.concatenate(parts)


def frozen_mask(params: ParamBlock) -> np.ndarray:
    """Flat boolean mask over entries excluded from every update."""
    parts = []
    for name, _, frozen in FIELDS:
        val = getattr(params, name)
        n = 1 if np.isscalar(val) else val.size
        parts.append(np.full(n, frozen, dtype=bool))
    return np.concatenate(parts)


def evenly_spaced_centers(k: int) -> np.ndarray:
    """k RBF centers evenly spaced on [0, 2], first exactly 0, last exactly 2."""
    if k < 2:
        raise ParameterError(f"need at least 2 RBF centers, got k={k}")
    return np.linspace(0.0, 2.0, k)


def validate_params(params: ModelParams) -> None:
    """Check the ModelParams invariants; raises ParameterError on violation."""
    if params.rbf_sigma <= 0:
        raise ParameterError(f"rbf_sigma must be > 0, got {params.rbf_sigma}")
    mu = params.rbf_centers
    if mu.ndim != 1 or mu.shape[0] < 2:
        raise ParameterError("rbf_centers must be a vector of length >= 2")
    if mu[0] != 0.0 or mu[-1] != 2.0 or np.any(np.diff(mu) <= 0):
        raise ParameterError("rbf_centers must increase from 0 to 2")
    spacing = np.diff(mu)
    if not np.allclose(spacing, spacing[0], rtol=0, atol=1e-12):
        raise ParameterError("rbf_centers must be evenly spaced")
    for name, _, _ in FIELDS:
        val = np.asarray(getattr(params, name))
        if not np.all(np.isfinite(val)):
            raise ParameterError(f"non-finite entries in {name}")
    if params.head_w.shape != mu.shape:
        raise DimensionError(
            f"head_w length {params.head_w.shape[0]} != k {mu.shape[0]}"
        )


def init_params(
    d_drug: int,
    d_prot: int,
    d_shared: int = 256,
    k: int = 16,
    sigma: float = 0.2,
    seed: int = 0,
    head_bias: float = 0.0,
) -> ModelParams:
    """Initialize parameters.

    Projectors use fan-in uniform init, U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    for weights and biases. The FiLM generator starts as an exact identity
    modulation (zero matrices, scale bias of ones, shift bias of zeros) so
    that step 0 matches the no-FiLM ablation bitwise. The head weight starts
    at zero and its bias at ``head_bias`` (callers pass the training-label
    mean), so initial predictions are the label mean.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    rng = np.random.default_rng(seed)

    def fan_in_uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return ModelParams(
        proj_drug_w=fan_in_uniform((d_shared, d_drug), d_drug),
        proj_drug_b=fan_in_uniform((d_shared,), d_drug),
        proj_prot_w=fan_in_uniform((d_shared, d_prot), d_prot),
        proj_prot_b=fan_in_uniform((d_shared,), d_prot),
        film_gamma_w=np.zeros((d_shared, d_shared)),
        film_gamma_b=np.ones(d_shared),
        film_beta_w=np.zeros((d_shared, d_shared)),
        film_beta_b=np.zeros(d_shared),
        rbf_centers=evenly_spaced_centers(k),
        rbf_sigma=float(sigma),
        head_w=np.zeros(k),
        head_b=float(head_bias),
    )


def random_params(
    d_drug: int,
    d_prot: int,
    d_shared: int,
    k: int,
    sigma: float = 0.2,
    seed: int = 0,
) -> ModelParams:
    """Fully random parameters (including a nonzero head) for gradient checks."""
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-0.7, 0.7, size=shape)
    return ModelParams(
        proj_drug_w=u(d_shared, d_drug),
        proj_drug_b=u(d_shared),
        proj_prot_w=u(d_shared, d_prot),
        proj_prot_b=u(d_shared),
        film_gamma_w=u(d_shared, d_shared),
        film_gamma_b=1.0 + 0.3 * u(d_shared),
        film_beta_w=u(d_shared, d_shared),
        film_beta_b=0.3 * u(d_shared),
        rbf_centers=evenly_spaced_centers(k),
        rbf_sigma=float(sigma),
        head_w=u(k),
        head_b=float(rng.uniform(-0.5, 0.5)),
    )


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------


def film_forward(z: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Feature-wise linear modulation: gamma * z + beta, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if z.shape != gamma.shape or z.shape != beta.shape:
        raise DimensionError(
            f"film_forward length mismatch: z{z.shape}, gamma{gamma.shape}, "
            f"beta{beta.shape}"
        )
    return gamma * z + beta


def l2_normalize(v: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """v / max(||v||, eps). With eps=0 a zero-norm input raises."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= eps:
        if eps == 0.0:
            raise DegenerateInputError("cannot normalize a zero-norm vector")
        norm = eps
    return v / norm


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), clamped to [0, 2]. Zero-norm inputs raise."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"cosine_distance shapes differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine_distance on a zero-norm vector")
    d = 1.0 - float(np.dot(u, v)) / (nu * nv)
    return min(max(d, 0.0), 2.0)


def rbf_features(dist: float, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian bump activations phi_j = exp(-(dist - mu_j)^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    centers = np.asarray(centers, dtype=np.float64)
    delta = dist - centers
    return np.exp(-(delta * delta) / (2.0 * sigma * sigma))


def head_forward(phi: np.ndarray, w: np.ndarray, b: float) -> float:
    """Linear readout w . phi + b."""
    phi = np.asarray(phi, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if phi.shape != w.shape:
        raise DimensionError(f"head_forward length mismatch: {phi.shape} vs {w.shape}")
    return float(np.dot(w, phi)) + float(b)


# ---------------------------------------------------------------------------
# Full forward / backward (single pair)
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """All intermediates of one forward pass, consumed by ``backward``."""

    z_d: np.ndarray
    z_t: np.ndarray
    proj_drug: np.ndarray  # p_d
    proj_prot: np.ndarray  # p_t
    gamma: np.ndarray
    beta: np.ndarray
    conditioned: np.ndarray  # h = gamma * p_d + beta (p_d itself in no-FiLM mode)
    norm_drug: float  # max(||h||, eps)
    norm_prot: float
    unit_drug: np.ndarray  # u
    unit_prot: np.ndarray  # v
    distance_raw: float
    distance: float
    clamped: bool  # raw distance at or beyond a boundary; clamp grad is zero
    phi: np.ndarray
    prediction: float
    film: bool
    norm_eps: float


def forward(
    params: ModelParams,
    z_d: np.ndarray,
    z_t: np.ndarray,
    film: bool = True,
    norm_eps: float = DEFAULT_NORM_EPS,
) -> ForwardTrace:
    """Run the head on one (drug, protein) embedding pair.

    ``film=False`` skips the FiLM stage so the conditioned vector equals the
    projected drug vector bitwise. ``norm_eps=0`` selects strict
    normalization, raising on zero-norm intermediates.
    """
    z_d = np.asarray(z_d, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_d.shape != (params.d_drug,):
        raise DimensionError(
            f"drug embedding has dim {z_d.shape}, projector expects ({params.d_drug},)"
        )
    if z_t.shape != (params.d_prot,):
        raise DimensionError(
            f"protein embedding has dim {z_t.shape}, projector expects ({params.d_prot},)"
        )

    p_d = params.proj_drug_w @ z_d + params.proj_drug_b
    p_t = params.proj_prot_w @ z_t + params.proj_prot_b

    if film:
        gamma = params.film_gamma_w @ p_t + params.film_gamma_b
        beta = params.film_beta_w @ p_t + params.film_beta_b
        h = gamma * p_d + beta
    else:
        gamma = np.ones_like(p_d)
        beta = np.zeros_like(p_d)
        h = p_d

    n_h = float(np.linalg.norm(h))
    n_t = float(np.linalg.norm(p_t))
    if norm_eps == 0.0 and (n_h == 0.0 or n_t == 0.0):
        raise DegenerateInputError(
            "zero-norm conditioned or projected vector; degenerate parameters"
        )
    n_h = max(n_h, norm_eps)
    n_t = max(n_t, norm_eps)
    u = h / n_h
    v = p_t / n_t

    d_raw = 1.0 - float(np.dot(u, v))
    clamped = d_raw <= 0.0 or d_raw >= 2.0
    dist = min(max(d_raw, 0.0), 2.0)

    phi = rbf_features(dist, params.rbf_centers, params.rbf_sigma)
    pred = head_forward(phi, params.head_w, params.head_b)

    return ForwardTrace(
        z_d=z_d,
        z_t=z_t,
        proj_drug=p_d,
        proj_prot=p_t,
        gamma=gamma,
        beta=beta,
        conditioned=h,
        norm_drug=n_h,
        norm_prot=n_t,
        unit_drug=u,
        unit_prot=v,
        distance_raw=d_raw,
        distance=dist,
        clamped=clamped,
        phi=phi,
        prediction=pred,
        film=film,
        norm_eps=norm_eps,
    )


def _normalize_backward(g_unit: np.ndarray, raw: np.ndarray, unit: np.ndarray,
                        norm: float, eps: float) -> np.ndarray:
    """Backward through v -> v / max(||v||, eps).

    Standard branch: dL/dv = (g - u (u . g)) / n. Below the floor the norm is
    the constant eps, so the map is linear: dL/dv = g / eps.
    """
    if norm > eps or eps == 0.0:
        return (g_unit - unit * float(np.dot(unit, g_unit))) / norm
    return g_unit / eps


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    d_loss_d_pred: float,
    d_loss_d_dist: float,
) -> Gradients:
    """Exact partials of (d_loss_d_pred * prediction + d_loss_d_dist * distance)
    with respect to every parameter field.

    The two upstream sensitivities let one backward serve both loss paths:
    the regression/classification term differentiates through the prediction,
    the triplet term directly through the distance.
    """
    gp = float(d_loss_d_pred)
    gd = float(d_loss_d_dist)
    sigma = params.rbf_sigma
    mu = params.rbf_centers
    phi = trace.phi
    dist = trace.distance

    # Head: pred = w . phi + b
    g_head_w = gp * phi
    g_head_b = gp
    g_phi = gp * params.head_w

    # RBF: phi_j = exp(-(dist - mu_j)^2 / (2 sigma^2))
    delta = dist - mu
    g_phi_phi = g_phi * phi
    g_dist = gd + float(np.sum(g_phi_phi * (-delta / (sigma * sigma))))
    g_mu = g_phi_phi * (delta / (sigma * sigma))
    g_sigma = float(np.sum(g_phi_phi * (delta * delta) / (sigma**3)))

    # Clamp: no gradient when the raw distance sat at or beyond a boundary.
    g_raw = 0.0 if trace.clamped else g_dist

    # dist_raw = 1 - u . v
    g_u = -g_raw * trace.unit_prot
    g_v = -g_raw * trace.unit_drug

    g_h = _normalize_backward(g_u, trace.conditioned, trace.unit_drug,
                              trace.norm_drug, trace.norm_eps)
    g_pt = _normalize_backward(g_v, trace.proj_prot, trace.unit_prot,
                               trace.norm_prot, trace.norm_eps)

    if trace.film:
        # h = gamma * p_d + beta; gamma, beta affine in p_t
        g_gamma = g_h * trace.proj_drug
        g_beta = g_h
        g_pd = g_h * trace.gamma
        g_film_gamma_w = np.outer(g_gamma, trace.proj_prot)
        g_film_gamma_b = g_gamma
        g_film_beta_w = np.outer(g_beta, trace.proj_prot)
        g_film_beta_b = g_beta
        g_pt = g_pt + params.film_gamma_w.T @ g_gamma + params.film_beta_w.T @ g_beta
    else:
        g_pd = g_h
        g_film_gamma_w = np.zeros_like(params.film_gamma_w)
        g_film_gamma_b = np.zeros_like(params.film_gamma_b)
        g_film_beta_w = np.zeros_like(params.film_beta_w)
        g_film_beta_b = np.zeros_like(params.film_beta_b)

    return Gradients(
        proj_drug_w=np.outer(g_pd, trace.z_d),
        proj_drug_b=g_pd,
        proj_prot_w=np.outer(g_pt, trace.z_t),
        proj_prot_b=g_pt,
        film_gamma_w=g_film_gamma_w,
        film_gamma_b=g_film_gamma_b,
        film_beta_w=g_film_beta_w,
        film_beta_b=g_film_beta_b,
        rbf_centers=g_mu,
        rbf_sigma=g_sigma,
        head_w=g_head_w,
        head_b=g_head_b,
    )


# ---------------------------------------------------------------------------
# Vectorized path over a batch of pairs (training hot loop)
# ---------------------------------------------------------------------------


@dataclass
class BatchTrace:
    """Row-wise intermediates for a batch of embedding pairs."""

    Z_d: np.ndarray  # (n, d_drug)
    Z_t: np.ndarray  # (n, d_prot)
    P_d: np.ndarray  # (n, d_shared)
    P_t: np.ndarray
    Gamma: np.ndarray
    Beta: np.ndarray
    H: np.ndarray
    N_h: np.ndarray  # (n,)
    N_t: np.ndarray
    U: np.ndarray
    V: np.ndarray
    dist_raw: np.ndarray  # (n,)
    dist: np.ndarray
    open_interval: np.ndarray  # (n,) 1.0 where the clamp passes gradient
    Phi: np.ndarray  # (n, k)
    pred: np.ndarray  # (n,)
    film: bool
    norm_eps: float


def forward_pairs(
    params: ModelParams,
    Z_d: np.ndarray,
    Z_t: np.ndarray,
    film: bool = True,
    norm_eps: float = DEFAULT_NORM_EPS,
) -> BatchTrace:
    """Vectorized ``forward`` over n pairs (row i of Z_d with row i of Z_t)."""
    Z_d = np.asarray(Z_d, dtype=np.float64)
    Z_t = np.asarray(Z_t, dtype=np.float64)
    if Z_d.shape[1] != params.d_drug or Z_t.shape[1] != params.d_prot:
        raise DimensionError(
            f"pair batch dims ({Z_d.shape[1]}, {Z_t.shape[1]}) do not match "
            f"projector dims ({params.d_drug}, {params.d_prot})"
        )
    if Z_d.shape[0] != Z_t.shape[0]:
        raise DimensionError("drug and protein batches differ in length")

    P_d = Z_d @ params.proj_drug_w.T + params.proj_drug_b
    P_t = Z_t @ params.proj_prot_w.T + params.proj_prot_b

    if film:
        Gamma = P_t @ params.film_gamma_w.T + params.film_gamma_b
        Beta = P_t @ params.film_beta_w.T + params.film_beta_b
        H = Gamma * P_d + Beta
    else:
        Gamma = np.ones_like(P_d)
        Beta = np.zeros_like(P_d)
        H = P_d

    N_h = np.linalg.norm(H, axis=1)
    N_t = np.linalg.norm(P_t, axis=1)
    if norm_eps == 0.0 and (np.any(N_h == 0.0) or np.any(N_t == 0.0)):
        raise DegenerateInputError("zero-norm vector in batch under strict mode")
    N_h = np.maximum(N_h, norm_eps)
    N_t = np.maximum(N_t, norm_eps)
    U = H / N_h[:, None]
    V = P_t / N_t[:, None]

    dist_raw = 1.0 - np.einsum("ij,ij->i", U, V)
    open_interval = ((dist_raw > 0.0) & (dist_raw < 2.0)).astype(np.float64)
    dist = np.clip(dist_raw, 0.0, 2.0)

    delta = dist[:, None] - params.rbf_centers[None, :]
    Phi = np.exp(-(delta * delta) / (2.0 * params.rbf_sigma**2))
    pred = Phi @ params.head_w + params.head_b

    return BatchTrace(
        Z_d=Z_d, Z_t=Z_t, P_d=P_d, P_t=P_t, Gamma=Gamma, Beta=Beta, H=H,
        N_h=N_h, N_t=N_t, U=U, V=V, dist_raw=dist_raw, dist=dist,
        open_interval=open_interval, Phi=Phi, pred=pred, film=film,
        norm_eps=norm_eps,
    )


def backward_pairs(
    params: ModelParams,
    bt: BatchTrace,
    d_loss_d_pred: np.ndarray,
    d_loss_d_dist: np.ndarray,
) -> Gradients:
    """Accumulated gradient over a batch: sum_i of per-pair ``backward``.

    Callers fold any batch-mean factors into the upstream vectors. The
    accumulation uses fixed vectorized reductions over the batch axis, so a
    given batch always reduces in the same order (bitwise-deterministic
    single-threaded).
    """
    gp = np.asarray(d_loss_d_pred, dtype=np.float64)
    gd = np.asarray(d_loss_d_dist, dtype=np.float64)
    sigma = params.rbf_sigma
    mu = params.rbf_centers

    g_head_w = gp @ bt.Phi
    g_head_b = float(np.sum(gp))
    G_phi = gp[:, None] * params.head_w[None, :] * bt.Phi  # g_phi * phi, (n, k)

    delta = bt.dist[:, None] - mu[None, :]
    g_dist = gd + np.sum(G_phi * (-delta) / (sigma * sigma), axis=1)
    g_mu = np.sum(G_phi * delta / (sigma * sigma), axis=0)
    g_sigma = float(np.sum(G_phi * delta * delta / sigma**3))

    g_raw = g_dist * bt.open_interval

    G_u = -g_raw[:, None] * bt.V
    G_v = -g_raw[:, None] * bt.U

    def norm_back(G, U, N):
        standard = (G - U * np.einsum("ij,ij->i", U, G)[:, None]) / N[:, None]
        if bt.norm_eps == 0.0:
            return standard
        degenerate = G / bt.norm_eps
        return np.where((N > bt.norm_eps)[:, None], standard, degenerate)

    G_h = norm_back(G_u, bt.U, bt.N_h)
    G_pt = norm_back(G_v, bt.V, bt.N_t)

    if bt.film:
        G_gamma = G_h * bt.P_d
        G_beta = G_h
        G_pd = G_h * bt.Gamma
        g_film_gamma_w = G_gamma.T @ bt.P_t
        g_film_gamma_b = np.sum(G_gamma, axis=0)
        g_film_beta_w = G_beta.T @ bt.P_t
        g_film_beta_b = np.sum(G_beta, axis=0)
        G_pt = G_pt + G_gamma @ params.film_gamma_w + G_beta @ params.film_beta_w
    else:
        G_pd = G_h
        g_film_gamma_w = np.zeros_like(params.film_gamma_w)
        g_film_gamma_b = np.zeros_like(params.film_gamma_b)
        g_film_beta_w = np.zeros_like(params.film_beta_w)
        g_film_beta_b = np.zeros_like(params.film_beta_b)

    return Gradients(
        proj_drug_w=G_pd.T @ bt.Z_d,
        proj_drug_b=np.sum(G_pd, axis=0),
        proj_prot_w=G_pt.T @ bt.Z_t,
        proj_prot_b=np.sum(G_pt, axis=0),
        film_gamma_w=g_film_gamma_w,
        film_gamma_b=g_film_gamma_b,
        film_beta_w=g_film_beta_w,
        film_beta_b=g_film_beta_b,
        rbf_centers=g_mu,
        rbf_sigma=g_sigma,
        head_w=g_head_w,
        head_b=g_head_b,
    )


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

GRAD_CHECK_MODES = ("quadratic", "distance", "regression", "classification")


def _check_loss(pred: float, dist: float, mode: str, target: float,
                delta: float) -> tuple[float, float, float]:
    """Scalar check loss and its sensitivities (loss, dL/dpred, dL/ddist)."""
    if mode == "quadratic":
        return pred * pred, 2.0 * pred, 0.0
    if mode == "distance":
        return dist, 0.0, 1.0
    if mode == "regression":
        # Huber through the prediction plus an active triplet leg through the
        # distance, exercising both upstream paths of backward at once.
        r = pred - target
        if abs(r) <= delta:
            return 0.5 * r * r + dist, r, 1.0
        return delta * abs(r) - 0.5 * delta * delta + dist, delta * math.copysign(1.0, r), 1.0
    if mode == "classification":
        # Stable BCE with label 1 on the prediction used as a logit.
        x = pred
        loss = max(x, 0.0) - x + math.log1p(math.exp(-abs(x)))
        sig = 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))
        return loss + dist, sig - 1.0, 1.0
    raise ParameterError(f"unknown grad_check mode {mode!r}; use one of {GRAD_CHECK_MODES}")


def grad_check(
    params: ModelParams,
    z_d: np.ndarray,
    z_t: np.ndarray,
    loss_mode: str,
    step: float = 1e-5,
    target: float = 0.3,
    delta: float = 0.5,
    film: bool = True,
    norm_eps: float = DEFAULT_NORM_EPS,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per entry is |analytic - numeric| / max(1, |analytic|,
    |numeric|). All arithmetic is float64.
    """
    validate_params(params)
    if loss_mode not in GRAD_CHECK_MODES:
        raise ParameterError(
            f"unknown grad_check mode {loss_mode!r}; use one of {GRAD_CHECK_MODES}"
        )

    trace = forward(params, z_d, z_t, film=film, norm_eps=norm_eps)
    _, gp, gd = _check_loss(trace.prediction, trace.distance, loss_mode, target, delta)
    analytic = backward(params, trace, gp, gd).to_vector()

    theta = params.to_vector()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        for sign, slot in ((+1.0, 0), (-1.0, 1)):
            bumped = theta.copy()
            bumped[i] += sign * step
            p = ModelParams.from_vector(bumped, params)
            t = forward(p, z_d, z_t, film=film, norm_eps=norm_eps)
            loss, _, _ = _check_loss(t.prediction, t.distance, loss_mode, target, delta)
            if slot == 0:
                plus = loss
            else:
                minus = loss
        numeric[i] = (plus - minus) / (2.0 * step)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check_sweep(
    n_seeds: int = 100,
    d_drug: int = 5,
    d_prot: int = 5,
    d_shared: int = 4,
    k: int = 4,
    step: float = 1e-5,
    modes=GRAD_CHECK_MODES,
) -> dict:
    """Worst relative error per loss mode over seeded random instances."""
    if n_seeds < 1:
        raise ParameterError(f"n_seeds must be >= 1, got {n_seeds}")
    for mode in modes:
        if mode not in GRAD_CHECK_MODES:
            raise ParameterError(
                f"unknown grad_check mode {mode!r}; use one of {GRAD_CHECK_MODES}"
            )
    worst = {mode: 0.0 for mode in modes}
    for s in range(n_seeds):
        params = random_params(d_drug, d_prot, d_shared, k, seed=s)
        rng = np.random.default_rng([s, 91])
        z_d = rng.normal(size=d_drug)
        z_t = rng.normal(size=d_prot)
        for mode in modes:
            err = grad_check(params, z_d, z_t, mode, step=step)
            if err > worst[mode]:
                worst[mode] = err
    return worst
