"""Seeded synthesis of low-rank ground truths and observation datasets.

All randomness comes from Philox-4x64 counter-based generators keyed
directly (no hashing) by ``(seed XOR tag) mod 2**64``, one fixed tag per
stream. The tags are part of the reproducibility contract:

===========  ======================
stream       tag
===========  ======================
factors      ``0x9E3779B97F4A7C15``
indices      ``0xC2B2AE3D27D4EB4F``
partition    ``0x165667B19E3779F9``
noise        ``0xD6E8FEB86659FD93``
design       ``0xA0761D6478BD642F``
signs        ``0xE7037ED1A0B428DB``
===========  ======================

The design stream is keyed once more per component block (key ``+ i``), so
block ``i`` of the sensing design can be regenerated on its own.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from lowrank_svrg.linalg import FactorPair, top_r_svd
from lowrank_svrg.errors import NumericalError
from lowrank_svrg.models import (
    CompletionProblem,
    Link,
    OneBitProblem,
    SensingProblem,
    StreamedSensingProblem,
    link_eval,
)

__all__ = [
    "GenSpec",
    "GroundTruth",
    "TAGS",
    "stream",
    "gen_ground_truth",
    "gen_sensing",
    "gen_completion",
    "gen_onebit",
    "gen_problem",
]

MASK64 = (1 << 64) - 1
TAGS = {
    "factors": 0x9E3779B97F4A7C15,
    "indices": 0xC2B2AE3D27D4EB4F,
    "partition": 0x165667B19E3779F9,
    "noise": 0xD6E8FEB86659FD93,
    "design": 0xA0761D6478BD642F,
    "signs": 0xE7037ED1A0B428DB,
}
MODELS = ("sensing", "completion", "onebit")
MAX_REGEN_ATTEMPTS = 10
DEGENERACY_RTOL = 1e-12


def stream(seed, name, offset=0):
    """Generator for one named random stream of ``seed``."""
    key = ((int(seed) ^ TAGS[name]) + offset) & MASK64
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class GenSpec:
    d1: int
    d2: int
    r: int
    model: str = "sensing"
    N: int = 0
    b: int = 1
    noise_nu: float = 0.0
    link: Link = field(default_factory=Link)
    factor_dist: str = "gaussian"
    scale_to_alpha: float | None = None
    seed: int = 0
    alpha: float | None = None
    stream_design: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.factor_dist not in ("gaussian", "uniform_half"):
            raise ValueError(f"unknown factor_dist {self.factor_dist!r}")
        if min(self.d1, self.d2) < 1 or not 1 <= self.r <= min(self.d1, self.d2):
            raise ValueError(f"need 1 <= r <= min(d1, d2), got r={self.r}")
        if self.b < 1 or self.N < 0 or self.N % self.b:
            raise ValueError(f"N={self.N} must be a nonnegative multiple of b={self.b}")
        if self.noise_nu < 0:
            raise ValueError("noise_nu must be nonnegative")
        if isinstance(self.link, dict):
            object.__setattr__(self, "link", Link(**self.link))

    @property
    def n(self):
        return self.N // self.b

    def to_dict(self):
        return asdict(self)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    Xstar: np.ndarray
    Zstar: FactorPair
    sigmas: np.ndarray

    @property
    def cond_number(self):
        return float(self.sigmas[0] / self.sigmas[-1])

    @property
    def inf_norm(self):
        return float(np.max(np.abs(self.Xstar)))

    @property
    def fro_norm_sq(self):
        return float(np.sum(self.Xstar**2))

    @property
    def factor_row_bound(self):
        """Smallest ``alpha`` whose row-norm set ``sqrt(alpha)`` holds ``Zstar``."""
        rows = np.concatenate(
            [np.sum(self.Zstar.U**2, axis=1), np.sum(self.Zstar.V**2, axis=1)]
        )
        return float(rows.max())


def _draw_factors(rng, spec):
    shape_u, shape_v = (spec.d1, spec.r), (spec.d2, spec.r)
    if spec.factor_dist == "gaussian":
        return rng.standard_normal(shape_u), rng.standard_normal(shape_v)
    return rng.uniform(-0.5, 0.5, shape_u), rng.uniform(-0.5, 0.5, shape_v)


def gen_ground_truth(spec):
    """Random rank-``r`` matrix with balanced factors.

    A degenerate draw (smallest singular value below ``1e-12 * sigma_1``) is
    redrawn from the next sub-seed, at most ten times.
    """
    for attempt in range(MAX_REGEN_ATTEMPTS):
        rng = stream(spec.seed, "factors", attempt)
        U, V = _draw_factors(rng, spec)
        X = U @ V.T
        if spec.scale_to_alpha is not None:
            peak = np.max(np.abs(X))
            if peak == 0.0:
                continue
            X = X * (spec.scale_to_alpha / peak)
        svd = top_r_svd(X, spec.r)
        s = svd.sigmas
        if s[0] > 0 and s[-1] > DEGENERACY_RTOL * s[0]:
            root = np.sqrt(s)
            Z = FactorPair(svd.left * root, svd.right * root)
            # Keep X* exactly equal to the product of its balanced factors.
            return GroundTruth(Z.product(), Z, s.copy())
    raise NumericalError(
        f"ground truth stayed rank-deficient after {MAX_REGEN_ATTEMPTS} attempts"
    )


def _design_block(seed, i, b, d1, d2):
    rng = stream(seed, "design", i)
    return rng.standard_normal((b, d1 * d2))


def _noise(spec, size):
    if spec.noise_nu == 0.0:
        return np.zeros(size)
    return spec.noise_nu * stream(spec.seed, "noise").standard_normal(size)


def gen_sensing(gt, spec):
    """Gaussian linear measurements ``y_i = <A_i, X*> + N(0, nu^2)``."""
    if spec.model != "sensing":
        raise ValueError(f"spec is for model {spec.model!r}, not sensing")
    d1, d2 = gt.Xstar.shape
    x = gt.Xstar.ravel()
    blocks = [_design_block(spec.seed, i, spec.b, d1, d2) for i in range(spec.n)]
    clean = np.concatenate([A @ x for A in blocks]) if blocks else np.zeros(0)
    y = clean + _noise(spec, spec.N)
    if spec.stream_design:
        del blocks

        def block_fn(i, seed=spec.seed, b=spec.b):
            return _design_block(seed, i, b, d1, d2)

        return StreamedSensingProblem(d1, d2, y, spec.n, block_fn)
    return SensingProblem(np.concatenate(blocks).reshape(spec.N, d1, d2), y, spec.n)


def _sample_omega(spec, d1, d2):
    if spec.N > d1 * d2:
        raise ValueError(f"cannot observe N={spec.N} distinct entries of a {d1}x{d2} matrix")
    flat = stream(spec.seed, "indices").choice(d1 * d2, size=spec.N, replace=False)
    # Components are contiguous blocks, so shuffle before chunking.
    flat = flat[stream(spec.seed, "partition").permutation(spec.N)]
    return flat // d2, flat % d2


def gen_completion(gt, spec, alpha=None):
    """Uniformly sampled noisy entries of ``X*``.

    ``alpha`` overrides the spikiness bound, which defaults to ``||X*||_inf``.
    """
    if spec.model != "completion":
        raise ValueError(f"spec is for model {spec.model!r}, not completion")
    d1, d2 = gt.Xstar.shape
    rows, cols = _sample_omega(spec, d1, d2)
    vals = gt.Xstar[rows, cols] + _noise(spec, spec.N)
    return CompletionProblem(
        d1, d2, rows, cols, spec.n, alpha=_resolve_alpha(gt, spec, alpha), vals=vals
    )


def gen_onebit(gt, spec, alpha=None):
    """Signs drawn as +1 with probability ``f(X*_jk)`` on uniformly sampled entries."""
    if spec.model != "onebit":
        raise ValueError(f"spec is for model {spec.model!r}, not onebit")
    d1, d2 = gt.Xstar.shape
    rows, cols = _sample_omega(spec, d1, d2)
    f, _, _, _ = link_eval(spec.link, gt.Xstar[rows, cols])
    u = stream(spec.seed, "signs").random(spec.N)
    signs = np.where(u < f, 1.0, -1.0)
    return OneBitProblem(
        d1,
        d2,
        rows,
        cols,
        spec.n,
        alpha=_resolve_alpha(gt, spec, alpha),
        signs=signs,
        link=spec.link,
    )


def _resolve_alpha(gt, spec, alpha):
    if alpha is not None:
        return alpha
    if spec.alpha is not None:
        return spec.alpha
    return gt.inf_norm


def gen_problem(gt, spec, alpha=None):
    """Dispatch to the generator for ``spec.model``."""
    if spec.model == "sensing":
        return gen_sensing(gt, spec)
    if spec.model == "completion":
        return gen_completion(gt, spec, alpha)
    return gen_onebit(gt, spec, alpha)
