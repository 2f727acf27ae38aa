from dataclasses import dataclass, field, replace, asdict
import enum
import math

import numpy as np

from ..errors import ConfigError
from ..geometry import DEFAULT_TAU_INLIER, DepthGradient, Feature, Pose

# Relative tolerance on squared distances; see README for the noise calibration.
DEFAULT_TAU_GDC_RESIDUAL = 0.1
DEFAULT_TAU_GDC_PX = 10.0


class Strategy(str, enum.Enum):
    CLASSIC = "classic"
    GDC_FILTERED = "gdc-filtered"
    NESTED = "nested"
    DOUBLY_NESTED = "doubly-nested"
    GDC_NESTED = "gdc-nested"
    GDC_DOUBLY_NESTED = "gdc-doubly-nested"

    @property
    def uses_filter(self):
        return self in (Strategy.GDC_FILTERED, Strategy.GDC_NESTED, Strategy.GDC_DOUBLY_NESTED)

    @property
    def nesting(self):
        if self in (Strategy.NESTED, Strategy.GDC_NESTED):
            return 1
        if self in (Strategy.DOUBLY_NESTED, Strategy.GDC_DOUBLY_NESTED):
            return 2
        return 0


class GdcTestMode(str, enum.Enum):
    RESIDUAL = "residual"
    PROP1_DISTANCE = "prop1"


@dataclass(frozen=True)
class Correspondence:
    f1: Feature
    f2: Feature
    similarity: float = 1.0
    rank: int = 0
    # image-2 depth gradient at f2, used only by the Prop1 filter
    grad2: object = None


class Matches:
    """Rank-ordered correspondences stored column-wise (row k has rank k).

    ``grad2`` optionally carries ∂ρ/∂ξ, ∂ρ/∂η of the image-2 depth map at each
    image-2 feature (NaN when unknown); only the Prop1 filter mode uses it.
    """

    def __init__(self, xi1, eta1, rho1, xi2, eta2, rho2, similarity=None, grad2=None):
        cols = [np.ascontiguousarray(c, dtype=float) for c in (xi1, eta1, rho1, xi2, eta2, rho2)]
        n = cols[0].size
        if any(c.shape != (n,) for c in cols):
            raise ValueError("column length mismatch")
        self.xi1, self.eta1, self.rho1, self.xi2, self.eta2, self.rho2 = cols
        self.similarity = (np.ones(n) if similarity is None
                           else np.ascontiguousarray(similarity, dtype=float))
        if grad2 is None:
            grad2 = np.full((n, 2), np.nan)
        self.grad2 = np.ascontiguousarray(grad2, dtype=float).reshape(n, 2)
        for a in (*cols, self.similarity, self.grad2):
            a.setflags(write=False)

    def __len__(self):
        return self.xi1.size

    @classmethod
    def from_correspondences(cls, corrs):
        corrs = sorted(corrs, key=lambda c: c.rank)
        grab = lambda fn: np.array([fn(c) for c in corrs], dtype=float)  # noqa: E731
        g = np.array([(np.nan, np.nan) if c.grad2 is None
                      else (c.grad2.d_rho_d_xi, c.grad2.d_rho_d_eta) for c in corrs], dtype=float)
        return cls(grab(lambda c: c.f1.xi), grab(lambda c: c.f1.eta), grab(lambda c: c.f1.rho),
                   grab(lambda c: c.f2.xi), grab(lambda c: c.f2.eta), grab(lambda c: c.f2.rho),
                   grab(lambda c: c.similarity), g.reshape(len(corrs), 2))

    def _corr(self, k):
        gx, gy = self.grad2[k]
        grad = DepthGradient(float(gx), float(gy)) if np.isfinite(gx) and np.isfinite(gy) else None
        return Correspondence(Feature(float(self.xi1[k]), float(self.eta1[k]), float(self.rho1[k])),
                              Feature(float(self.xi2[k]), float(self.eta2[k]), float(self.rho2[k])),
                              float(self.similarity[k]), int(k), grad)

    def to_correspondences(self):
        return [self._corr(k) for k in range(len(self))]

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self._corr(j) for j in range(len(self))[k]]
        return self._corr(k)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Matches(self.xi1[idx], self.eta1[idx], self.rho1[idx], self.xi2[idx],
                       self.eta2[idx], self.rho2[idx], self.similarity[idx], self.grad2[idx])

    def with_grad2(self, grad2):
        return Matches(self.xi1, self.eta1, self.rho1, self.xi2, self.eta2, self.rho2,
                       self.similarity, grad2)

    def points1(self):
        return np.stack([self.rho1 * self.xi1, self.rho1 * self.eta1, self.rho1], axis=1)

    def points2(self):
        return np.stack([self.rho2 * self.xi2, self.rho2 * self.eta2, self.rho2], axis=1)

    def valid(self):
        ok = np.ones(len(self), dtype=bool)
        for c in (self.xi1, self.eta1, self.xi2, self.eta2):
            ok &= np.isfinite(c)
        for r in (self.rho1, self.rho2):
            ok &= np.isfinite(r) & (r > 0)
        return ok


def as_matches(obj):
    if isinstance(obj, Matches):
        return obj
    return Matches.from_correspondences(list(obj))


@dataclass(frozen=True)
class RansacConfig:
    p: float = 0.99
    s: int = 3
    M: int = 250
    M1: int = 100
    M2: int = 150
    strategy: Strategy = Strategy.CLASSIC
    tau_inlier: float = DEFAULT_TAU_INLIER
    tau_gdc: float | None = None
    gdc_test_mode: GdcTestMode = GdcTestMode.RESIDUAL
    max_iterations: int = 100_000
    seed: int = 0
    adaptive: bool = True
    # Optional (e1, e2, e) prior; fixes the iteration budget instead of adapting.
    outlier_ratios: tuple | None = None
    refine: bool = False
    focal_px: float = 525.0
    # sensor prior used by the refinement: pixel sigma (px), relative depth sigma
    refine_noise: tuple = (0.5, 0.005)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "gdc_test_mode", GdcTestMode(self.gdc_test_mode))
        if not 0 < self.p < 1:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if self.s < 3:
            raise ConfigError("sample size s must be at least 3")
        if self.tau_inlier <= 0:
            raise ConfigError("tau_inlier must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        cut = self.cutoffs()
        if any(c <= j for j, c in enumerate(cut)) or min(cut) < 1:
            raise ConfigError(f"cutoffs {cut} cannot supply {self.s} distinct indices")
        if self.strategy.nesting and not self.M1 <= self.M2 <= self.M:
            raise ConfigError("nested cutoffs require M1 <= M2 <= M")

    @property
    def M3(self):
        return self.M

    def cutoffs(self):
        lvl = self.strategy.nesting
        head = [self.M1, self.M2][:lvl]
        return tuple(head + [self.M] * (self.s - lvl))

    def resolved_tau_gdc(self):
        if self.tau_gdc is not None:
            return float(self.tau_gdc)
        if self.gdc_test_mode is GdcTestMode.RESIDUAL:
            return DEFAULT_TAU_GDC_RESIDUAL
        return DEFAULT_TAU_GDC_PX / self.focal_px

    def check_list_length(self, n):
        cut = self.cutoffs()
        if max(cut) > n:
            raise ConfigError(f"cutoffs {cut} exceed list length {n}")

    def clamped(self, n):
        """Copy with cutoffs shrunk to fit a list of ``n`` correspondences."""
        M = min(self.M, n)
        M2 = min(self.M2, M)
        return replace(self, M=M, M2=M2, M1=min(self.M1, M2))

    def to_dict(self):
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["gdc_test_mode"] = self.gdc_test_mode.value
        d["tau_gdc"] = self.resolved_tau_gdc()
        if self.outlier_ratios is not None:
            d["outlier_ratios"] = list(self.outlier_ratios)
        d["refine_noise"] = list(self.refine_noise)
        return d


@dataclass(frozen=True, eq=False)
class RansacReport:
    pose: Pose
    inlier_mask: np.ndarray
    inlier_count: int
    iterations_run: int
    hypotheses_formed: int
    hypotheses_passed_filter: int
    hypotheses_evaluated: int
    wall_time: float
    best_iteration: int = -1
    residual_sum: float = math.nan
    iteration_bound: float = math.inf
    strategy: Strategy = Strategy.CLASSIC
    backend: str = ""

    def to_dict(self, include_wall_time=True):
        d = {
            "strategy": self.strategy.value,
            "rotation": self.pose.rotation.tolist(),
            "translation": self.pose.translation.tolist(),
            "quaternion_xyzw": self.pose.to_quaternion().tolist(),
            "inlier_count": self.inlier_count,
            "inlier_indices": np.flatnonzero(self.inlier_mask).tolist(),
            "iterations_run": self.iterations_run,
            "hypotheses_formed": self.hypotheses_formed,
            "hypotheses_passed_filter": self.hypotheses_passed_filter,
            "hypotheses_evaluated": self.hypotheses_evaluated,
            "best_iteration": self.best_iteration,
            "residual_sum_m": self.residual_sum,
            "iteration_bound": self.iteration_bound if math.isfinite(self.iteration_bound) else None,
        }
        if include_wall_time:
            d["wall_time_s"] = self.wall_time
        return d


@dataclass(frozen=True)
class CostModel:
    """Per-hypothesis costs in seconds: formation ``alpha`` and support ``beta``."""
    alpha: float = 0.96e-6
    beta: float = 45.2e-6

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("costs must be positive")

    @classmethod
    def classic(cls):
        return cls(0.96e-6, 45.2e-6)

    @classmethod
    def gdc(cls):
        return cls(5.61e-6, 45.2e-6)
