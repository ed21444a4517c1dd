"""Weighted least-squares parameter recovery with bootstrap uncertainties.

fit_od inverts the blockade-capped contrast model for the optical depth per
gate photon/excitation; fit_saturation recovers the (a, b) of the
self-blockade transfer curve.  Uncertainties come from a case-resampling
bootstrap with percentile 68% intervals, deterministic under a seed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import DomainError, FitConvergenceError, InsufficientDataError
from .models import contrast_curve

__all__ = [
    "DataSet",
    "FitResult",
    "fit_od",
    "fit_saturation",
    "bootstrap_ci",
    "saturation_curve",
]

OD_SEARCH_MAX = 50.0  # covers all physical optical depths with margin
OD_XATOL = 1e-9
SIMPLEX_RELATIVE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DataSet:
    """(x, y, sigma) observations with strictly positive uncertainties."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        n = len(self.x)
        if len(self.y) != n or len(self.sigma) != n:
            raise DomainError("x, y, sigma must have equal length")
        if n < 2:
            raise DomainError(f"need at least 2 points, got {n}")
        if np.any(self.x < 0):
            raise DomainError("x values must be >= 0")
        if np.any(self.sigma <= 0):
            raise DomainError("sigma values must be > 0")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist(), self.sigma.tolist()))

    @classmethod
    def from_points(cls, points, label: str = "") -> "DataSet":
        arr = np.asarray(list(points), dtype=float)
        return cls(x=arr[:, 0], y=arr[:, 1], sigma=arr[:, 2], label=label)

    def subset(self, indices) -> "DataSet":
        return DataSet(
            x=self.x[indices], y=self.y[indices], sigma=self.sigma[indices],
            label=self.label,
        )

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "sigma"])
            for xi, yi, si in self.points:
                writer.writerow([repr(xi), repr(yi), repr(si)])

    @classmethod
    def from_csv(cls, path, label: str = "") -> "DataSet":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:3]] != ["x", "y", "sigma"]:
                raise DomainError(f"{path}: expected header 'x,y,sigma'")
            rows = [(float(r[0]), float(r[1]), float(r[2])) for r in reader if r]
        if not rows:
            raise InsufficientDataError(f"{path}: no data rows")
        return cls.from_points(rows, label=label or str(path))


@dataclass(frozen=True)
class FitResult:
    """Point estimates with weighted SSE and bootstrap 68% intervals."""

    params: dict[str, float]
    sse: float
    ci_68: dict[str, tuple[float, float]]
    n_boot: int
    converged: bool
    flags: tuple[str, ...] = ()


def saturation_curve(x, a: float, b: float) -> np.ndarray:
    """Transfer model a * (1 - exp(-x / b)) on an array of inputs."""
    return a * -np.expm1(-np.asarray(x, dtype=float) / b)


def _weighted_sse(residuals: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.sum((residuals / sigma) ** 2))


def _fit_od_point(data: DataSet, cap: int) -> float:
    def objective(od):
        return _weighted_sse(data.y - contrast_curve(data.x, od, cap), data.sigma)

    res = minimize_scalar(
        objective,
        bounds=(0.0, OD_SEARCH_MAX),
        method="bounded",
        options={"xatol": OD_XATOL},
    )
    if not res.success:
        raise FitConvergenceError(
            "bounded scalar minimization failed",
            diagnostics={"message": res.message, "od": float(res.x), "sse": float(res.fun)},
        )
    return float(res.x)


def fit_od(
    data: DataSet,
    cap: int = 3,
    mode: str = "incoming",
    n_boot: int = 200,
    seed: int = 0,
) -> FitResult:
    """Recover the optical depth from (mean photons, contrast, sigma) data.

    Parameters
    ----------
    data : contrast measurements; y values must lie in (-1, 1].
    cap : blockade capacity of the contrast model.
    mode : "incoming" or "stored"; selects the parameter name only, the
        model is structurally identical.
    n_boot, seed : bootstrap resamples (>= 100) and RNG seed.

    Minimizes the weighted SSE over od in [0, 50] by bounded scalar
    minimization to 1e-9 absolute; an estimate at the od = 0 boundary is
    flagged rather than treated as an error.
    """
    if mode not in ("incoming", "stored"):
        raise DomainError(f"mode must be 'incoming' or 'stored', got {mode!r}")
    if np.any(data.y <= -1) or np.any(data.y > 1):
        raise DomainError("contrast values must lie in (-1, 1]")
    name = "od_sp" if mode == "incoming" else "od_st"

    od_hat = _fit_od_point(data, cap)
    sse = _weighted_sse(data.y - contrast_curve(data.x, od_hat, cap), data.sigma)

    flags = []
    if od_hat <= 1e-6:
        flags.append("boundary_od_zero")
        warnings.warn("fitted od sits at the zero boundary", stacklevel=2)
    elif od_hat >= OD_SEARCH_MAX - 1e-6:
        flags.append("boundary_od_max")

    ci, n_used = bootstrap_ci(
        lambda d: {name: _fit_od_point(d, cap)},
        data,
        n_boot=n_boot,
        seed=seed,
        min_distinct=2,
    )
    ci = _bracket_point(ci, {name: od_hat})
    return FitResult(
        params={name: od_hat},
        sse=sse,
        ci_68=ci,
        n_boot=n_used,
        converged=True,
        flags=tuple(flags),
    )


def _fit_saturation_point(data: DataSet) -> tuple[float, float, bool]:
    """Nelder-Mead in units of the initial guess, with restarts.

    Initialization a0 = 1.05 * max(y), b0 = median(x); converged when the
    relative simplex diameter drops below 1e-8.  Restarts re-seed a fresh
    simplex at the current best point; the lowest SSE wins, exact ties go to
    the smaller a.
    """
    a0 = 1.05 * float(np.max(data.y))
    b0 = float(np.median(data.x))
    if a0 <= 0:
        a0 = 1.0
    if b0 <= 0:
        b0 = float(np.max(data.x)) or 1.0
    scale = np.array([a0, b0])

    def objective(u):
        a, b = u * scale
        if b <= 0:
            return math.inf
        return _weighted_sse(data.y - saturation_curve(data.x, a, b), data.sigma)

    best_f, best_ab = math.inf, None
    u = np.array([1.0, 1.0])
    converged = False
    for _ in range(5):
        res = minimize(
            objective,
            u,
            method="Nelder-Mead",
            options={
                "xatol": SIMPLEX_RELATIVE_TOL,
                "fatol": math.inf,  # stop on simplex diameter alone
                "maxiter": 2000,
                "maxfev": 4000,
            },
        )
        f = float(res.fun)
        ab = res.x * scale
        prev_best = best_f
        if f < best_f or (f == best_f and best_ab is not None and ab[0] < best_ab[0]):
            best_f, best_ab = f, ab
        if res.success and prev_best - f <= 1e-12 * (1.0 + abs(f)):
            converged = True
            break
        u = best_ab / scale
    return float(best_ab[0]), float(best_ab[1]), converged


def fit_saturation(
    data: DataSet, n_boot: int = 200, seed: int = 0
) -> FitResult:
    """Recover (a, b) of the transfer curve a * (1 - exp(-x / b)).

    Needs at least 3 points; data confined to the linear small-x regime make
    only the ratio a/b identifiable, which is reported as an ill-conditioning
    warning plus 'linear_regime'/'b_ci_unbounded' flags instead of an error.
    """
    if len(data) < 3:
        raise InsufficientDataError(
            f"need at least 3 points for a 2-parameter fit, got {len(data)}"
        )
    a_hat, b_hat, converged = _fit_saturation_point(data)
    sse = _weighted_sse(data.y - saturation_curve(data.x, a_hat, b_hat), data.sigma)

    flags = []
    if b_hat >= float(np.max(data.x)):
        flags += ["linear_regime", "b_ci_unbounded"]
        warnings.warn(
            "saturation scale b is not reached by the data; "
            "only the initial slope a/b is identified",
            stacklevel=2,
        )

    ci, n_used = bootstrap_ci(
        lambda d: dict(zip(("a", "b"), _fit_saturation_point(d)[:2])),
        data,
        n_boot=n_boot,
        seed=seed,
        min_distinct=3,
    )
    ci = _bracket_point(ci, {"a": a_hat, "b": b_hat})
    return FitResult(
        params={"a": a_hat, "b": b_hat},
        sse=sse,
        ci_68=ci,
        n_boot=n_used,
        converged=converged,
        flags=tuple(flags),
    )


def _bracket_point(ci: dict, params: dict) -> dict:
    """Widen percentile intervals minimally so they bracket the point estimate."""
    return {
        name: (min(lo, params[name]), max(hi, params[name]))
        for name, (lo, hi) in ci.items()
    }


def bootstrap_ci(
    fit,
    data: DataSet,
    n_boot: int = 200,
    seed: int = 0,
    min_distinct: int = 2,
) -> tuple[dict[str, tuple[float, float]], int]:
    """Case-resampling bootstrap, percentile 16/84 intervals per parameter.

    ``fit`` maps a DataSet to a {name: value} dict.  Resample b draws from the
    stream SeedSequence((seed, b)), so resamples are order-independent and the
    result is deterministic.  Resamples with fewer than ``min_distinct``
    distinct x values (or failing fits) are skipped; more than 10% skips is an
    error.  Returns (intervals, number of resamples actually used).
    """
    if n_boot < 100:
        raise DomainError(f"n_boot must be >= 100, got {n_boot}")
    n = len(data)
    samples: dict[str, list[float]] = {}
    skipped = 0
    for b in range(n_boot):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=(seed, b)))
        )
        idx = rng.integers(0, n, n)
        if len(np.unique(data.x[idx])) < min_distinct:
            skipped += 1
            continue
        try:
            params = fit(data.subset(idx))
        except (DomainError, FitConvergenceError):
            skipped += 1
            continue
        for name, value in params.items():
            samples.setdefault(name, []).append(value)
    if skipped > 0.1 * n_boot:
        raise InsufficientDataError(
            f"bootstrap skipped {skipped}/{n_boot} resamples (>10%)"
        )
    ci = {
        name: tuple(np.percentile(np.array(vals), [16.0, 84.0]))
        for name, vals in samples.items()
    }
    return ci, n_boot - skipped
