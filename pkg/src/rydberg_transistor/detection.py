"""Single-shot detection analysis on photon-count histograms.

A no-gate run produces Poissonian counts; runs with k stored excitations are
Poissonian with the mean attenuated by exp(-k * od).  The tools here build
that mixture, decompose an observed histogram into gated/ungated parts, pick
the count threshold that discriminates "excitation present" with the highest
fidelity, and test a histogram for Poissonness via its index of dispersion.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import poisson

from .errors import DomainError, InsufficientDataError

__all__ = [
    "CountHistogram",
    "MixtureModel",
    "ThresholdResult",
    "DecompositionResult",
    "DispersionResult",
    "mixture_from_params",
    "decompose",
    "optimal_threshold",
    "poissonness_test",
]

WEIGHT_SUM_TOL = 1e-12
THRESHOLD_TAIL_QUANTILE = 0.9999


@dataclass(frozen=True, eq=True)
class CountHistogram:
    """Integer-binned detection events over repeated runs.

    ``counts`` maps detected-event number to the number of runs that produced
    it; ``total`` is the run count and must equal the sum of all bins.
    """

    counts: dict[int, int] = field(default_factory=dict)
    total: int = 0

    def __post_init__(self):
        clean = {}
        for k, v in self.counts.items():
            if int(k) != k or k < 0:
                raise DomainError(f"histogram keys must be integers >= 0, got {k!r}")
            if int(v) != v or v < 0:
                raise DomainError(f"histogram counts must be integers >= 0, got {v!r}")
            if v:
                clean[int(k)] = int(v)
        object.__setattr__(self, "counts", clean)
        if self.total != sum(clean.values()):
            raise DomainError(
                f"total {self.total} does not match bin sum {sum(clean.values())}"
            )

    @classmethod
    def from_counts(cls, counts: dict[int, int]) -> "CountHistogram":
        return cls(counts=dict(counts), total=sum(counts.values()))

    @classmethod
    def from_samples(cls, samples) -> "CountHistogram":
        counts: dict[int, int] = {}
        for s in samples:
            counts[int(s)] = counts.get(int(s), 0) + 1
        return cls.from_counts(counts)

    def __add__(self, other: "CountHistogram") -> "CountHistogram":
        merged = dict(self.counts)
        for k, v in other.counts.items():
            merged[k] = merged.get(k, 0) + v
        return CountHistogram.from_counts(merged)

    @property
    def max_event(self) -> int:
        return max(self.counts) if self.counts else 0

    def events(self) -> list[int]:
        return sorted(self.counts)

    def mean(self) -> float:
        if self.total == 0:
            return 0.0
        return sum(k * v for k, v in self.counts.items()) / self.total

    def variance(self) -> float:
        """Sample variance (ddof=1); 0 for fewer than two runs."""
        if self.total < 2:
            return 0.0
        m = self.mean()
        return sum(v * (k - m) ** 2 for k, v in self.counts.items()) / (self.total - 1)

    def to_arrays(self, n_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Dense (events, runs) arrays covering 0..n_max."""
        if n_max is None:
            n_max = self.max_event
        events = np.arange(n_max + 1)
        runs = np.zeros(n_max + 1, dtype=np.int64)
        for k, v in self.counts.items():
            if k <= n_max:
                runs[k] = v
        return events, runs

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["events", "runs"])
            for k in self.events():
                writer.writerow([k, self.counts[k]])

    @classmethod
    def from_csv(cls, path) -> "CountHistogram":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["events", "runs"]:
                raise DomainError(f"{path}: expected header 'events,runs'")
            counts = {int(row[0]): int(row[1]) for row in reader if row}
        return cls.from_counts(counts)

    def to_json_obj(self) -> dict[str, int]:
        return {str(k): self.counts[k] for k in self.events()}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CountHistogram":
        return cls.from_counts({int(k): int(v) for k, v in obj.items()})

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "CountHistogram":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


@dataclass(frozen=True)
class MixtureModel:
    """Poisson mixture over stored-excitation number k = 0..cap.

    ``components[k]`` is the (weight, mean-detected-counts) pair for runs with
    exactly k stored excitations (k = cap collects the blockade-capped tail).
    Weights sum to one; means are non-increasing in k (attenuation ordering).
    """

    components: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.components) < 1:
            raise DomainError("mixture needs at least one component")
        comps = tuple((float(w), float(m)) for w, m in self.components)
        object.__setattr__(self, "components", comps)
        wsum = math.fsum(w for w, _ in comps)
        if any(w < 0 for w, _ in comps):
            raise DomainError("mixture weights must be >= 0")
        if abs(wsum - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError(f"mixture weights sum to {wsum}, expected 1")
        if any(m < 0 for _, m in comps):
            raise DomainError("mixture means must be >= 0")
        means = [m for _, m in comps]
        if any(means[i] < means[i + 1] - 1e-12 for i in range(len(means) - 1)):
            raise DomainError("mixture means must be non-increasing in k")

    @property
    def cap(self) -> int:
        return len(self.components) - 1

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([m for _, m in self.components])

    @property
    def w_ungated(self) -> float:
        return self.components[0][0]

    @property
    def w_gated(self) -> float:
        return 1.0 - self.components[0][0]

    def pmf(self, n) -> np.ndarray:
        """Mixture probability of detecting n counts."""
        n = np.asarray(n)
        out = np.zeros(n.shape, dtype=float)
        for w, mu in self.components:
            out += w * poisson.pmf(n, mu)
        return out

    def gated_pmf(self, n) -> np.ndarray:
        """Probability of n counts conditional on at least one excitation."""
        n = np.asarray(n)
        if self.w_gated <= 0:
            return np.zeros(n.shape, dtype=float)
        out = np.zeros(n.shape, dtype=float)
        for w, mu in self.components[1:]:
            out += w * poisson.pmf(n, mu)
        return out / self.w_gated

    def ungated_pmf(self, n) -> np.ndarray:
        return poisson.pmf(np.asarray(n), self.components[0][1])


def mixture_from_params(
    n_stored: float, cap: int, od_st: float, mu0: float
) -> MixtureModel:
    """Build the count mixture for Poissonian gate statistics.

    Component weights follow the Poisson distribution of stored excitations
    with the k >= cap tail collected into the cap component; component means
    attenuate the no-gate mean ``mu0`` by exp(-k * od_st).
    """
    if n_stored < 0:
        raise DomainError(f"n_stored must be >= 0, got {n_stored}")
    if int(cap) != cap or cap < 1:
        raise DomainError(f"cap must be an integer >= 1, got {cap}")
    if od_st < 0:
        raise DomainError(f"od_st must be >= 0, got {od_st}")
    if mu0 <= 0:
        raise DomainError(f"mu0 must be > 0, got {mu0}")
    cap = int(cap)
    weights = []
    pmf = math.exp(-n_stored)
    for k in range(cap):
        weights.append(pmf)
        pmf *= n_stored / (k + 1)
    weights.append(max(1.0 - math.fsum(weights), 0.0))
    means = [mu0 * math.exp(-k * od_st) for k in range(cap + 1)]
    return MixtureModel(components=tuple(zip(weights, means)))


@dataclass(frozen=True)
class DecompositionResult:
    """Expected gated/ungated run counts per bin for an observed histogram."""

    events: np.ndarray
    observed: np.ndarray
    model_total: np.ndarray
    model_gated: np.ndarray
    model_ungated: np.ndarray
    residuals: np.ndarray
    chi2: float
    dof: int
    p_value: float
    gated_runs: float  # model-expected number of gated runs

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["events", "observed", "model_total", "model_gated", "model_ungated"]
            )
            for i, n in enumerate(self.events):
                writer.writerow(
                    [
                        int(n),
                        int(self.observed[i]),
                        repr(float(self.model_total[i])),
                        repr(float(self.model_gated[i])),
                        repr(float(self.model_ungated[i])),
                    ]
                )


def _pooled_chi2(observed: np.ndarray, expected: np.ndarray) -> tuple[float, int, float]:
    """Pearson chi-square with adjacent bins pooled to expected >= 5."""
    pooled_obs, pooled_exp = [], []
    acc_o, acc_e = 0.0, 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            pooled_obs.append(acc_o)
            pooled_exp.append(acc_e)
            acc_o, acc_e = 0.0, 0.0
    if acc_e > 0 and pooled_exp:
        pooled_obs[-1] += acc_o
        pooled_exp[-1] += acc_e
    elif acc_e > 0:
        pooled_obs.append(acc_o)
        pooled_exp.append(acc_e)
    if len(pooled_exp) < 2:
        return 0.0, 0, 1.0
    obs = np.array(pooled_obs)
    exp = np.array(pooled_exp)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(exp) - 1
    return stat, dof, float(chi2_dist.sf(stat, dof))


def decompose(observed: CountHistogram, model: MixtureModel) -> DecompositionResult:
    """Split an observed histogram into expected gated/ungated run counts.

    For each bin n the ungated contribution is total * w_0 * P(n | mu_0) and
    the gated one sums the k >= 1 components; together they reproduce the
    model-predicted histogram.  The upper tail beyond the covered support is
    folded into the last bin so the expected counts sum to the run total.
    Also reports per-bin residuals and a pooled chi-square goodness of fit.
    """
    if observed.total == 0:
        raise InsufficientDataError("cannot decompose an empty histogram")
    mu_max = float(model.means.max())
    n_max = max(observed.max_event, int(poisson.ppf(THRESHOLD_TAIL_QUANTILE, mu_max)))
    events, obs = observed.to_arrays(n_max)
    total = observed.total

    w = model.weights
    mus = model.means
    ungated = total * w[0] * poisson.pmf(events, mus[0])
    gated = np.zeros(len(events), dtype=float)
    for k in range(1, len(w)):
        gated += total * w[k] * poisson.pmf(events, mus[k])
    # fold the model's tail mass into the last bin: column sums match `total`
    ungated[-1] += total * w[0] * float(poisson.sf(n_max, mus[0]))
    for k in range(1, len(w)):
        gated[-1] += total * w[k] * float(poisson.sf(n_max, mus[k]))
    model_total = ungated + gated

    chi2, dof, p_value = _pooled_chi2(obs.astype(float), model_total)
    return DecompositionResult(
        events=events,
        observed=obs,
        model_total=model_total,
        model_gated=gated,
        model_ungated=ungated,
        residuals=obs - model_total,
        chi2=chi2,
        dof=dof,
        p_value=p_value,
        gated_runs=total * model.w_gated,
    )


@dataclass(frozen=True)
class ThresholdResult:
    """Optimal discrimination threshold and its fidelity.

    A run is declared "excitation present" iff its detected counts are <= tau
    (gated runs are attenuated).  tau = -1 encodes the degenerate classifier
    that never declares presence.  ``fidelity`` is the prior-weighted success
    probability; ``fidelity_balanced`` weighs both conditions equally.
    """

    tau: int
    fidelity: float
    p_detect_given_gated: float
    p_reject_given_ungated: float
    fidelity_balanced: float
    non_discriminating: bool = False


def _threshold_fidelity(
    model: MixtureModel, tau: int
) -> tuple[float, float, float]:
    """(fidelity, p_detect|gated, p_reject|ungated) for a given threshold."""
    w = model.weights
    mus = model.means
    w_gated = model.w_gated
    if tau < 0:
        p_detect = 0.0
        p_reject = 1.0
    else:
        p_detect = (
            float(sum(w[k] * poisson.cdf(tau, mus[k]) for k in range(1, len(w))))
            / w_gated
        )
        p_reject = float(poisson.sf(tau, mus[0]))
    fidelity = float(w_gated * p_detect + w[0] * p_reject)
    return fidelity, p_detect, p_reject


def optimal_threshold(model: MixtureModel) -> ThresholdResult:
    """Scan integer thresholds for the highest single-shot fidelity.

    fidelity(tau) = w_gated * P(n <= tau | gated) + w_0 * P(n > tau | ungated),
    maximized over tau in [-1, q0.9999(mu_max)] with ties broken toward the
    smaller tau.  Models whose components all share one mean cannot
    discriminate; they return the better trivial classifier, flagged.
    """
    if model.w_gated <= 0:
        raise DomainError("model has no gated component with positive weight")
    mus = model.means
    w0 = model.w_ungated
    w_gated = model.w_gated
    tau_max = int(poisson.ppf(THRESHOLD_TAIL_QUANTILE, float(mus.max())))

    if float(mus.max() - mus.min()) <= 1e-12 * max(float(mus.max()), 1.0):
        # all components identical: no threshold beats trivial guessing
        if w0 >= w_gated:
            return ThresholdResult(
                tau=-1,
                fidelity=w0,
                p_detect_given_gated=0.0,
                p_reject_given_ungated=1.0,
                fidelity_balanced=0.5,
                non_discriminating=True,
            )
        return ThresholdResult(
            tau=tau_max,
            fidelity=w_gated,
            p_detect_given_gated=1.0,
            p_reject_given_ungated=0.0,
            fidelity_balanced=0.5,
            non_discriminating=True,
        )

    best = None
    for tau in range(-1, tau_max + 1):
        fidelity, p_detect, p_reject = _threshold_fidelity(model, tau)
        if best is None or fidelity > best[0]:
            best = (fidelity, tau, p_detect, p_reject)
    fidelity, tau, p_detect, p_reject = best
    return ThresholdResult(
        tau=tau,
        fidelity=fidelity,
        p_detect_given_gated=p_detect,
        p_reject_given_ungated=p_reject,
        fidelity_balanced=0.5 * (p_detect + p_reject),
        non_discriminating=fidelity <= max(w0, w_gated) + 1e-12,
    )


@dataclass(frozen=True)
class DispersionResult:
    """Index-of-dispersion test outcome against a Poisson null."""

    index: float
    p_value: float
    passed: bool
    n_null: int


def poissonness_test(
    hist: CountHistogram, n_null: int = 500, seed: int = 0
) -> DispersionResult:
    """Test whether a count histogram is consistent with a Poisson law.

    The statistic is the index of dispersion (sample variance over mean); its
    null distribution is calibrated by simulating ``n_null`` Poisson samples
    of the same size and mean.  Two-sided Monte Carlo p-value; fails at 5%.
    An all-zero histogram is vacuously consistent with Poisson(0).
    """
    if hist.total < 30:
        raise InsufficientDataError(
            f"need at least 30 runs for the dispersion test, got {hist.total}"
        )
    mean = hist.mean()
    if mean == 0.0:
        return DispersionResult(index=0.0, p_value=1.0, passed=True, n_null=0)
    index = hist.variance() / mean

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=(seed,))))
    draws = rng.poisson(mean, size=(n_null, hist.total))
    null_mean = draws.mean(axis=1)
    # an all-zero null sample counts as maximally underdispersed (index 0)
    null_index = np.where(
        null_mean > 0, draws.var(axis=1, ddof=1) / np.where(null_mean > 0, null_mean, 1.0), 0.0
    )
    n_low = int(np.sum(null_index <= index))
    n_high = int(np.sum(null_index >= index))
    p_value = min(1.0, 2.0 * min(n_low + 1, n_high + 1) / (n_null + 1))
    return DispersionResult(
        index=float(index),
        p_value=float(p_value),
        passed=p_value >= 0.05,
        n_null=n_null,
    )
