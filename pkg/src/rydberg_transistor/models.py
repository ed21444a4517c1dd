"""Closed-form models of the photon transistor.

Everything in this module is a pure function of its arguments: switch
contrast, storage bookkeeping, the blockade-capped Poisson contrast models,
the optical gain, the self-blockade saturation transfer function and the
hard-rod capacity heuristic.  All contrasts are dimensionless reals in
(-inf, 1]; percent formatting is left to callers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InconsistentMeasurementError, UndefinedContrastError

__all__ = [
    "TransistorParams",
    "SaturationParams",
    "PhotonCounts",
    "CapacityEstimate",
    "switch_contrast",
    "stored_mean",
    "coherent_limit",
    "expected_contrast_incoming",
    "expected_contrast_stored",
    "contrast_curve",
    "fock_contrast",
    "transfer",
    "gain",
    "predicted_gain",
    "predicted_transfer_with_gate",
    "hard_rod_capacity",
    "blockade_capacity",
]

STORED_MEAN_TOL = 1e-9


@dataclass(frozen=True)
class TransistorParams:
    """Physical constants of one transistor realization.

    od_sp : optical depth of the source beam per incoming gate photon
    od_st : optical depth of the source beam per stored gate excitation
    cap : blockade capacity, maximum number of simultaneously stored excitations
    a_ge : fraction of gate photons absorbed by the intermediate state, in [0, 1)
    eta_det : overall photon detection efficiency, in (0, 1]
    """

    od_sp: float = 0.75
    od_st: float = 2.2
    cap: int = 3
    a_ge: float = 0.15
    eta_det: float = 0.31

    def __post_init__(self):
        if self.od_sp < 0:
            raise DomainError(f"od_sp must be >= 0, got {self.od_sp}")
        if self.od_st < 0:
            raise DomainError(f"od_st must be >= 0, got {self.od_st}")
        if int(self.cap) != self.cap or self.cap < 1:
            raise DomainError(f"cap must be an integer >= 1, got {self.cap}")
        if not 0 <= self.a_ge < 1:
            raise DomainError(f"a_ge must be in [0, 1), got {self.a_ge}")
        if not 0 < self.eta_det <= 1:
            raise DomainError(f"eta_det must be in (0, 1], got {self.eta_det}")
        # Different conditionings, so not an error, but almost always a mix-up.
        if self.od_sp > self.od_st:
            warnings.warn(
                f"od_sp={self.od_sp} exceeds od_st={self.od_st}; per-incoming-photon "
                "attenuation is normally weaker than per-stored-excitation attenuation",
                stacklevel=2,
            )


@dataclass(frozen=True)
class SaturationParams:
    """Self-blockade transfer curve N_out = a * (1 - exp(-N_in / b)).

    a : maximum photon number transmitted per detection window
    b : input photon number at which the self-nonlinear regime is reached
    """

    a: float = 46.0
    b: float = 70.0

    def __post_init__(self):
        if self.a < 0:
            raise DomainError(f"a must be >= 0, got {self.a}")
        if self.b <= 0:
            raise DomainError(f"b must be > 0, got {self.b}")


@dataclass(frozen=True)
class PhotonCounts:
    """Mean photon numbers entering and leaving the medium for one beam.

    mean_out > mean_in is physically impossible for a passive medium and is
    rejected unless ``allow_excess`` marks it as a known measurement artifact.
    """

    mean_in: float
    mean_out: float
    allow_excess: bool = False

    def __post_init__(self):
        if self.mean_in < 0 or self.mean_out < 0:
            raise DomainError(
                f"photon numbers must be >= 0, got in={self.mean_in} out={self.mean_out}"
            )
        if self.mean_out > self.mean_in and not self.allow_excess:
            raise InconsistentMeasurementError(
                f"mean_out={self.mean_out} exceeds mean_in={self.mean_in}; "
                "pass allow_excess=True to keep it as a measurement artifact"
            )

    def stored_mean(self, a_ge: float) -> float:
        """Stored excitations estimated from this beam's in/out balance."""
        return stored_mean(self.mean_in, self.mean_out, a_ge)


def switch_contrast(with_gate: float, no_gate: float) -> float:
    """Switch contrast C = 1 - with_gate / no_gate.

    Parameters
    ----------
    with_gate : mean transmitted source photons when the gate was applied.
    no_gate : mean transmitted source photons without gate; must be > 0.

    Returns
    -------
    Contrast in (-inf, 1]; 0 iff the two means are equal, 1 at full extinction.
    """
    if with_gate < 0 or no_gate < 0:
        raise DomainError(
            f"photon numbers must be >= 0, got with={with_gate} no={no_gate}"
        )
    if no_gate == 0:
        raise UndefinedContrastError("no-gate transmission is zero; contrast undefined")
    return 1.0 - with_gate / no_gate


def stored_mean(n_in: float, n_out: float, a_ge: float) -> float:
    """Mean number of stored gate excitations, (1 - a_ge) * n_in - n_out.

    Small negative results (within 1e-9) are clamped to zero as measurement
    noise; anything more negative is inconsistent and raises.
    """
    if n_in < 0 or n_out < 0:
        raise DomainError(f"photon numbers must be >= 0, got in={n_in} out={n_out}")
    if not 0 <= a_ge < 1:
        raise DomainError(f"a_ge must be in [0, 1), got {a_ge}")
    value = (1.0 - a_ge) * n_in - n_out
    if value < -STORED_MEAN_TOL:
        raise InconsistentMeasurementError(
            f"stored mean {value} < 0: transmitted {n_out} exceeds surviving input "
            f"{(1.0 - a_ge) * n_in}"
        )
    return max(value, 0.0)


def coherent_limit(n_gate: float) -> float:
    """Upper bound 1 - exp(-n_gate) on contrast from a coherent gate pulse.

    A perfect switch still transmits fully whenever the Poissonian pulse
    contains zero photons, which happens with probability exp(-n_gate).
    """
    if n_gate < 0:
        raise DomainError(f"mean photon number must be >= 0, got {n_gate}")
    return -math.expm1(-n_gate)


def _poisson_capped_attenuation(mean: float, od: float, cap: int) -> float:
    """E[exp(-min(k, cap) * od)] for k ~ Poisson(mean), evaluated exactly.

    The infinite sum splits at the blockade cap: photon-number states k >= cap
    all attenuate by exp(-cap * od), so only the cap leading Poisson terms are
    needed plus the closed-form tail mass.
    """
    head = 0.0
    cum = 0.0
    pmf = math.exp(-mean)  # k = 0 term; underflows harmlessly for huge means
    for k in range(cap):
        head += pmf * math.exp(-k * od)
        cum += pmf
        pmf *= mean / (k + 1)
    tail = max(1.0 - cum, 0.0)
    return head + tail * math.exp(-cap * od)


def _check_contrast_args(mean: float, od: float, cap: int) -> None:
    if mean < 0:
        raise DomainError(f"mean photon number must be >= 0, got {mean}")
    if od < 0:
        raise DomainError(f"optical depth must be >= 0, got {od}")
    if int(cap) != cap or cap < 1:
        raise DomainError(f"cap must be an integer >= 1, got {cap}")


def expected_contrast_incoming(n_gate: float, od: float, cap: int = 3) -> float:
    """Expected contrast for a coherent gate pulse of mean ``n_gate`` photons.

    Averages the Fock-state attenuation exp(-min(k, cap) * od) over the
    Poissonian photon-number distribution of the pulse, with ``od`` the
    optical depth caused by one incoming gate photon.  Monotone increasing
    in both ``n_gate`` and ``od`` and bounded by ``coherent_limit(n_gate)``.
    """
    _check_contrast_args(n_gate, od, cap)
    return 1.0 - _poisson_capped_attenuation(n_gate, od, int(cap))


def expected_contrast_stored(n_stored: float, od: float, cap: int = 3) -> float:
    """Expected contrast given a mean of ``n_stored`` stored excitations.

    Identical structure to :func:`expected_contrast_incoming` with ``od`` the
    optical depth per stored excitation.
    """
    _check_contrast_args(n_stored, od, cap)
    return 1.0 - _poisson_capped_attenuation(n_stored, od, int(cap))


def contrast_curve(means, od: float, cap: int = 3) -> np.ndarray:
    """Vectorized expected contrast over an array of mean photon numbers."""
    means = np.asarray(means, dtype=float)
    if np.any(means < 0):
        raise DomainError("mean photon numbers must be >= 0")
    if od < 0:
        raise DomainError(f"optical depth must be >= 0, got {od}")
    if int(cap) != cap or cap < 1:
        raise DomainError(f"cap must be an integer >= 1, got {cap}")
    cap = int(cap)
    pmf = np.exp(-means)
    head = pmf.copy()  # k = 0 term
    cum = pmf.copy()
    for k in range(1, cap):
        pmf = pmf * means / k
        head += pmf * math.exp(-k * od)
        cum += pmf
    tail = np.clip(1.0 - cum, 0.0, None)
    return 1.0 - (head + tail * math.exp(-cap * od))


def fock_contrast(k: int, od: float, cap: int = 3) -> float:
    """Contrast caused by exactly ``k`` gate photons: 1 - exp(-min(k, cap) * od)."""
    if int(k) != k or k < 0:
        raise DomainError(f"photon number must be an integer >= 0, got {k}")
    if od < 0:
        raise DomainError(f"optical depth must be >= 0, got {od}")
    if int(cap) != cap or cap < 1:
        raise DomainError(f"cap must be an integer >= 1, got {cap}")
    return -math.expm1(-min(int(k), int(cap)) * od)


def transfer(n_source_in: float, sat: SaturationParams) -> float:
    """Transmitted source photons a * (1 - exp(-n_in / b)) under self-blockade."""
    if n_source_in < 0:
        raise DomainError(f"mean photon number must be >= 0, got {n_source_in}")
    return sat.a * -math.expm1(-n_source_in / sat.b)


def gain(no_gate_out: float, with_gate_out: float) -> float:
    """Optical gain: source photons removed by the gate, no_gate - with_gate."""
    if no_gate_out < 0 or with_gate_out < 0:
        raise DomainError(
            f"photon numbers must be >= 0, got no={no_gate_out} with={with_gate_out}"
        )
    return no_gate_out - with_gate_out


def _mode_contrast(
    n_gate: float, mode: str, params: TransistorParams, deterministic: bool
) -> float:
    if mode not in ("incoming", "stored"):
        raise DomainError(f"mode must be 'incoming' or 'stored', got {mode!r}")
    od = params.od_sp if mode == "incoming" else params.od_st
    if deterministic:
        return fock_contrast(int(round(n_gate)), od, params.cap)
    if mode == "incoming":
        return expected_contrast_incoming(n_gate, od, params.cap)
    return expected_contrast_stored(n_gate, od, params.cap)


def predicted_gain(
    n_gate: float,
    mode: str,
    params: TransistorParams,
    sat: SaturationParams,
    n_source_in: float,
    deterministic: bool = False,
) -> float:
    """Predicted gain C * transfer(n_source_in) for a given gate drive.

    ``mode`` selects the contrast model: ``"incoming"`` uses od_sp against the
    mean incoming gate photon number, ``"stored"`` uses od_st against the mean
    number of stored excitations.  ``deterministic`` treats n_gate as an exact
    photon/excitation number instead of a Poissonian mean.  The with-gate
    transfer curve is (1 - C) * transfer, so the gain saturates at C * a for
    large source input.
    """
    c = _mode_contrast(n_gate, mode, params, deterministic)
    return c * transfer(n_source_in, sat)


def predicted_transfer_with_gate(
    n_gate: float,
    mode: str,
    params: TransistorParams,
    sat: SaturationParams,
    n_source_in: float,
    deterministic: bool = False,
) -> float:
    """With-gate transfer curve (1 - C) * transfer(n_source_in)."""
    c = _mode_contrast(n_gate, mode, params, deterministic)
    return (1.0 - c) * transfer(n_source_in, sat)


@dataclass(frozen=True)
class CapacityEstimate:
    """Hard-rod capacity estimate next to the configured blockade cap.

    ``hard_rod`` is the raw geometric estimate; ``configured`` is the cap the
    rest of the artifact actually uses.  ``adopted`` clamps the estimate to
    the configured value, which stays authoritative unless overridden.
    """

    hard_rod: int
    configured: int

    @property
    def adopted(self) -> int:
        return min(self.hard_rod, self.configured)


def hard_rod_capacity(length: float, radius: float) -> int:
    """Maximum excitations along a segment: floor(length / radius) + 1.

    Centers of mutually blockading excitations must sit at least one blockade
    radius apart, so a segment of the given length holds at most this many.
    """
    if length <= 0 or radius <= 0:
        raise DomainError(f"lengths must be > 0, got length={length} radius={radius}")
    return int(math.floor(length / radius)) + 1


def blockade_capacity(
    cloud_length_sigma: float,
    blockade_radius: float,
    configured_cap: int = 3,
) -> CapacityEstimate:
    """Heuristic blockade capacity of a Gaussian cloud of axial size sigma.

    Uses the +-2 sigma extent (4 * sigma) as the effective hard-rod segment.
    This is a documented heuristic only; nothing else in the package consumes
    it implicitly, and the configured cap (default 3) remains authoritative.
    """
    if cloud_length_sigma <= 0 or blockade_radius <= 0:
        raise DomainError(
            "lengths must be > 0, got "
            f"sigma={cloud_length_sigma} radius={blockade_radius}"
        )
    if int(configured_cap) != configured_cap or configured_cap < 1:
        raise DomainError(f"cap must be an integer >= 1, got {configured_cap}")
    raw = hard_rod_capacity(4.0 * cloud_length_sigma, blockade_radius)
    return CapacityEstimate(hard_rod=raw, configured=int(configured_cap))
