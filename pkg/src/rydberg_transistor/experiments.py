"""High-level experiment drivers used by the CLI and the scripts.

These compose the closed-form models, the Monte Carlo engine, the fitters
and the detection analysis into the scans behind the standard figures:
contrast vs gate photons, gain/transfer vs source photons, and the
single-shot detection fidelity sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import models
from .detection import (
    CountHistogram,
    DecompositionResult,
    ThresholdResult,
    decompose,
    mixture_from_params,
    optimal_threshold,
    poissonness_test,
)
from .errors import DomainError
from .fitting import DataSet
from .montecarlo import SimConfig, calibrate_retention_tau, simulate_ensemble

__all__ = [
    "incoming_scan_config",
    "gain_scan_rows",
    "transfer_scan",
    "TransferPoint",
    "DetectionReport",
    "detection_experiment",
    "fidelity_sweep",
]


def incoming_scan_config(base: SimConfig) -> SimConfig:
    """Variant of a config that attenuates per *incoming* gate photon.

    Storage losses and the od_st/od_sp distinction are folded away
    (a_ge = 0, p_store = 1, od_st := od_sp), so the measured contrast follows
    the incoming-photon contrast model directly.
    """
    params = replace(base.params, a_ge=0.0, od_st=base.params.od_sp)
    return replace(base, params=params, p_store=1.0)


def gain_scan_rows(
    params: models.TransistorParams,
    sat: models.SaturationParams,
    n_gate: float,
    n_source_values,
) -> list[dict[str, float]]:
    """Closed-form gain/transfer table over source input photon numbers.

    Each row carries the no-gate transfer, the with-gate transfer and gain
    for a coherent gate pulse of mean ``n_gate`` photons, and the predicted
    gain for a single-photon Fock gate and a single stored excitation.
    """
    rows = []
    for n_src in n_source_values:
        base = models.transfer(n_src, sat)
        c_coh = models.expected_contrast_incoming(n_gate, params.od_sp, params.cap)
        rows.append(
            {
                "n_source_in": float(n_src),
                "no_gate_out": base,
                "with_gate_out": (1.0 - c_coh) * base,
                "gain_coherent": c_coh * base,
                "gain_single_photon": models.fock_contrast(1, params.od_sp, params.cap) * base,
                "gain_single_stored": models.fock_contrast(1, params.od_st, params.cap) * base,
            }
        )
    return rows


@dataclass(frozen=True)
class TransferPoint:
    """One source-input setting of the simulated transfer measurement."""

    n_source_in: float
    no_gate_out: float
    no_gate_sigma: float
    with_gate_out: float
    with_gate_sigma: float


def transfer_scan(
    base: SimConfig,
    n_source_values,
    n_runs: int,
    threads: int = 1,
) -> list[TransferPoint]:
    """Simulate the source transfer function with and without gate input.

    The source input is swept by scaling source_rate at fixed t_int.  Outputs
    are medium-exit photon numbers (detected counts corrected by eta_det),
    with standard errors of the mean.
    """
    eta = base.params.eta_det
    points = []
    for i, n_in in enumerate(n_source_values):
        if n_in <= 0:
            raise DomainError("transfer scan needs source inputs > 0")
        rate = float(n_in) / base.t_int
        cfg_ref = replace(base, n_gate_in=0.0, source_rate=rate, seed=base.seed + 2 * i)
        cfg_gate = replace(base, source_rate=rate, seed=base.seed + 2 * i + 1)
        ref = simulate_ensemble(cfg_ref, n_runs, threads)
        gate = simulate_ensemble(cfg_gate, n_runs, threads)
        points.append(
            TransferPoint(
                n_source_in=float(n_in),
                no_gate_out=ref.mean_source_detected / eta,
                no_gate_sigma=_mean_se(ref.histogram) / eta,
                with_gate_out=gate.mean_source_detected / eta,
                with_gate_sigma=_mean_se(gate.histogram) / eta,
            )
        )
    return points


def _mean_se(hist: CountHistogram) -> float:
    if hist.total < 2:
        return 0.0
    return math.sqrt(hist.variance() / hist.total)


def transfer_dataset(points: list[TransferPoint], label: str = "transfer") -> DataSet:
    """No-gate transfer points as a DataSet ready for fit_saturation."""
    return DataSet(
        x=np.array([p.n_source_in for p in points]),
        y=np.array([p.no_gate_out for p in points]),
        sigma=np.array([max(p.no_gate_sigma, 1e-12) for p in points]),
        label=label,
    )


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of one simulate -> decompose -> threshold detection run.

    ``fidelity`` is the ground-truth fraction of simulated runs classified
    correctly at the model threshold (the simulator knows the true stored
    number per run); ``threshold.fidelity`` is the idealized mixture-model
    value, which ignores mid-window fly-away and is therefore optimistic.
    """

    mu0: float
    threshold: ThresholdResult
    fidelity: float
    fidelity_balanced: float
    gated_hist: CountHistogram
    reference_hist: CountHistogram
    decomposition: DecompositionResult
    reference_poissonness_p: float
    mean_stored: float

    @property
    def tau(self) -> int:
        return self.threshold.tau


def detection_experiment(
    mu0: float,
    n_stored: float = 0.61,
    cap: int = 3,
    od_st_model: float = 0.94,
    od_st_instant: float = 2.2,
    t_int: float = 90.0,
    eta_det: float = 0.31,
    retention_tau: float | None = None,
    n_runs: int = 250,
    seed: int = 0,
    threads: int = 1,
) -> DetectionReport:
    """Full single-shot detection pipeline at one no-gate mean ``mu0``.

    Simulates gated and reference ensembles with instantaneous attenuation
    ``od_st_instant`` and exponential fly-away (retention_tau defaults to the
    value that averages it down to ``od_st_model`` over the window), builds
    the Poisson mixture at the effective ``od_st_model``, decomposes the
    gated histogram against it, picks the optimal threshold, and scores the
    threshold against the simulator's per-run ground truth.
    """
    if mu0 <= 0:
        raise DomainError(f"mu0 must be > 0, got {mu0}")
    if retention_tau is None:
        retention_tau = calibrate_retention_tau(od_st_instant, od_st_model, t_int)
    params = models.TransistorParams(
        od_st=od_st_instant, cap=cap, a_ge=0.0, eta_det=eta_det
    )
    rate = mu0 / (eta_det * t_int)
    gated_cfg = SimConfig(
        n_gate_in=n_stored,
        p_store=1.0,
        params=params,
        sat=None,
        source_rate=rate,
        t_int=t_int,
        retention_tau=retention_tau,
        seed=seed,
    )
    ref_cfg = replace(gated_cfg, n_gate_in=0.0, seed=seed + 1)

    gated = simulate_ensemble(gated_cfg, n_runs, threads)
    ref = simulate_ensemble(ref_cfg, n_runs, threads)

    model = mixture_from_params(n_stored, cap, od_st_model, mu0)
    thr = optimal_threshold(model)
    deco = decompose(gated.histogram, model)

    n_correct = 0
    n_gated_runs = 0
    n_gated_correct = 0
    n_ungated_correct = 0
    for k, hist in gated.by_stored.items():
        for n, runs in hist.counts.items():
            present = n <= thr.tau
            correct = present == (k >= 1)
            n_correct += runs * correct
            if k >= 1:
                n_gated_runs += runs
                n_gated_correct += runs * correct
            else:
                n_ungated_correct += runs * correct
    n_ungated_runs = gated.n_runs - n_gated_runs
    balanced = 0.5 * (
        (n_gated_correct / n_gated_runs if n_gated_runs else 0.0)
        + (n_ungated_correct / n_ungated_runs if n_ungated_runs else 0.0)
    )

    return DetectionReport(
        mu0=float(mu0),
        threshold=thr,
        fidelity=n_correct / gated.n_runs,
        fidelity_balanced=balanced,
        gated_hist=gated.histogram,
        reference_hist=ref.histogram,
        decomposition=deco,
        reference_poissonness_p=poissonness_test(ref.histogram).p_value
        if ref.n_runs >= 30
        else float("nan"),
        mean_stored=gated.mean_stored,
    )


def fidelity_sweep(
    mu0_values,
    n_runs: int = 250,
    seed: int = 0,
    threads: int = 1,
    **kwargs,
) -> list[DetectionReport]:
    """Detection pipeline over a grid of no-gate means, one report per mu0."""
    reports = []
    for i, mu0 in enumerate(mu0_values):
        reports.append(
            detection_experiment(
                float(mu0), n_runs=n_runs, seed=seed + 1000 * i, threads=threads, **kwargs
            )
        )
    return reports
