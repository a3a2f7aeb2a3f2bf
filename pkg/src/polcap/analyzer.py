"""Receiver model: HOM interference at the balanced coupler and the detector cascade.

Mode overlap
------------
Both photons pass identical interference filters, so each has spectral
intensity ``|phi(w)|^2 ~ exp(-(w - w0)^2 / (2 sw^2))`` with angular-frequency
width ``sw = 2 pi c dlam / lam^2 / (2 sqrt(2 ln 2))`` (intensity FWHM
``dlam`` at ``lam``).  A relative delay ``tau`` multiplies one amplitude by
``exp(i w tau)``; the single-photon mode overlap is the Fourier transform of
the intensity, ``exp(-sw^2 tau^2 / 2)``.  Coincidence probabilities depend on
its squared modulus, so the two-photon overlap entering the interference
term is::

    m(tau) = m0 * exp(-tau^2 / (2 st^2)),    st = 1 / (sqrt(2) * sw)

For the default 10.5 nm filters at 780 nm, ``st`` is about 51 fs.

Outcome probabilities
---------------------
With singlet weight ``F`` the chance that the photons leave the coupler by
different ports is ``(1 - m (1 - 2F)) / 2``.  Same-port pairs reach distinct
detectors only half the time because of the BS4/BS5 splitters, so detected
triplet coincidences carry an extra factor 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qstate import singlet_fidelity

SPEED_OF_LIGHT = 299_792_458.0
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

DETECTORS = ("D1", "D2", "D3", "D4")
# D1/D2 sit behind one BS3 output port (via BS4), D3/D4 behind the other (via BS5).
_PORT = {"D1": 0, "D2": 0, "D3": 1, "D4": 1}


class AnalyzerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyzerModel:
    """Detection chain parameters.

    ``indistinguishability_max`` defaults to 0.95; this is an assumed
    source quality, not a measured figure.  Detector dead time, dark counts
    and afterpulsing are not modeled.
    """

    detector_efficiency: float = 1.0
    routing_efficiency: float = 1.0 / 16.0
    indistinguishability_max: float = 0.95
    filter_fwhm_wavelength: float = 10.5e-9
    center_wavelength: float = 780e-9
    coincidence_window: float = 3e-9
    accidental_rate: float = 0.0

    def __post_init__(self):
        for name in ("detector_efficiency", "routing_efficiency", "indistinguishability_max", "accidental_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise AnalyzerConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("filter_fwhm_wavelength", "center_wavelength", "coincidence_window"):
            if not getattr(self, name) > 0:
                raise AnalyzerConfigError(f"{name} must be > 0")

    @classmethod
    def ideal(cls, **overrides) -> "AnalyzerModel":
        """Lossless routing and detection with perfect mode overlap."""
        params = dict(detector_efficiency=1.0, routing_efficiency=1.0, indistinguishability_max=1.0)
        params.update(overrides)
        return cls(**params)

    @property
    def angular_bandwidth_sigma(self) -> float:
        dnu = SPEED_OF_LIGHT * self.filter_fwhm_wavelength / self.center_wavelength**2
        return 2.0 * np.pi * dnu * FWHM_TO_SIGMA

    @property
    def overlap_width(self) -> float:
        """Gaussian rms width of ``m(tau)`` in seconds."""
        return 1.0 / (np.sqrt(2.0) * self.angular_bandwidth_sigma)

    @property
    def pair_efficiency(self) -> float:
        return self.routing_efficiency * self.detector_efficiency**2


@dataclass(frozen=True)
class OutcomeProbabilities:
    p_singlet_ideal: float
    p_triplet_ideal: float
    p_singlet_detected: float
    p_triplet_detected: float


def mode_overlap(delay, model: AnalyzerModel):
    tau = np.asarray(delay, dtype=float)
    m = model.indistinguishability_max * np.exp(-(tau**2) / (2.0 * model.overlap_width**2))
    return float(m) if m.ndim == 0 else m


def singlet_probability(singlet_weight, overlap):
    """Ideal probability that the two photons exit BS3 by different ports."""
    f = np.asarray(singlet_weight, dtype=float)
    m = np.asarray(overlap, dtype=float)
    return 0.5 * (1.0 - m * (1.0 - 2.0 * f))


def outcome_probabilities(rho, delay: float, model: AnalyzerModel) -> OutcomeProbabilities:
    f = singlet_fidelity(rho)
    ps = float(singlet_probability(f, mode_overlap(delay, model)))
    pt = 1.0 - ps
    eta = model.pair_efficiency
    return OutcomeProbabilities(
        p_singlet_ideal=ps,
        p_triplet_ideal=pt,
        p_singlet_detected=eta * ps + model.accidental_rate,
        p_triplet_detected=eta * pt / 2.0 + model.accidental_rate,
    )


def classify_detector_pair(i: str, j: str) -> str:
    """Coincidence class of a detector pair: ``"singlet"`` or ``"triplet"``.

    Detectors behind different BS3 ports herald the singlet projection;
    detectors behind the same port herald the triplet subspace.
    """
    for d in (i, j):
        if d not in _PORT:
            raise ValueError(f"unknown detector {d!r}; expected one of {DETECTORS}")
    if i == j:
        raise ValueError(f"a coincidence needs two distinct detectors, got {i} twice")
    return "triplet" if _PORT[i] == _PORT[j] else "singlet"
