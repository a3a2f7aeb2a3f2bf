"""Classical capacity of discrete channels and the Holevo quantity.

All logarithms are base 2; capacities are in bits per channel use, which
here means bits per photon pair.  ``0 log 0`` is taken as 0 throughout.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .qstate import TwoQubitState, as_state, von_neumann_entropy

ROW_SUM_TOL = 1e-9
OUTCOMES = ("singlet", "triplet")
# adaptive step for the Blahut-Arimoto update
BA_STEP_GROWTH = 2.0
BA_STEP_MAX = 1e12
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


class ChannelMatrixError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClassicalChannelMatrix:
    """Conditional probabilities ``p[x, y] = P(outcome y | input x)``."""

    p: np.ndarray
    outcomes: tuple = OUTCOMES
    inputs: tuple = ()

    def __post_init__(self):
        p = np.array(self.p, dtype=float, copy=True)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ChannelMatrixError(f"channel matrix must be 2-D and non-empty, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ChannelMatrixError("channel matrix has non-finite entries")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ChannelMatrixError("channel matrix entries must lie in [0, 1]")
        # subnormal entries would underflow in r @ p and produce infinite divergences
        p[p < np.finfo(float).tiny] = 0.0
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            i = int(bad[0])
            raise ChannelMatrixError(f"row {i} sums to {sums[i]:.12g}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if len(self.outcomes) != p.shape[1]:
            object.__setattr__(self, "outcomes", tuple(f"y{j}" for j in range(p.shape[1])))
        if self.inputs and len(self.inputs) != p.shape[0]:
            raise ChannelMatrixError("number of input labels does not match matrix rows")

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.inputs:
            buf.write("# inputs: " + ",".join(self.inputs) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.outcomes)
        for row in self.p:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ClassicalChannelMatrix":
        inputs = ()
        header = None
        rows = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                if s[1:].strip().startswith("inputs:"):
                    inputs = tuple(x.strip() for x in s.split(":", 1)[1].split(","))
                continue
            cells = [c.strip() for c in s.split(",")]
            if header is None:
                header = tuple(cells)
                continue
            if len(cells) != len(header):
                raise ChannelMatrixError(f"line {lineno}: expected {len(header)} columns, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ChannelMatrixError(f"line {lineno}: non-numeric entry") from None
        if header is None or not rows:
            raise ChannelMatrixError("channel CSV has no data rows")
        return cls(np.array(rows), outcomes=header, inputs=inputs)


@dataclass(frozen=True)
class CapacityResult:
    capacity_bits: float
    optimal_prior: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "capacity_bits": self.capacity_bits,
            "optimal_prior": [float(x) for x in self.optimal_prior],
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }


def _as_channel(ch) -> ClassicalChannelMatrix:
    return ch if isinstance(ch, ClassicalChannelMatrix) else ClassicalChannelMatrix(ch)


def _divergences(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``D(W_x || q)`` in bits for every input row ``x``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, w * np.log2(w / q), 0.0)
    return terms.sum(axis=1)


def mutual_information(prior, ch) -> float:
    w = _as_channel(ch).p
    r = np.asarray(prior, dtype=float)
    q = r @ w
    return float(r @ _divergences(w, q))


def blahut_arimoto(ch, tol: float = 1e-9, max_iter: int = 100_000) -> CapacityResult:
    """Capacity by alternating maximization.

    Each iteration brackets the capacity between ``I(r)`` (achieved by the
    current prior ``r``) and ``max_x D(W_x || rW)``; iteration stops once
    the bracket is narrower than ``tol``.  The reported capacity is the lower
    end of the bracket.

    The update is ``r <- r * 2^(mu * D)``.  ``mu = 1`` is the classic
    step, which never decreases ``I``; larger steps are tried while they
    keep improving ``I``.  This matters for nearly useless channels, where
    the classic step needs ~1e5 iterations.
    """
    w = _as_channel(ch).p
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = w.shape[0]
    r = np.full(n, 1.0 / n)
    d = _divergences(w, r @ w)
    lo = float(r @ d)
    best_lo, best_r, gap = lo, r, np.inf
    mu = 1.0
    it = 0
    for it in range(1, int(max_iter) + 1):
        hi = float(d.max())
        gap = min(gap, hi - best_lo)
        if gap <= tol:
            break
        cand = None
        if mu > 1.0:
            cand = _ba_step(r, d, hi, mu)
            d_c = _divergences(w, cand @ w)
            lo_c = float(cand @ d_c)
            if lo_c >= lo:
                mu = min(mu * BA_STEP_GROWTH, BA_STEP_MAX)
            else:
                cand = None
                mu = max(1.0, mu / BA_STEP_GROWTH)
        else:
            mu = BA_STEP_GROWTH
        if cand is None:
            # the classic step is always safe
            cand = _ba_step(r, d, hi, 1.0)
            d_c = _divergences(w, cand @ w)
            lo_c = float(cand @ d_c)
        r, d, lo = cand, d_c, lo_c
        if lo > best_lo:
            best_lo, best_r = lo, r
    converged = gap <= tol
    cap = min(max(best_lo, 0.0), np.log2(n))
    return CapacityResult(cap, best_r.copy(), it, float(max(gap, 0.0)), converged)


def _ba_step(r, d, hi, mu):
    out = r * np.exp2(mu * (d - hi))
    return out / out.sum()


def binary_capacity_closed_form(p_out_given_0: float, p_out_given_1: float) -> CapacityResult:
    """Exact capacity of a binary-input, binary-output channel.

    The arguments are the probabilities of the same outcome given input 0
    and input 1.  At the optimum both inputs have equal divergence from the
    output distribution ``q``, which gives
    ``q0 = 1 / (1 + 2^((H(a) - H(b)) / (a - b)))``.  The prior follows from
    ``q0 = (1 - r) a + r b`` and the capacity is ``I(r)``, evaluated
    directly so that nearly degenerate channels keep full precision.
    """
    a, b = float(p_out_given_0), float(p_out_given_1)
    for v in (a, b):
        if not 0.0 <= v <= 1.0:
            raise ChannelMatrixError(f"probabilities must lie in [0, 1], got {v}")
    if abs(a - b) < 1e-15:
        return CapacityResult(0.0, np.array([0.5, 0.5]), 0, 0.0)
    slope = (_h2(a) - _h2(b)) / (a - b)
    q0 = 1.0 / (1.0 + np.exp2(slope))
    r1 = min(max((a - q0) / (a - b), 0.0), 1.0)
    prior = np.array([1.0 - r1, r1])
    cap = mutual_information(prior, [[a, 1 - a], [b, 1 - b]])
    return CapacityResult(float(max(cap, 0.0)), prior, 0, 0.0)


def _h2(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def holevo_quantity(ensemble) -> float:
    """``S(sum p_i rho_i) - sum p_i S(rho_i)`` in bits."""
    priors = np.array([float(p) for p, _ in ensemble])
    states = [as_state(rho) for _, rho in ensemble]
    if priors.size == 0:
        raise ValueError("ensemble is empty")
    if priors.min() < 0 or abs(priors.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"priors must be non-negative and sum to 1, got {priors.sum():.12g}")
    avg = sum(p * s.matrix for p, s in zip(priors, states))
    chi = von_neumann_entropy(TwoQubitState._unchecked(avg / np.trace(avg).real))
    chi -= sum(p * von_neumann_entropy(s) for p, s in zip(priors, states))
    return float(max(chi, 0.0))


def golden_section_max(fun, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-9):
    """Maximize a unimodal scalar function; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def optimize_two_state_prior(rho0, rho1, tol: float = 1e-9):
    """Prior on ``rho1`` maximizing the Holevo quantity, and the maximum in bits."""
    s0, s1 = as_state(rho0), as_state(rho1)

    def chi(p):
        return holevo_quantity([(1.0 - p, s0), (p, s1)])

    return golden_section_max(chi, 0.0, 1.0, tol)
