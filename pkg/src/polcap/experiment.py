"""Simulated delay scans, shared-width Gaussian fits and capacity extraction.

Data reduction
--------------
Each scan gives a singlet curve ``s(tau)`` and a triplet curve ``t(tau)``,
fitted jointly as ``B_k * (1 - v_k * exp(-(tau - tau0)^2 / (2 w^2)))``.
Far from the dip both ideal outcomes are equally likely, so the pedestal
ratio ``r = B_s / B_t`` is the relative detection efficiency of singlet and
triplet events (2 for the ideal cascade).  The efficiency-corrected
conditional probability at matched arrival times is::

    P(singlet | input) = s(tau0) / (s(tau0) + r * t(tau0))
                       = (1 - v_s) / ((1 - v_s) + (1 - v_t))

and ``P(triplet | input) = 1 - P(singlet | input)``.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .analyzer import AnalyzerModel, outcome_probabilities, singlet_probability
from .capacity import (
    CapacityResult,
    ClassicalChannelMatrix,
    binary_capacity_closed_form,
    blahut_arimoto,
)
from .channel import ChannelModel, apply_channel
from .qstate import LABELS, make_named_state

SEPARABLE = ("parallel", "orthogonal")
ENTANGLED = ("triplet-plus", "singlet")
ENSEMBLES = {"separable": SEPARABLE, "entangled": ENTANGLED}

DEFAULT_TRIALS = 100_000
DEFAULT_POINTS = 61
# half-span of the default delay grid, in FWHM of the dip
DEFAULT_SPAN_FWHM = 3.0

# Levenberg-Marquardt schedule
LM_LAMBDA0 = 1e-3
LM_UP = 10.0
LM_DOWN = 10.0
LM_LAMBDA_MAX = 1e12
LM_XTOL = 1e-10
LM_FTOL = 1e-14
LM_MAX_ITER = 200
MIN_FIT_POINTS = 6
# |v| / stderr needed before a free-shape fit is trusted
DIP_SIGNIFICANCE = 5.0
REWEIGHT_ROUNDS = 20
MIN_VARIANCE_COUNTS = 0.5


class FitError(RuntimeError):
    pass


class ReductionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScanRecord:
    input_label: str
    delays: np.ndarray
    singlet_counts: np.ndarray
    triplet_counts: np.ndarray
    trials_per_point: int
    rng_seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        s = np.asarray(self.singlet_counts)
        t = np.asarray(self.triplet_counts)
        if not (d.shape == s.shape == t.shape) or d.ndim != 1:
            raise ValueError("delays and count arrays must be 1-D and of equal length")
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        for name, c in (("singlet", s), ("triplet", t)):
            if np.any(c < 0) or np.any(c > self.trials_per_point):
                raise ValueError(f"{name} counts must lie in [0, trials_per_point]")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "singlet_counts", s.astype(np.int64))
        object.__setattr__(self, "triplet_counts", t.astype(np.int64))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# input_label={self.input_label}\n")
        buf.write(f"# trials_per_point={self.trials_per_point}\n")
        buf.write(f"# seed={self.rng_seed}\n")
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        buf.write("delay_s,singlet_counts,triplet_counts\n")
        for d, s, t in zip(self.delays, self.singlet_counts, self.triplet_counts):
            buf.write(f"{float(d)!r},{int(s)},{int(t)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScanRecord":
        """Parse the CSV written by ``to_csv``; errors name the offending line."""
        header = {}
        rows = []
        seen_columns = False
        for lineno, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                if "=" in s:
                    k, v = s[1:].split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            cells = [c.strip() for c in s.split(",")]
            if not seen_columns:
                if cells != ["delay_s", "singlet_counts", "triplet_counts"]:
                    raise ValueError(f"line {lineno}: expected header delay_s,singlet_counts,triplet_counts")
                seen_columns = True
                continue
            if len(cells) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(cells)}")
            try:
                rows.append((float(cells[0]), int(cells[1]), int(cells[2])))
            except ValueError:
                raise ValueError(f"line {lineno}: could not parse {s!r}") from None
        if not rows:
            raise ValueError("scan CSV contains no data rows")
        arr = np.array(rows, dtype=float)
        try:
            trials = int(header.get("trials_per_point", int(arr[:, 1:].max())))
        except ValueError:
            raise ValueError("trials_per_point header is not an integer") from None
        seed = header.get("seed")
        seed = None if seed in (None, "None") else int(seed)
        meta = {k: v for k, v in header.items() if k not in ("input_label", "trials_per_point", "seed")}
        return cls(header.get("input_label", "unknown"), arr[:, 0], arr[:, 1], arr[:, 2], trials, seed, meta)


@dataclass(frozen=True)
class DipFit:
    baseline_singlet: float
    baseline_triplet: float
    visibility_singlet: float
    visibility_triplet: float
    width: float
    center: float
    fit_residual: float
    stderr: dict = field(default_factory=dict)
    iterations: int = 0
    input_label: str = ""
    shape_fixed: bool = False
    significance: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("fit width must be positive")
        for v in (self.visibility_singlet, self.visibility_triplet):
            if abs(v) > 1 + 1e-6:
                raise ValueError(f"visibility {v} outside [-1, 1]")

    def curves(self, delays):
        g = np.exp(-((np.asarray(delays, dtype=float) - self.center) ** 2) / (2 * self.width**2))
        return (
            self.baseline_singlet * (1 - self.visibility_singlet * g),
            self.baseline_triplet * (1 - self.visibility_triplet * g),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DipFit":
        return cls(**json.loads(text))


@dataclass(frozen=True, eq=False)
class ReducedChannel:
    matrix: ClassicalChannelMatrix
    fits: tuple


def default_delays(analyzer: AnalyzerModel, points: int = DEFAULT_POINTS, span_fwhm: float = DEFAULT_SPAN_FWHM):
    fwhm = analyzer.overlap_width * 2.0 * np.sqrt(2.0 * np.log(2.0))
    return np.linspace(-span_fwhm * fwhm, span_fwhm * fwhm, points)


def label_seed(seed: int, label: str) -> int:
    return int(np.random.SeedSequence((int(seed), LABELS.index(label))).generate_state(1, np.uint64)[0])


def expected_probabilities(label: str, channel: ChannelModel, analyzer: AnalyzerModel, delays):
    """Detected singlet/triplet coincidence probabilities per trial at each delay."""
    out = apply_channel(make_named_state(label), channel).state
    probs = [outcome_probabilities(out, float(d), analyzer) for d in np.atleast_1d(delays)]
    ps = np.array([p.p_singlet_detected for p in probs])
    pt = np.array([p.p_triplet_detected for p in probs])
    return ps, pt


def simulate_scan(
    label: str,
    channel: ChannelModel,
    analyzer: AnalyzerModel,
    delays=None,
    trials_per_point: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> ScanRecord:
    """Counts of singlet and triplet coincidences versus delay.

    Each delay point is ``trials_per_point`` pump pulses; the singlet,
    triplet and no-coincidence outcomes of a pulse are mutually exclusive,
    so the counts are one multinomial draw per point.
    """
    if int(trials_per_point) < 1:
        raise ValueError("trials_per_point must be >= 1")
    delays = default_delays(analyzer) if delays is None else np.asarray(delays, dtype=float)
    ps, pt = expected_probabilities(label, channel, analyzer, delays)
    rng = np.random.default_rng(seed)
    pv = np.stack([ps, pt, np.clip(1.0 - ps - pt, 0.0, None)], axis=1)
    pv /= pv.sum(axis=1, keepdims=True)
    counts = np.array([rng.multinomial(int(trials_per_point), p) for p in pv])
    return ScanRecord(label, delays, counts[:, 0], counts[:, 1], int(trials_per_point), seed)


def _model(x, p):
    bs, bt, vs, vt, c, w = p
    g = np.exp(-((x - c) ** 2) / (2 * w**2))
    return np.concatenate([bs * (1 - vs * g), bt * (1 - vt * g)])


def _jacobian(x, p):
    bs, bt, vs, vt, c, w = p
    g = np.exp(-((x - c) ** 2) / (2 * w**2))
    dg_dc = g * (x - c) / w**2
    dg_dw = g * (x - c) ** 2 / w**3
    n = x.size
    j = np.zeros((2 * n, 6))
    j[:n, 0] = 1 - vs * g
    j[n:, 1] = 1 - vt * g
    j[:n, 2] = -bs * g
    j[n:, 3] = -bt * g
    j[:n, 4] = -bs * vs * dg_dc
    j[n:, 4] = -bt * vt * dg_dc
    j[:n, 5] = -bs * vs * dg_dw
    j[n:, 5] = -bt * vt * dg_dw
    return j


def _initial_guess(x, s, t):
    n = x.size
    k = max(1, int(round(0.125 * n)))
    outer = np.r_[np.arange(k), np.arange(n - k, n)]
    bs = max(s[outer].mean(), 1e-12)
    bt = max(t[outer].mean(), 1e-12)
    dev = np.abs(s - bs) / np.sqrt(bs) + np.abs(t - bt) / np.sqrt(bt)
    i = int(np.argmax(dev))
    vs = np.clip(1 - s[i] / bs, -1, 1)
    vt = np.clip(1 - t[i] / bt, -1, 1)
    w = (x[-1] - x[0]) / 4
    return np.array([bs, bt, vs, vt, x[i], w])


def _levenberg_marquardt(u, y, wts, p, lo, hi, free):
    """Bounded LM on the parameters selected by ``free``; returns (p, chi2, iterations).

    Parameters sitting on a bound with the gradient pointing outward are
    frozen for that step (active set), so minima on the boundary converge.
    """
    def chi2(q):
        r = y - _model(u, q)
        return float(np.sum(wts * r * r))

    lam = LM_LAMBDA0
    cost = chi2(p)
    for it in range(1, LM_MAX_ITER + 1):
        jf = _jacobian(u, p)
        r = y - _model(u, p)
        grad = jf.T @ (wts * r)
        pinned = ((p <= lo) & (grad < 0)) | ((p >= hi) & (grad > 0))
        act = free & ~pinned
        if not act.any():
            return p, cost, it
        j = jf[:, act]
        a = j.T @ (wts[:, None] * j)
        g = grad[act]
        diag = np.diag(a).copy()
        diag[diag <= 0] = 1.0
        improved = False
        while lam <= LM_LAMBDA_MAX:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= LM_UP
                continue
            trial = p.copy()
            trial[act] = np.clip(p[act] + step, lo[act], hi[act])
            c_new = chi2(trial)
            if c_new <= cost:
                dp = trial - p
                rel_cost = (cost - c_new) / max(cost, 1e-300)
                p, cost, improved = trial, c_new, True
                lam = max(lam / LM_DOWN, 1e-15)
                break
            lam *= LM_UP
        if not improved:
            # no descent direction left: at a (possibly bounded) minimum
            return p, cost, it
        if np.all(np.abs(dp) <= LM_XTOL * (np.abs(p) + LM_XTOL)) or rel_cost < LM_FTOL:
            return p, cost, it
    raise FitError(f"fit did not converge in {LM_MAX_ITER} iterations (chi2 = {cost:.4g})")


def fit_gaussian_pair(scan: ScanRecord, center: float | None = None, width: float | None = None) -> DipFit:
    """Joint weighted least-squares fit of the singlet and triplet curves.

    Shared center and width.  Weights start from the observed counts and
    are then iterated to the inverse model variance, so the result is the
    Poisson maximum-likelihood estimate.  Levenberg-Marquardt with box bounds: visibilities in
    ``[-1, 1]``, center inside the scanned range, width between a quarter
    of the smallest step and the full span.

    Passing ``center`` and ``width`` holds the dip shape fixed and fits only
    pedestals and visibilities.  Without them a scan whose dip is less
    significant than ``DIP_SIGNIFICANCE`` (see ``dip_significance``) raises
    ``FitError``, since the shape of a flat curve is undetermined.
    """
    x = np.asarray(scan.delays, dtype=float)
    s = np.asarray(scan.singlet_counts, dtype=float)
    t = np.asarray(scan.triplet_counts, dtype=float)
    if x.size < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} delay points to fit, got {x.size}")
    if s.sum() == 0 or t.sum() == 0:
        raise FitError("a coincidence curve has no counts; pedestal undetermined")
    fixed_shape = center is not None or width is not None
    if fixed_shape and (center is None or width is None or not width > 0):
        raise ValueError("center and width must be given together, with width > 0")

    # scaled coordinates keep the normal equations well conditioned
    x0, xs = 0.5 * (x[0] + x[-1]), 0.5 * (x[-1] - x[0])
    ns = max(s.max(), t.max())
    u = (x - x0) / xs
    y = np.concatenate([s, t]) / ns
    # inverse Poisson variance of the scaled counts
    wts = ns**2 / np.maximum(np.concatenate([s, t]), 1.0)

    p0 = _initial_guess(x, s, t)
    if fixed_shape:
        p0[4], p0[5] = center, width
    p = np.array([p0[0] / ns, p0[1] / ns, p0[2], p0[3], (p0[4] - x0) / xs, p0[5] / xs])
    du = np.min(np.diff(u))
    lo = np.array([1e-12, 1e-12, -1.0, -1.0, -1.0, du / 4])
    hi = np.array([np.inf, np.inf, 1.0, 1.0, 1.0, 2.0])
    free = np.array([True] * 4 + [not fixed_shape] * 2)
    p[free] = np.clip(p[free], lo[free], hi[free])

    # Reweight with the fitted model's variance until the parameters settle;
    # the fixed point solves the Poisson likelihood equations.
    it = 0
    for _ in range(REWEIGHT_ROUNDS):
        p_prev = p
        p, cost, n_it = _levenberg_marquardt(u, y, wts, p, lo, hi, free)
        it += n_it
        wts = ns**2 / np.maximum(_model(u, p) * ns, MIN_VARIANCE_COUNTS)
        if np.all(np.abs(p - p_prev) <= 1e-9 * (np.abs(p) + 1e-9)):
            break
    cost = float(np.sum(wts * (y - _model(u, p)) ** 2))
    # Pearson chi-square of constant pedestals, the no-dip hypothesis
    flat = np.sum((s - s.mean()) ** 2) / s.mean() + np.sum((t - t.mean()) ** 2) / t.mean()
    z = float(np.sqrt(max(flat - cost, 0.0)))
    if not np.all(np.isfinite(p)):
        raise FitError("fit produced non-finite parameters")

    j = _jacobian(u, p)[:, free]
    cov = np.linalg.pinv(j.T @ (wts[:, None] * j))
    scale = np.array([ns, ns, 1.0, 1.0, xs, xs])[free]
    err = np.zeros(6)
    err[free] = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * scale
    dof = max(2 * x.size - int(free.sum()), 1)
    names = ("baseline_singlet", "baseline_triplet", "visibility_singlet", "visibility_triplet", "center", "width")
    fit = DipFit(
        baseline_singlet=float(p[0] * ns),
        baseline_triplet=float(p[1] * ns),
        visibility_singlet=float(p[2]),
        visibility_triplet=float(p[3]),
        width=float(p[5] * xs),
        center=float(p[4] * xs + x0),
        fit_residual=cost / dof,
        stderr={k: float(e) for k, e in zip(names, err)},
        iterations=it,
        input_label=scan.input_label,
        shape_fixed=fixed_shape,
        significance=z,
    )
    if not fixed_shape and z < DIP_SIGNIFICANCE:
        raise FitError(
            f"no significant dip (sqrt of chi-square gain over flat pedestals = {z:.2f} "
            f"< {DIP_SIGNIFICANCE}); center and width are undetermined, pass them explicitly"
        )
    return fit


def dip_significance(fit: DipFit) -> float:
    """``sqrt(chi2_flat - chi2_fit)``: the dip's improvement over constant pedestals.

    Unlike ``|v| / stderr`` this is not fooled by a spike narrower than the
    delay step that fits a single fluctuating point.
    """
    return fit.significance


def singlet_conditional(fit: DipFit) -> float:
    """Efficiency-corrected P(singlet | input) at zero delay mismatch."""
    if fit.baseline_singlet <= 0 or fit.baseline_triplet <= 0:
        raise ReductionError("pedestals must be positive to calibrate detection efficiency")
    s0 = 1.0 - fit.visibility_singlet
    t0 = 1.0 - fit.visibility_triplet
    if s0 + t0 <= 0:
        raise ReductionError("both fitted curves vanish at the center; conditional probability undefined")
    return float(np.clip(s0 / (s0 + t0), 0.0, 1.0))


def reduce_to_channel(fit0: DipFit, fit1: DipFit) -> ReducedChannel:
    rows = []
    for f in (fit0, fit1):
        ps = singlet_conditional(f)
        rows.append([ps, 1.0 - ps])
    labels = tuple(f.input_label for f in (fit0, fit1)) if fit0.input_label and fit1.input_label else ()
    return ReducedChannel(ClassicalChannelMatrix(np.array(rows), inputs=labels), (fit0, fit1))


def evaluate_capacity(rc: ReducedChannel) -> CapacityResult:
    return blahut_arimoto(rc.matrix, tol=1e-9)


def model_dip_fit(label: str, channel: ChannelModel, analyzer: AnalyzerModel, trials_per_point: int = DEFAULT_TRIALS) -> DipFit:
    """The noise-free DipFit implied by the models (no sampling, no fitting)."""
    ps0, pt0 = expected_probabilities(label, channel, analyzer, [0.0])
    eta = analyzer.pair_efficiency
    acc = analyzer.accidental_rate
    bs = eta * 0.5 + acc
    bt = eta * 0.25 + acc
    if bs <= 0 or bt <= 0:
        raise ReductionError("models give no detected coincidences")
    return DipFit(
        baseline_singlet=trials_per_point * bs,
        baseline_triplet=trials_per_point * bt,
        visibility_singlet=float(1 - ps0[0] / bs),
        visibility_triplet=float(1 - pt0[0] / bt),
        width=analyzer.overlap_width,
        center=0.0,
        fit_residual=0.0,
        input_label=label,
    )


@dataclass(frozen=True, eq=False)
class PipelineResult:
    ensemble: tuple
    scans: tuple
    fits: tuple
    reduced: ReducedChannel
    capacity: CapacityResult


def fit_ensemble(scans) -> tuple:
    """Fit every scan of one measurement series.

    All scans share the delay line and filters, hence the dip shape.  Scans
    without a significant dip are refitted with the center and width of the
    most significant scan; if none has a dip, the shape defaults to the scan
    midpoint and a quarter of the span.
    """
    free = []
    for sc in scans:
        try:
            free.append(fit_gaussian_pair(sc))
        except FitError:
            free.append(None)
    ok = [f for f in free if f is not None]
    if ok:
        ref = max(ok, key=dip_significance)
        center, width = ref.center, ref.width
    else:
        x = scans[0].delays
        center, width = 0.5 * (x[0] + x[-1]), 0.25 * (x[-1] - x[0])
    return tuple(f if f is not None else fit_gaussian_pair(sc, center, width) for f, sc in zip(free, scans))


def run_pipeline(
    ensemble,
    channel: ChannelModel,
    analyzer: AnalyzerModel,
    delays=None,
    trials_per_point: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> PipelineResult:
    """simulate -> fit -> reduce -> capacity for a two-symbol input ensemble."""
    labels = ENSEMBLES.get(ensemble, ensemble)
    scans = tuple(
        simulate_scan(lab, channel, analyzer, delays, trials_per_point, label_seed(seed, lab)) for lab in labels
    )
    fits = fit_ensemble(scans)
    reduced = reduce_to_channel(*fits)
    return PipelineResult(tuple(labels), scans, fits, reduced, evaluate_capacity(reduced))


def analytic_capacity(ensemble, channel: ChannelModel, analyzer: AnalyzerModel) -> float:
    """Closed-form capacity of the ideal-detection channel at zero delay."""
    labels = ENSEMBLES.get(ensemble, ensemble)
    f = [apply_channel(make_named_state(lab), channel).singlet_weight for lab in labels]
    m = analyzer.indistinguishability_max
    p = [float(singlet_probability(fi, m)) for fi in f]
    return binary_capacity_closed_form(p[0], p[1]).capacity_bits


def invert_indistinguishability(target_bits: float, ensemble, channel: ChannelModel, analyzer: AnalyzerModel) -> float:
    """Peak mode overlap ``m0`` at which the ensemble's capacity equals ``target_bits``.

    Target capacities are often quoted without the underlying visibilities, so
    they are recovered by root-finding on the closed-form capacity curve.
    """
    def gap(m0):
        a = AnalyzerModel(**{**asdict(analyzer), "indistinguishability_max": m0})
        return analytic_capacity(ensemble, channel, a) - target_bits

    if gap(1.0) < 0:
        raise ValueError(f"target {target_bits} bits exceeds the capacity reachable at m0 = 1")
    if gap(0.0) > 0:
        raise ValueError(f"target {target_bits} bits is below the capacity at m0 = 0")
    return float(brentq(gap, 0.0, 1.0, xtol=1e-13))
