"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import time

import numpy as np
from scipy.optimize import curve_fit

from oracles import fock_singlet_probability, random_pure_ket
from polcap.analyzer import AnalyzerModel, mode_overlap, outcome_probabilities
from polcap.capacity import blahut_arimoto, optimize_two_state_prior
from polcap.channel import ChannelModel, twirl_exact, twirl_monte_carlo
from polcap.experiment import (
    ScanRecord,
    default_delays,
    evaluate_capacity,
    fit_gaussian_pair,
    invert_indistinguishability,
    model_dip_fit,
    reduce_to_channel,
    run_pipeline,
)
from polcap.qstate import LABELS, TRIPLET_PROJECTOR, TwoQubitState, apply_collective, haar_unitary, make_named_state, singlet_fidelity, trace_distance

LOG54 = np.log2(1.25)
CH = ChannelModel()


def test_01_ideal_separable_capacity(report):
    t0 = time.perf_counter()
    r = blahut_arimoto([[0, 1], [0.5, 0.5]])
    dt = time.perf_counter() - t0
    ok = abs(r.capacity_bits - LOG54) <= 1e-6 and abs(r.optimal_prior[1] - 0.4) <= 1e-4 and dt < 1.0
    detail = f"C = {r.capacity_bits:.9f} (target {LOG54:.9f}), prior = {r.optimal_prior[1]:.6f}, {dt * 1e3:.1f} ms"
    assert report("1 ideal separable capacity", ok, detail)


def test_02_ideal_entangled_capacity(report):
    r = blahut_arimoto(np.eye(2))
    ok = abs(r.capacity_bits - 1.0) <= 1e-9
    assert report("2 ideal entangled capacity", ok, f"C = {r.capacity_bits:.12f}")


def test_03_holevo_optimality(report):
    par = twirl_exact(make_named_state("parallel")).state
    orth = twirl_exact(make_named_state("orthogonal")).state
    p_sep, chi_sep = optimize_two_state_prior(par, orth)
    p_ent, chi_ent = optimize_two_state_prior(make_named_state("singlet"), TwoQubitState(np.asarray(TRIPLET_PROJECTOR) / 3))
    ok = (
        abs(chi_sep - LOG54) <= 1e-6
        and abs(p_sep - 0.4) <= 1e-3
        and abs(chi_ent - 1.0) <= 1e-6
        and abs(p_ent - 0.5) <= 1e-3
    )
    detail = f"separable chi = {chi_sep:.9f} at {p_sep:.5f}; entangled chi = {chi_ent:.9f} at {p_ent:.5f}"
    assert report("3 Holevo optimality", ok, detail)


def test_04_singlet_invariance(report, rng):
    s = make_named_state("singlet")
    worst = max(abs(singlet_fidelity(apply_collective(s, haar_unitary(rng))) - 1.0) for _ in range(1000))
    assert report("4 singlet invariance", worst < 1e-10, f"max deviation {worst:.2e} over 1000 unitaries")


def test_05_twirl_oracle_equivalence(report):
    model = ChannelModel(regime="monte-carlo", mc_samples=100_000, rng_seed=2024)
    bound = 3 / np.sqrt(1e5)
    t0 = time.perf_counter()
    dists = {}
    for label in LABELS:
        rho = make_named_state(label)
        dists[label] = trace_distance(twirl_monte_carlo(rho, model).state, twirl_exact(rho).state)
    dt = time.perf_counter() - t0
    ok = max(dists.values()) < bound and dt < 10.0
    detail = ", ".join(f"{k} {v:.4f}" for k, v in dists.items()) + f" (bound {bound:.4f}), {dt:.2f} s"
    assert report("5 twirl oracle equivalence", ok, detail)


def test_06_analyzer_vs_fock_oracle(report, rng):
    model = AnalyzerModel()
    delays = np.linspace(-2.5, 2.5, 10) * model.overlap_width
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        ket = random_pure_ket(rng)
        rho = TwoQubitState.from_ket(ket)
        for tau in delays:
            formula = outcome_probabilities(rho, tau, model).p_singlet_ideal
            oracle = fock_singlet_probability(ket, np.sqrt(mode_overlap(tau, model)))
            worst = max(worst, abs(formula - oracle))
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 30.0
    assert report("6 analyzer formula vs Fock oracle", ok, f"max |diff| {worst:.2e} over 100 states x 10 delays, {dt:.2f} s")


def test_07_end_to_end_ideal(report):
    model = AnalyzerModel(indistinguishability_max=1.0)
    t0 = time.perf_counter()
    sep = run_pipeline("separable", CH, model, trials_per_point=100_000, seed=7).capacity.capacity_bits
    ent = run_pipeline("entangled", CH, model, trials_per_point=100_000, seed=7).capacity.capacity_bits
    dt = time.perf_counter() - t0
    ok = abs(sep - 0.322) <= 0.01 and 0 <= 1.0 - ent <= 0.01 and dt < 60.0
    assert report("7 end-to-end ideal pipeline", ok, f"separable {sep:.6f}, entangled {ent:.6f}, {dt:.2f} s")


def test_08_experimental_reproduction(report):
    base = AnalyzerModel()
    m_sep = invert_indistinguishability(0.30, "separable", CH, base)
    m_ent = invert_indistinguishability(0.82, "entangled", CH, base)
    sep_model = AnalyzerModel(indistinguishability_max=m_sep)
    ent_model = AnalyzerModel(indistinguishability_max=m_ent)
    results = {}
    # default counting statistics for the +-0.02 tolerance, 1e7 trials for the ratio
    for trials in (100_000, 10**7):
        sep = run_pipeline("separable", CH, sep_model, trials_per_point=trials, seed=2024).capacity.capacity_bits
        ent = run_pipeline("entangled", CH, ent_model, trials_per_point=trials, seed=2024).capacity.capacity_bits
        results[trials] = (sep, ent)
    within = all(abs(s - 0.30) <= 0.02 and abs(e - 0.82) <= 0.02 for s, e in results.values())
    s7, e7 = results[10**7]
    ok = within and e7 / s7 > 2.7
    detail = (
        f"m0 = {m_sep:.5f} / {m_ent:.5f}; 1e5 trials: {results[100_000][0]:.4f} / {results[100_000][1]:.4f}; "
        f"1e7 trials: {s7:.4f} / {e7:.4f}, ratio {e7 / s7:.3f}"
    )
    assert report("8 experimental reproduction", ok, detail)


def _gauss(x, b, v, c, w):
    return b * (1 - v * np.exp(-((x - c) ** 2) / (2 * w**2)))


def test_09_fit_recovery(report):
    rng = np.random.default_rng(99)
    model = AnalyzerModel()
    delays = default_delays(model)
    w_true = model.overlap_width
    truth = dict(bs=1000.0, bt=1000.0, vs=0.8, vt=-0.4)
    vs_hat, vt_hat, pulls, ws_sep, wt_sep = [], [], [], [], []
    for _ in range(200):
        s = rng.poisson(_gauss(delays, truth["bs"], truth["vs"], 0.0, w_true))
        t = rng.poisson(_gauss(delays, truth["bt"], truth["vt"], 0.0, w_true))
        fit = fit_gaussian_pair(ScanRecord("parallel", delays, s, t, 10**6))
        vs_hat.append(fit.visibility_singlet)
        vt_hat.append(fit.visibility_triplet)
        # independent widths: each curve on its own, with scipy; delays in fs
        # because MINPACK's difference step for a parameter starting at 0 is ~1e-8
        est = []
        for counts, b, v in ((s, truth["bs"], truth["vs"]), (t, truth["bt"], truth["vt"])):
            p, cov = curve_fit(
                _gauss, delays * 1e15, counts, p0=[b, v, 0.0, w_true * 1e15],
                sigma=np.sqrt(np.maximum(counts, 1)), absolute_sigma=True,
            )
            est.append((p[3] * 1e-15, np.sqrt(cov[3, 3]) * 1e-15))
        (ws, es), (wt, et) = est
        ws_sep.append(ws)
        wt_sep.append(wt)
        pulls.append((ws - wt) / np.hypot(es, et))
    vs_err = np.array(vs_hat) - truth["vs"]
    vt_err = np.array(vt_hat) - truth["vt"]
    bias = max(abs(vs_err.mean()), abs(vt_err.mean()))
    rms_s, rms_t = np.sqrt(np.mean(vs_err**2)), np.sqrt(np.mean(vt_err**2))
    rms = max(rms_s, rms_t)
    pulls = np.array(pulls)
    # shared width is supported if the independent widths agree within their errors
    consistent = abs(pulls.mean()) < 3 / np.sqrt(pulls.size) and 0.7 < pulls.std() < 1.3
    ok = bias < 0.005 and rms < 0.02 and consistent
    detail = (
        f"visibility bias {bias:.4f}, RMS {rms_s:.4f} (singlet) {rms_t:.4f} (triplet); independent-width pull mean {pulls.mean():+.3f}, "
        f"sd {pulls.std():.3f}; mean widths {np.mean(ws_sep) / w_true:.4f}, {np.mean(wt_sep) / w_true:.4f} x true"
    )
    assert report("9 fit recovery", ok, detail)


def test_10_monotonicity_and_ordering(report):
    grid = np.round(np.linspace(0, 1, 11), 10)
    sep, ent = [], []
    for m0 in grid:
        model = AnalyzerModel(indistinguishability_max=m0)
        for caps, labels in ((sep, ("parallel", "orthogonal")), (ent, ("triplet-plus", "singlet"))):
            rc = reduce_to_channel(*(model_dip_fit(lab, CH, model) for lab in labels))
            caps.append(evaluate_capacity(rc).capacity_bits)
    sep, ent = np.array(sep), np.array(ent)
    ordered = bool(np.all(ent >= sep))
    monotone = bool(np.all(np.diff(sep) >= -1e-12) and np.all(np.diff(ent) >= -1e-12))
    zero = sep[0] <= 1e-6 and ent[0] <= 1e-6
    ok = ordered and monotone and zero
    detail = f"separable {np.round(sep, 4).tolist()}; entangled {np.round(ent, 4).tolist()}"
    assert report("10 monotonicity and ordering", ok, detail)
