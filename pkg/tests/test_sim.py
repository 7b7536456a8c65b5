import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import norm

from mccvqkd.keyrate import ChannelPoint, DetectorModel, worst_case
from mccvqkd.noise import FiberModel
from mccvqkd.sim import (
    DegenerateInputError,
    ImpairmentState,
    IQFrame,
    NoOffSegmentError,
    SimulationConfig,
    SnuTrace,
    SyncError,
    TxPlan,
    apply_channel,
    calibrate_snu,
    dump_symbols_csv,
    estimate_channel,
    gaussian_channel,
    heterodyne_detect,
    mc_demodulate,
    mc_generate,
    pilot_tone,
    quantize,
    rrc_taps,
    run_trials,
    simulate,
    snu_trace,
)
from mccvqkd.sim.ofdm import rrc_response
from mccvqkd.sim.runner import CSV_COLUMNS, draw_symbols

QUIET = ImpairmentState(laser_linewidths=(0.0, 0.0))
LOSSLESS = FiberModel(0.0, loss_db=0.0)


def sigma_xi(T, xi, m, eta=1.0, v_el=0.0):
    """Std of the residual-variance excess-noise estimator (complex samples)."""
    return (eta * T * xi + 2.0 + v_el) / (math.sqrt(m) * eta * T)


def sigma_T(T, xi, V_A, m):
    """Std of the squared-gain transmittance estimator, unit efficiency."""
    return 2 * math.sqrt(T) * math.sqrt(T * xi + 2.0) / math.sqrt(2 * m * V_A)


# -- transmitter ---------------------------------------------------------


def test_plan_invariants():
    plan = TxPlan()
    assert plan.f_sub == pytest.approx(2.0)
    assert plan.ts_frames == 40 and plan.key_frames == 160
    with pytest.raises(ValueError):
        TxPlan(ts_fraction=1.0)
    with pytest.raises(ValueError):
        TxPlan(rrc_rolloff=1.5)
    with pytest.raises(ValueError):
        TxPlan(N=0)


def test_zero_symbols_leave_only_training():
    plan = TxPlan()
    frame = mc_generate(np.zeros((plan.N, 2 * plan.key_frames)), plan)
    grid = np.fft.fft(frame.symbols.reshape(2, plan.frames_per_block, plan.N), axis=-1, norm="ortho")
    assert np.allclose(grid[:, plan.ts_frames :, :], 0.0, atol=1e-14)
    assert np.allclose(grid[:, : plan.ts_frames, :], plan.training_symbols(), atol=1e-12)
    assert frame.ts_mask.sum() == 2 * plan.ts_frames * plan.N


def test_symbol_count_must_divide():
    plan = TxPlan()
    with pytest.raises(ValueError):
        mc_generate(np.zeros(plan.N * plan.key_frames + 1), plan)
    with pytest.raises(ValueError):
        mc_generate(np.zeros((plan.N, plan.key_frames + 3)), plan)


def test_frame_size_invariant():
    with pytest.raises(ValueError):
        IQFrame(np.zeros(10, complex), 40.0, 1000, np.zeros(1000, bool), 4, 1)


def test_transform_round_trip_and_parseval():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(64, 7)) + 1j * rng.normal(size=(64, 7))
    X = np.fft.ifft(x, axis=-1, norm="ortho")
    assert np.max(np.abs(np.fft.fft(X, axis=-1, norm="ortho") - x)) < 1e-12
    assert abs(np.sum(np.abs(X) ** 2) / np.sum(np.abs(x) ** 2) - 1) < 1e-12


def test_rrc_cascade_isi_below_40db():
    sps = 8
    h = rrc_taps(0.3, sps, 24)
    rc = np.convolve(h, h)
    centre = rc.size // 2
    main = rc[centre]
    side = np.delete(rc[centre % sps :: sps], centre // sps)
    assert 10 * np.log10(np.sum(side**2) / main**2) < -40


def test_frequency_domain_rrc_is_nyquist():
    n, sps = 4096, 4
    H = rrc_response(n, 40.0, 10.0, 0.3, sps)
    pulse = np.real(np.fft.ifft(H**2))
    samples = pulse[::sps]
    assert abs(samples[0] - 1.0) < 1e-9
    assert np.max(np.abs(samples[1:])) < 1e-9


def test_loopback_recovers_symbols():
    cfg = SimulationConfig(impairments=QUIET, detector_noise=False, n_blocks=4)
    r = simulate(cfg, 3)
    err = np.max(np.abs(r.demod.key_symbols - r.tx_symbols)) / np.sqrt(3.8)
    assert err < 1e-6


def test_flat_stream_matches_parallel():
    plan = TxPlan()
    rng = np.random.default_rng(5)
    par = draw_symbols(plan, 1, rng)
    serial = par.T.reshape(-1)
    assert np.array_equal(mc_generate(par, plan).samples, mc_generate(serial, plan).samples)


def test_subcarrier_variance_matches_modulation():
    plan = TxPlan()
    n_blocks = 125  # 1e5 key symbols
    cfg = SimulationConfig(plan=plan, impairments=QUIET, detector_noise=False, n_blocks=n_blocks, M=n_blocks)
    r = simulate(cfg, 11)
    rx = r.demod.key_symbols
    assert rx.size == 100_000
    n = rx.shape[1]
    sigma = 3.8 / math.sqrt(n)  # std of the mean of |z|^2 for complex Gaussian z
    for k in range(plan.N):
        assert abs(np.mean(np.abs(rx[k]) ** 2) - 3.8) < 5 * sigma


def test_pilot_power():
    plan = TxPlan()
    frame = mc_generate(np.zeros((plan.N, plan.key_frames)), plan)
    p = pilot_tone(plan, frame)
    per_sub = 3.8 / (plan.N * plan.sps)
    assert np.mean(np.abs(p.samples) ** 2) == pytest.approx(100 * per_sub)
    assert p.kind == "pilot"


# -- channel ---------------------------------------------------------------


def _frame(seed=0, n_blocks=2):
    plan = TxPlan()
    tx = draw_symbols(plan, n_blocks, np.random.default_rng(seed))
    return plan, mc_generate(tx, plan)


def test_channel_identity():
    _, frame = _frame()
    out = apply_channel(frame, LOSSLESS, QUIET)
    assert np.max(np.abs(out.samples - frame.samples)) < 1e-12


def test_channel_loss_at_50km():
    _, frame = _frame()
    out = apply_channel(frame, FiberModel(50.0, loss_db=9.5), QUIET)
    ratio = np.sum(np.abs(out.samples) ** 2) / np.sum(np.abs(frame.samples) ** 2)
    assert ratio == pytest.approx(10**-0.95, rel=1e-9)


def test_channel_excess_noise_power():
    _, frame = _frame()
    zero = frame.with_samples(np.zeros_like(frame.samples))
    imp = replace(QUIET, excess_noise=0.05)
    out = apply_channel(zero, FiberModel(0.0, loss_db=3.0), imp)
    T = 10**-0.3
    n = out.samples.size
    assert abs(np.mean(np.abs(out.samples) ** 2) - T * 0.05) < 5 * T * 0.05 / math.sqrt(n)


def test_channel_deterministic():
    _, frame = _frame()
    imp = ImpairmentState(laser_linewidths=(1e4, 1e4), excess_noise=0.02, rng_seed=42)
    a = apply_channel(frame, FiberModel(25.0), imp)
    b = apply_channel(frame, FiberModel(25.0), imp)
    c = apply_channel(frame, FiberModel(25.0), replace(imp, rng_seed=43))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_dispersion_noise_single_carrier_50km():
    plan = TxPlan(N=1, V_A=3.8)
    cfg = SimulationConfig(plan=plan, fiber=FiberModel(50.0, loss_db=9.5), impairments=QUIET, detector_noise=False)
    xi = np.mean([simulate(cfg, s).xi_hat for s in range(4)])
    assert abs(xi / 0.0294 - 1) < 0.20


def test_dispersion_reduced_by_subcarriers():
    # Without a cyclic prefix, inter-subcarrier delay leaks into crosstalk,
    # so the simulated reduction is far weaker than the per-subcarrier model.
    fiber = FiberModel(50.0, loss_db=9.5)
    sc = simulate(SimulationConfig(plan=TxPlan(N=1), fiber=fiber, impairments=QUIET, detector_noise=False), 0)
    mc = simulate(SimulationConfig(plan=TxPlan(N=5), fiber=fiber, impairments=QUIET, detector_noise=False), 0)
    assert np.mean(mc.xi_hat) < np.mean(sc.xi_hat)


# -- detection -------------------------------------------------------------


def _complex_gaussian(n, var, seed):
    rng = np.random.default_rng(seed)
    return math.sqrt(var / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n))


def _raw_frame(samples):
    n = samples.size
    return IQFrame(samples, 40.0, n, np.zeros(n, bool), 1, 1)


def test_heterodyne_adds_vacuum():
    n = 1_000_000
    x = _raw_frame(_complex_gaussian(n, 3.0, 1))
    y, _ = heterodyne_detect(x, x, DetectorModel(), rng=2)
    # var(|y|^2 mean) of a complex Gaussian of variance 5 over n samples.
    assert abs(np.mean(np.abs(y.samples) ** 2) - 5.0) < 5 * 5.0 / math.sqrt(n)


def test_electronic_noise_floor():
    n = 1_000_000
    zero = _raw_frame(np.zeros(n, complex))
    y, _ = heterodyne_detect(zero, zero, DetectorModel(v_el=0.1), rng=3)
    assert abs(np.mean(np.abs(y.samples) ** 2) - 2.1) < 5 * 2.1 / math.sqrt(n)


def test_quantization_noise():
    x = np.random.default_rng(4).normal(size=1_000_000)
    full_scale = 4.0
    step = 2 * full_scale / 2**8
    err = quantize(x, 8, full_scale) - x
    assert abs(np.mean(err**2) / (step**2 / 12) - 1) < 0.10
    assert np.unique(quantize(x, 3, full_scale)).size <= 8


def test_adc_applied_in_detection():
    n = 100_000
    x = _raw_frame(_complex_gaussian(n, 1.0, 5))
    y, _ = heterodyne_detect(x, x, DetectorModel(adc_bits=4), rng=6)
    assert np.unique(y.samples.real).size <= 16


# -- demodulation ------------------------------------------------------------


def test_pnc_ordering():
    imp = ImpairmentState(laser_linewidths=(1e4, 1e4), path_drift=0.3)
    seeds = range(10)

    def xi(fast, slow):
        cfg = SimulationConfig(impairments=imp, fast_pnc=fast, slow_pnc=slow)
        return np.array([simulate(cfg, s).xi_hat.mean() for s in seeds])

    both, fast, none = xi(True, True), xi(True, False), xi(False, False)
    assert np.all(both < fast)
    assert np.all(both < none)
    assert both.mean() <= fast.mean() <= none.mean()


def test_superimposed_training_improves_phase_estimate():
    fiber = FiberModel(100.0, loss_db=19.0)
    imp = replace(QUIET, path_phase=0.7, dispersion_enabled=False)
    err = {}
    for M in (1, 16):
        r = simulate(SimulationConfig(fiber=fiber, impairments=imp, n_blocks=64, M=M), 1)
        err[M] = np.mean(np.angle(np.exp(1j * (r.demod.slow_phase + 0.7))) ** 2)
    assert err[16] < err[1]


def test_recovers_delay_and_phase():
    imp = replace(QUIET, delay_samples=37, path_phase=0.7)
    r = simulate(SimulationConfig(impairments=imp, detector_noise=False, n_blocks=4, M=4), 8)
    assert r.demod.sync_lag == 37
    assert np.max(np.abs(r.demod.key_symbols - r.tx_symbols)) < 1e-6


def test_sync_failure_is_reported():
    plan = TxPlan()
    frame = mc_generate(draw_symbols(plan, 2, np.random.default_rng(0)), plan)
    pilot = pilot_tone(plan, frame)
    y_sig, y_pil = heterodyne_detect(frame, pilot, DetectorModel(), rng=1)
    with pytest.raises(SyncError):
        mc_demodulate(y_sig, y_pil, replace(plan, ts_seed=1234), M=2)
    with pytest.raises(ValueError):
        mc_demodulate(y_sig, y_pil, plan, M=0)


def test_simulation_deterministic():
    cfg = SimulationConfig(impairments=ImpairmentState(laser_linewidths=(1e3, 1e3), excess_noise=0.01))
    a, b, c = simulate(cfg, 9), simulate(cfg, 9), simulate(cfg, 10)
    assert np.array_equal(a.demod.streams, b.demod.streams)
    assert np.array_equal(a.xi_hat, b.xi_hat)
    assert not np.array_equal(a.xi_hat, c.xi_hat)
    par = run_trials(cfg, [9, 10], workers=2)
    assert np.array_equal(par[0].xi_hat, a.xi_hat) and np.array_equal(par[1].xi_hat, c.xi_hat)


def test_csv_dump(tmp_path):
    r = simulate(SimulationConfig(impairments=QUIET, n_blocks=1, M=1), 0)
    path = tmp_path / "syms.csv"
    dump_symbols_csv(path, r.demod)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    N, B, F = r.demod.streams.shape
    assert len(rows) - 1 == N * B * F
    assert sum(int(row[4]) for row in rows[1:]) == N * B * r.demod.ts_frames
    assert complex(float(rows[1][2]), float(rows[1][3])) == r.demod.streams[0, 0, 0]


# -- estimation ----------------------------------------------------------------


def test_back_to_back_null_excess_noise():
    cfg = SimulationConfig(impairments=ImpairmentState())
    xs = np.concatenate([simulate(cfg, s).xi_hat for s in range(100)])
    m = cfg.n_blocks * cfg.plan.key_frames
    s = sigma_xi(1.0, 0.0, m)
    assert np.mean(np.abs(xs) <= 3 * s) >= 0.98
    assert abs(xs.mean()) < 3 * s / math.sqrt(xs.size)


def test_injected_excess_noise_simulated():
    fiber = FiberModel(0.0, loss_db=10 * math.log10(2))
    cfg = SimulationConfig(fiber=fiber, impairments=ImpairmentState(excess_noise=0.03, dispersion_enabled=False))
    results = [simulate(cfg, s) for s in range(100)]
    xs = np.concatenate([r.xi_hat for r in results])
    Ts = np.concatenate([r.T_hat for r in results])
    m = cfg.n_blocks * cfg.plan.key_frames
    s = sigma_xi(0.5, 0.03, m)
    assert np.mean(np.abs(xs - 0.03) <= 3 * s) >= 0.98
    assert abs(xs.mean() - 0.03) < 3 * s / math.sqrt(xs.size)
    assert abs(Ts.mean() - 0.5) < 0.01


def test_injected_excess_noise_estimator():
    m = 100_000
    xs = np.array([
        estimate_channel(*gaussian_channel(m, 3.8, 0.5, 0.03, rng=s)).xi_hat for s in range(100)
    ])
    s = sigma_xi(0.5, 0.03, m)
    assert np.mean(np.abs(xs - 0.03) <= 3 * s) >= 0.97
    assert abs(xs.mean() - 0.03) < 3 * s / 10


def test_transmittance_std_scales_inverse_sqrt_m():
    def spread(m, trials):
        return np.std([estimate_channel(*gaussian_channel(m, 3.8, 0.5, 0.03, rng=s)).T_hat for s in range(trials)])

    small, large = spread(10_000, 100), spread(1_000_000, 100)
    assert 7.0 < small / large < 13.0
    assert abs(small / sigma_T(0.5, 0.03, 3.8, 10_000) - 1) < 0.3


def test_worst_case_coverage_at_inflated_eps():
    eps_pe, m, T = 0.05, 20_000, 0.5
    covered = 0
    trials = 200
    for s in range(trials):
        est = estimate_channel(*gaussian_channel(m, 3.8, T, 0.03, rng=1000 + s))
        wc = worst_case(est.T_hat, est.xi_hat, ChannelPoint(3.8, min(est.T_hat, 1.0), 0.0), m, eps_pe)
        covered += T >= wc.T_wc
    # Binomial band around 1 - eps_pe.
    sd = math.sqrt(eps_pe * (1 - eps_pe) / trials)
    assert abs(covered / trials - (1 - eps_pe)) < 3 * sd


def test_estimator_with_efficiency_and_electronic_noise():
    m = 400_000
    s, y = gaussian_channel(m, 4.0, 0.3, 0.02, eta=0.6, v_el=0.05, rng=7)
    est = estimate_channel(s, y, eta=0.6, v_el=0.05)
    assert est.T_hat == pytest.approx(0.3, rel=0.01)
    assert abs(est.xi_hat - 0.02) < 5 * sigma_xi(0.3, 0.02, m, 0.6, 0.05)


def test_snu_reference_rescales():
    s, y = gaussian_channel(10_000, 4.0, 0.5, 0.0, rng=1)
    a = estimate_channel(s, y)
    b = estimate_channel(s, 1.5 * y, snu_reference=2.25)
    assert a.T_hat == pytest.approx(b.T_hat, rel=1e-12)


def test_degenerate_input():
    with pytest.raises(DegenerateInputError):
        estimate_channel(np.zeros(10), np.ones(10))
    with pytest.raises(ValueError):
        estimate_channel(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        estimate_channel(np.ones(1), np.ones(1))


# -- shot-noise calibration ------------------------------------------------------


def test_snu_ideal_switch():
    n = 200_000
    trace = snu_trace(5, n, v_el=0.1, signal_power=4.0, rng=1)
    one = calibrate_snu(trace)
    real = calibrate_snu(trace, "real-time")
    sd = 1.1 * math.sqrt(2 / n)
    assert abs(one.value - 1.1) < 5 * sd
    assert abs(real.value - 1.1) < 5 * sd / math.sqrt(5)
    assert real.per_pair.shape == (5,)


def test_snu_extinction_leakage_bias():
    n = 1_000_000
    ideal = calibrate_snu(snu_trace(1, n, signal_power=5.0, rng=2)).value
    leaky = calibrate_snu(snu_trace(1, n, signal_power=5.0, extinction_db=50.0, rng=2)).value
    assert abs(leaky - ideal) < 1e-4


def test_snu_gain_drift_tracking():
    trace = snu_trace(10, 200_000, gain_drift=0.01, rng=3)
    truth = trace.gain[~trace.on]
    real = calibrate_snu(trace, "real-time").per_pair
    one = calibrate_snu(trace, "one-time").per_pair
    sd = math.sqrt(2 / 200_000)
    assert np.max(np.abs(real - truth)) < 5 * sd
    assert abs(one[-1] - truth[-1]) > 0.015


def test_snu_same_dsp():
    trace = snu_trace(2, 50_000, rng=4)
    plain = calibrate_snu(trace).value
    scaled = calibrate_snu(trace, dsp=lambda x: 2 * x).value
    assert scaled == pytest.approx(4 * plain, rel=1e-12)


def test_snu_needs_off_segment():
    trace = SnuTrace(np.ones(20), 10, np.array([True, True]), np.ones(2), 0.0)
    with pytest.raises(NoOffSegmentError):
        calibrate_snu(trace)
    with pytest.raises(ValueError):
        calibrate_snu(snu_trace(1, 10, rng=0), mode="sometimes")


def test_one_sided_tail_matches_confidence_width():
    # Coverage test above relies on w(eps) being a one-sided Gaussian quantile.
    from mccvqkd.keyrate import confidence_width

    assert confidence_width(0.05) == pytest.approx(norm.isf(0.05), rel=1e-9)
