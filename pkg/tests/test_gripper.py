"""Two-mass benchmark: plant construction, experiment generation and
closed-loop evaluation."""

import numpy as np
import pytest

from ifirtune.gripper import (ExcitationConfig, GripperParams, NoiseConfig,
                              build_plant, closed_loop, discretize_plant,
                              estimate_passivity_indices, evaluate_closed_loop,
                              published_pd_controller, reference_models,
                              run_open_loop_experiment)
from ifirtune.lti import frequency_response, spectral_radius
from ifirtune.vrft import TwoDofController


def test_plant_modes_match_physical_matrices():
    p = GripperParams()
    mass = np.diag([p.m1, p.m2])
    damp = np.array([[p.c1 + p.c2, -p.c2], [-p.c2, p.c2]])
    stiff = np.array([[p.k1 + p.k2, -p.k2], [-p.k2, p.k2]])
    a_ref = np.block([
        [np.zeros((2, 2)), np.eye(2)],
        [-np.linalg.solve(mass, stiff), -np.linalg.solve(mass, damp)]])
    p1, _ = build_plant(p)
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(p1.a)),
                               np.sort_complex(np.linalg.eigvals(a_ref)),
                               rtol=1e-9)


def test_reference_model_dc_gains():
    mr, md = reference_models(0.01)
    assert mr.eval_at(1.0 + 0j).real == pytest.approx(1.0, abs=1e-9)
    assert md.eval_at(1.0 + 0j).real == pytest.approx(1000.0 / 1500.0,
                                                      abs=1e-9)


def test_experiment_reproducible_and_sized():
    a = run_open_loop_experiment(excitation=ExcitationConfig(n_samples=500))
    b = run_open_loop_experiment(excitation=ExcitationConfig(n_samples=500))
    for key in ("u", "d", "y_pos", "y_vel"):
        np.testing.assert_array_equal(a[key].samples, b[key].samples)
        assert len(a[key]) == 500


def test_noise_hits_target_snr():
    exc = ExcitationConfig(n_samples=5000)
    clean = run_open_loop_experiment(excitation=exc)
    noisy = run_open_loop_experiment(excitation=exc,
                                     noise=NoiseConfig(seed=1))
    for key, target in (("y_pos", 28.1), ("y_vel", 30.6)):
        err = noisy[key].samples - clean[key].samples
        snr = 10 * np.log10(np.mean(clean[key].samples ** 2)
                            / np.mean(err ** 2))
        assert snr == pytest.approx(target, abs=0.5)


def test_velocity_map_indices():
    plant_d = discretize_plant()
    nu1, rho1 = estimate_passivity_indices(plant_d)
    assert nu1 <= 0.0
    assert rho1 == 0.0
    theta = np.linspace(1e-4, np.pi, 2000)
    re = frequency_response(plant_d, theta=theta)[:, 1, 0].real
    assert np.min(re) >= nu1  # safety factor keeps the bound below the scan


def test_closed_loop_matches_frequency_algebra():
    plant_d = discretize_plant()
    ctrl = TwoDofController(0.0, [0.3, -0.1], [0.2, 0.05], 0.01)
    cl = closed_loop(plant_d, ctrl)
    theta = np.linspace(0.05, 2.0, 30)
    resp = frequency_response(cl, theta=theta)
    p = frequency_response(plant_d, theta=theta)
    c = frequency_response(ctrl.feedback_tf(), theta=theta)
    f = frequency_response(ctrl.prefilter_tf(), theta=theta)
    # y_pos/r with u = F r - C y_vel: P_pos F / (1 + P_vel C)
    ref = p[:, 0, 0] * f / (1.0 + p[:, 1, 0] * c)
    np.testing.assert_allclose(resp[:, 0, 0], ref, rtol=1e-8, atol=1e-10)


def test_published_pd_is_marginal_not_stable():
    rho = spectral_radius(closed_loop(discretize_plant(),
                                      published_pd_controller(0.01)))
    assert rho == pytest.approx(1.0, abs=1e-9)
    assert not rho < 1.0


def test_evaluate_closed_loop_report_fields():
    rep = evaluate_closed_loop(published_pd_controller(0.01), horizon=2.0,
                               dist_start=1.0)
    assert rep.t.size == 200
    assert rep.omega.size == rep.mismatch_tracking_db.size
    assert np.isfinite(rep.steady_state_error)


def test_baseline_suite(gripper_bundle):
    base = gripper_bundle["baselines"]
    assert set(base) == {"pd", "fir_unconstrained",
                         "fir_constrained_clean", "fir_constrained_noisy"}
    # constrained fits force a pure-FIR controller
    for name in ("fir_constrained_clean", "fir_constrained_noisy"):
        assert base[name].controller.gamma == 0.0
    # the pd baseline keeps its integrator free
    assert base["pd"].controller.m_fb == 1
    # unconstrained full-order fit reproduces the data almost exactly
    assert base["fir_unconstrained"].objective < 1e-8


def test_constrained_solution_feasible(gripper_bundle):
    from ifirtune.dissipativity import generate_constraints
    from ifirtune.vrft import ParameterLayout
    ctrl = gripper_bundle["baselines"]["fir_constrained_clean"].controller
    cons = generate_constraints(gripper_bundle["spec"],
                                ParameterLayout(False, ctrl.m_fb,
                                                ctrl.m_ff))
    x = np.concatenate([ctrl.g_fb, ctrl.g_ff])
    assert np.max(cons.g @ x - cons.hvec) <= 1e-8


def test_params_validation():
    with pytest.raises(ValueError):
        GripperParams(m1=-1.0)
    with pytest.raises(ValueError):
        GripperParams(ts=0.0)
