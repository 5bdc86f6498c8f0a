"""Shared fixtures; the heavy benchmark pipeline runs once per session."""

import numpy as np
import pytest

from ifirtune.gripper import (GripperParams, NoiseConfig, discretize_plant,
                              default_constraint_spec, reference_models,
                              run_open_loop_experiment, synthesize_baselines)


@pytest.fixture(scope="session")
def gripper_bundle():
    """Full benchmark pipeline: datasets, plant, models, constraint spec
    and the four synthesized baselines."""
    params = GripperParams()
    clean = run_open_loop_experiment(params)
    noisy = run_open_loop_experiment(params, noise=NoiseConfig())
    plant_d = discretize_plant(params)
    mr, md = reference_models(params.ts)
    spec = default_constraint_spec(plant_d)
    baselines = synthesize_baselines(clean, noisy, mr, md, spec)
    return {"params": params, "clean": clean, "noisy": noisy,
            "plant_d": plant_d, "mr": mr, "md": md, "spec": spec,
            "baselines": baselines}


def sample_feasible(rng, cons, x_center, n):
    """Random points in the polyhedron G x <= h, starting from a strictly
    feasible center: step a random direction to a random fraction of the
    distance to the boundary."""
    g, h = cons.g, cons.hvec
    slack0 = h - g @ x_center
    assert np.min(slack0) > 0.0, "center must be strictly feasible"
    out = np.empty((n, x_center.size))
    for i in range(n):
        d = rng.standard_normal(x_center.size)
        d /= np.linalg.norm(d)
        gd = g @ d
        pos = gd > 1e-14
        tmax = np.min(slack0[pos] / gd[pos]) if np.any(pos) else 1.0
        out[i] = x_center + rng.uniform(0.0, 0.999) * tmax * d
    return out
