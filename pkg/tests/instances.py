"""Seeded instance builders shared by the test modules."""
from __future__ import annotations

import numpy as np

from tile360.channel import OneRingParams, default_angles, sample_block
from tile360.model import GopSpec, ProbabilityCase, StreamingModel, candidate_fovs

DESK_GAIN = 10 ** -6.5
DESK_BANDWIDTH = 624e3


def desk_params(K=1, M=4, N=8, angles=None):
    return OneRingParams(angles=default_angles(K) if angles is None else angles, antennas=M,
                         subcarriers=N, noise=1e-9, bandwidth=DESK_BANDWIDTH,
                         path_gain=(DESK_GAIN,) * K)


def random_fov_set(rng, model: StreamingModel, size=None, spread=2, user=0):
    """Random nearby viewpoints so FoVs overlap in varied ways."""
    size = int(rng.integers(2, 6)) if size is None else size
    x0, y0 = int(rng.integers(2, model.grid.rows)), int(rng.integers(1, model.grid.cols + 1))
    pts = set()
    while len(pts) < size:
        dx, dy = rng.integers(-spread, spread + 1, 2)
        x = min(max(x0 + int(dx), 1), model.grid.rows)
        y = (y0 + int(dy) - 1) % model.grid.cols + 1
        pts.add(model.grid.index_of((x, y)))
    return model.fov_set(sorted(pts), user)


def plus_fov_set(model: StreamingModel, viewpoint: int, user=0):
    return model.fov_set(candidate_fovs(viewpoint, model.grid), user)


def random_capacity(rng, model, fov_set, lo=0.05, hi=0.9):
    return float(rng.uniform(lo, hi)) * len(fov_set.tiles) * model.top_rate


def random_case(rng, tag, size, eps_hi=0.3):
    p = rng.dirichlet(np.ones(size))
    if tag == "pp":
        return ProbabilityCase.pp(p)
    if tag == "ip":
        return ProbabilityCase.ip(p, rng.uniform(0.0, eps_hi, size))
    return ProbabilityCase.up(size)


def mu_instance(seed, K=2, M=2, N=2, viewpoints=None, tag="pp", model=None):
    """Small multi-user planning instance on the desk link budget."""
    rng = np.random.default_rng(seed)
    model = model or StreamingModel()
    block = sample_block(seed, 0, desk_params(K, M, N))
    if viewpoints is None:
        viewpoints = rng.choice(np.arange(1, 9), K, replace=False) + 8 * rng.choice([0, 7], K)
    fsets = [plus_fov_set(model, int(v), k) for k, v in enumerate(viewpoints)]
    cases = [random_case(rng, tag, f.size) for f in fsets]
    return model, block, fsets, cases


def desk_model(slots=10):
    return StreamingModel(gop=GopSpec(1.0, slots, 2.5e6))
