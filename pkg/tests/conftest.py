from __future__ import annotations

import math

import numpy as np
import pytest

from pdeloopgain.kernels import Kernel
from pdeloopgain.model import LoopAParams, LoopBParams
from pdeloopgain.spectral import eigensystem_dirichlet_robin, gauss_rule


def compatible_loop_b_data(params: LoopBParams):
    """First Robin mode for ``u1`` and ``u2_0 = k u1_0(1) + beta z``.

    ``beta`` makes the data C^1-compatible at the corner (t, z) = (0, 0):
    ``-c u2_0'(0) = k d/dt u1(0, 1)``, so the boundary trace has no kink.
    """
    es = eigensystem_dirichlet_robin(params.diffusion, params.reaction, params.robin_q, 1)
    om, A, lam = float(es.frequencies[0]), float(es.normalizers[0]), float(es.eigenvalues[0])
    end = A * math.sin(om)
    k, c = params.boundary_gain, params.transport_speed
    nodes, w = gauss_rule(8, 16)
    b1 = params.kernel(np.ones_like(nodes), nodes)
    i0, i1 = float(np.sum(w * b1)), float(np.sum(w * b1 * nodes))
    # u1_t(0, 1) = -lam end + i0 k end + i1 beta ;  -c beta = k u1_t(0, 1)
    beta = -k * (-lam * end + i0 * k * end) / (c + k * i1)
    return (lambda z: A * np.sin(om * np.asarray(z, dtype=float)),
            lambda z: k * end + beta * np.asarray(z, dtype=float))


@pytest.fixture
def loop_a_benchmark():
    return LoopAParams(2.0, 1.5, 3.0, 2.0)


@pytest.fixture
def loop_b_benchmark():
    return LoopBParams(1.0, 1.0, -0.5, -0.5, 0.5, Kernel.expr("one", 0.5))
