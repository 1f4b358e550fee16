"""Small-gain and ISS certificates for parabolic PDEs coupled in a feedback loop.

Two loop structures are covered: a heat equation coupled to a pointwise ODE
(loop A, with a boundary disturbance) and a reaction-diffusion equation coupled
to a transport equation through a boundary trace and a non-local kernel
(loop B).
"""
from .certificate import CONDITION_IDS, Certificate
from .certify import (
    certify_loop_b,
    check_delay_independent,
    check_diffusion_robustness,
    check_loop_a,
    check_positive_spectrum,
    check_wave_kv,
    gain_curve,
    gain_g,
    iss_constants_loop_a,
    iss_constants_loop_b,
    optimize_iss_loop_a,
)
from .kernels import Kernel
from .model import (
    BacksteppingParams,
    ChemicalParams,
    DisturbanceSignal,
    LoopAParams,
    LoopBParams,
    WaveKVParams,
    backstepping_to_loop_b,
    chemical_to_loop_a,
    kv_wave_to_loop_a,
    make_disturbance,
)
from .solvers import Grid, Trajectory, fd_reference, picard_solve, simulate_loop_a, simulate_loop_b

__version__ = "0.1.0"
