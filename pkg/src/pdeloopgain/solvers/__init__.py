"""Time integrators for both loops: spectral (exact exponential steps), FD and Picard."""
from .fd import fd_reference
from .grid import Grid, Trajectory, read_summary_csv
from .loop_a import simulate_loop_a
from .loop_b import simulate_loop_b
from .picard import PicardDivergence, picard_solve

__all__ = ["Grid", "Trajectory", "read_summary_csv", "simulate_loop_a", "simulate_loop_b",
           "fd_reference", "picard_solve", "PicardDivergence"]
