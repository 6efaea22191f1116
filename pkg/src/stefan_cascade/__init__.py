"""Physical jumps of the one-phase Stefan problem with surface tension.

The jump of the solid region is computed from the arrival time ``w`` of a cascade that solves
``div(grad w / |grad w| (1 / |grad w| + gamma)) = -1 - u``. Modules:

* :mod:`.domain` grids, regions, fields and scenarios;
* :mod:`.closedform` exact solutions in the symmetric geometries;
* :mod:`.cascade1d` the fast ODE and the 1D arrival-time ODE;
* :mod:`.fronttrack` the 2D front-tracking solver with its energy ledger;
* :mod:`.eikonal` fast marching and characteristics;
* :mod:`.equilibrium` the particle-ensemble fixed point and excess energy;
* :mod:`.verify` certification reports;
* :mod:`.cli` the command-line entry point.
"""

from __future__ import annotations

from .kernels import BACKEND
from .closedform import jump_size_1d, solve_one_interface, solve_radial, solve_two_interface
from .domain import Grid1, Grid2, RegionSpec, ScenarioSpec
from .fronttrack import run

__all__ = [
    "BACKEND",
    "Grid1",
    "Grid2",
    "RegionSpec",
    "ScenarioSpec",
    "jump_size_1d",
    "run",
    "solve_one_interface",
    "solve_radial",
    "solve_two_interface",
]

__version__ = "0.1.0"
