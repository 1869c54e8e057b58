"""Halve tau and h together and watch the flows agree.

Three runs of the same shrinking disk, each with twice the cells and
half the time step of the previous one.  Consecutive levels are
compared by symmetric difference at fixed times; if the scheme is
converging, those gaps shrink roughly geometrically.  This is the
small-scale version of the refinement study the acceptance suite runs
at 512^2.
"""

import time

from gmcflow import Anisotropy, FlowConfig, GridSpec, MonotoneProfile
from gmcflow.flow import run_flow
from gmcflow.verify import refinement_convergence

profile = MonotoneProfile.power(1.0)
a = Anisotropy.euclidean(2)

levels = []
for cells, tau in ((64, 4e-3), (128, 2e-3), (256, 1e-3)):
    grid = GridSpec((cells, cells), (-1.0, -1.0), (1.0, 1.0))
    t0 = time.time()
    trace = run_flow(FlowConfig(tau=tau, horizon=0.016,
                                init={"shape": "ball", "center": [0.0, 0.0],
                                      "radius": 0.4}),
                     profile, None, a, grid)
    print("%3d^2  tau=%g  %2d steps  %.1fs"
          % (cells, tau, trace.steps, time.time() - t0))
    levels.append(trace)

print()
rep = refinement_convergence(levels)
for line in rep.json_lines():
    print(line)
print(rep.summary())
