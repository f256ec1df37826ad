"""sqrt(x) on (0, 1): sinc interpolation after the log map vs a uniform cubic spline.

Needs scipy for the spline.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from sinckan import bases

f = np.sqrt
N = 64
h = bases.optimal_step(np.pi / 2, 0.5, N)
x = np.linspace(0.001, 0.999, 4001)

sinc = np.asarray(bases.sinc_approx_interval(f, 0.0, 1.0, N, h, x))
knots = np.linspace(0.0, 1.0, 2 * N + 1)
spline = CubicSpline(knots, f(knots))(x)

print(f"h = {h:.4f}")
print(f"sinc   sup error {np.max(np.abs(sinc - f(x))):.3e}")
print(f"spline sup error {np.max(np.abs(spline - f(x))):.3e}")
