"""Numba kernels for the hot loops: model flows and collision checks.

Everything here mirrors a pure-Python reference implementation elsewhere in
the package; the test suite asserts agreement.  Keep the arithmetic order
identical to the reference code when editing.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def cart_pole_flow(state, control, duration, substep,
                   mass_cart, mass_pole, inertia, length, gravity):
    """RK4 flow of the cart-pole, sampled at the integration substeps.

    The duration is split into ``ceil(duration/substep)`` equal steps.
    Returns an ``(n+1, 4)`` array of states including both endpoints.
    """
    ml = mass_pole * length
    iml = inertia + mass_pole * length * length
    mm = mass_cart + mass_pole
    f = control[0]
    n = max(1, int(np.ceil(duration / substep - 1e-12)))
    dt = duration / n
    out = np.empty((n + 1, 4))
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    out[0, 0] = s0; out[0, 1] = s1; out[0, 2] = s2; out[0, 3] = s3
    for i in range(n):
        c = np.cos(s2); si = np.sin(s2)
        den = mm * iml - (ml * c) ** 2
        a1 = s1
        b1 = (iml * (f + ml * s3 * s3 * si) + ml * ml * c * si * gravity) / den
        c1 = s3
        d1 = ((-ml * c) * (f + ml * s3 * s3 * si) + mm * (-mass_pole * gravity * length * si)) / den

        t1 = s1 + 0.5 * dt * b1; t2 = s2 + 0.5 * dt * c1; t3 = s3 + 0.5 * dt * d1
        c = np.cos(t2); si = np.sin(t2)
        den = mm * iml - (ml * c) ** 2
        a2 = t1
        b2 = (iml * (f + ml * t3 * t3 * si) + ml * ml * c * si * gravity) / den
        c2 = t3
        d2 = ((-ml * c) * (f + ml * t3 * t3 * si) + mm * (-mass_pole * gravity * length * si)) / den

        t1 = s1 + 0.5 * dt * b2; t2 = s2 + 0.5 * dt * c2; t3 = s3 + 0.5 * dt * d2
        c = np.cos(t2); si = np.sin(t2)
        den = mm * iml - (ml * c) ** 2
        a3 = t1
        b3 = (iml * (f + ml * t3 * t3 * si) + ml * ml * c * si * gravity) / den
        c3 = t3
        d3 = ((-ml * c) * (f + ml * t3 * t3 * si) + mm * (-mass_pole * gravity * length * si)) / den

        t1 = s1 + dt * b3; t2 = s2 + dt * c3; t3 = s3 + dt * d3
        c = np.cos(t2); si = np.sin(t2)
        den = mm * iml - (ml * c) ** 2
        a4 = t1
        b4 = (iml * (f + ml * t3 * t3 * si) + ml * ml * c * si * gravity) / den
        c4 = t3
        d4 = ((-ml * c) * (f + ml * t3 * t3 * si) + mm * (-mass_pole * gravity * length * si)) / den

        s0 = s0 + dt * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
        s1 = s1 + dt * (b1 + 2.0 * b2 + 2.0 * b3 + b4) / 6.0
        s2 = s2 + dt * (c1 + 2.0 * c2 + 2.0 * c3 + c4) / 6.0
        s3 = s3 + dt * (d1 + 2.0 * d2 + 2.0 * d3 + d4) / 6.0
        out[i + 1, 0] = s0; out[i + 1, 1] = s1; out[i + 1, 2] = s2; out[i + 1, 3] = s3
    return out


@njit(cache=True)
def diagonal_linear_flow(state, control, duration, substep, drift, gain):
    """RK4 flow of the decoupled linear system xdot_i = drift*x_i + gain*u_i."""
    n = max(1, int(np.ceil(duration / substep - 1e-12)))
    dt = duration / n
    dim = state.shape[0]
    out = np.empty((n + 1, dim))
    s = state.copy()
    out[0] = s
    for i in range(n):
        for d in range(dim):
            x = s[d]
            u = gain * control[d]
            k1 = drift * x + u
            k2 = drift * (x + 0.5 * dt * k1) + u
            k3 = drift * (x + 0.5 * dt * k2) + u
            k4 = drift * (x + dt * k3) + u
            s[d] = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        out[i + 1] = s
    return out


@njit(cache=True)
def box_collision_check(points, bounds, angular_mask, obstacles, proj_dims):
    """True iff every point is in bounds and outside all obstacle boxes.

    ``points`` is (n, dim); ``bounds`` (dim, 2); ``angular_mask`` (dim,)
    uint8; ``obstacles`` (n_obs, n_proj, 2); ``proj_dims`` (n_proj,) int64.
    Angular dimensions skip the bounds test and wrap for obstacle tests.
    """
    n, dim = points.shape
    for i in range(n):
        for d in range(dim):
            if angular_mask[d]:
                continue
            v = points[i, d]
            if v < bounds[d, 0] or v > bounds[d, 1]:
                return False
        for o in range(obstacles.shape[0]):
            hit = True
            for k in range(proj_dims.shape[0]):
                d = proj_dims[k]
                v = points[i, d]
                if angular_mask[d]:
                    v = v % TWO_PI
                if v < obstacles[o, k, 0] or v > obstacles[o, k, 1]:
                    hit = False
                    break
            if hit:
                return False
    return True
