"""Pure-Python (numpy) transient integration kernel.

Reference implementation of the fixed-step RK4 node integrator plus the
per-step inventory/relief-valve update. The compiled Cython kernel in
``_kernel.pyx`` implements the same contract; ``cryoloop.kernel`` picks one at
import time.

Node ODE (constant within a chunk: inflow weights, external powers):

    C_i(T) dT_i/dt = sum_j w_ij (T_j - T_i) + q_ext_i
                     + q_passive_i * taper(T_i) + g_amb_i (T_amb - T_i)
                     - cooler_i(T_i)

with C_i(T) = cap300_i * debye_scale(T_i) + gas_cap_coef_i / T_i.

After each RK4 step every pressure zone is updated: P = M R_s / sum(V_i/T_i),
and mass is vented down to the reseat pressure whenever P exceeds the set
pressure.

Returns -1 on success, or the index of the first node whose temperature went
non-finite or non-positive.
"""

import numpy as np

IMPLEMENTATION = "python"


def _curve_eval(t, ptr, ct, cw, row):
    lo, hi = ptr[row], ptr[row + 1]
    if t <= ct[lo]:
        return cw[lo] if t == ct[lo] else 0.0
    if t >= ct[hi - 1]:
        slope = (cw[hi - 1] - cw[hi - 2]) / (ct[hi - 1] - ct[hi - 2])
        return cw[hi - 1] + slope * (t - ct[hi - 1])
    j = lo + 1
    while ct[j] < t:
        j += 1
    f = (t - ct[j - 1]) / (ct[j] - ct[j - 1])
    return cw[j - 1] + f * (cw[j] - cw[j - 1])


def advance(
    temps,
    zone_mass,
    zone_vented,
    n_steps,
    dt,
    in_matrix,
    w_out,
    q_ext,
    q_passive,
    g_amb,
    cap300,
    debye_on,
    debye_theta,
    debye_floor,
    cool_idx,
    curve_ptr,
    curve_t,
    curve_w,
    gas_cap_coef,
    vol,
    zone_of,
    zone_set_p,
    zone_reseat_p,
    r_specific,
    t_amb,
    taper_width,
):
    n = temps.shape[0]
    nz = zone_mass.shape[0]
    cooler_nodes = np.nonzero(cool_idx >= 0)[0]
    zone_masks = [zone_of == z for z in range(nz)]
    zone_has_vol = [vol[m].sum() > 0.0 for m in zone_masks]

    def rhs(t):
        taper = np.clip((t_amb - t) / taper_width, 0.0, 1.0)
        power = (
            in_matrix @ t
            - w_out * t
            + q_ext
            + q_passive * taper
            + g_amb * (t_amb - t)
        )
        for i in cooler_nodes:
            power[i] -= _curve_eval(t[i], curve_ptr, curve_t, curve_w, cool_idx[i])
        if debye_on:
            scale = np.clip((t / debye_theta) ** 3, debye_floor, 1.0)
        else:
            scale = 1.0
        cap = cap300 * scale + gas_cap_coef / t
        return power / cap

    half = 0.5 * dt
    sixth = dt / 6.0
    for _ in range(n_steps):
        t0 = temps
        k1 = rhs(t0)
        k2 = rhs(t0 + half * k1)
        k3 = rhs(t0 + half * k2)
        k4 = rhs(t0 + dt * k3)
        temps += sixth * (k1 + 2.0 * (k2 + k3) + k4)

        if not np.all(np.isfinite(temps)) or np.any(temps <= 0.0):
            bad = np.nonzero(~np.isfinite(temps) | (temps <= 0.0))[0]
            return int(bad[0])

        for z in range(nz):
            if not zone_has_vol[z] or zone_mass[z] <= 0.0:
                continue
            mask = zone_masks[z]
            s = float(np.sum(vol[mask] / temps[mask]))
            pressure = zone_mass[z] * r_specific / s
            if pressure > zone_set_p[z]:
                new_mass = zone_set_p[z] * s / r_specific
                zone_vented[z] += zone_mass[z] - new_mass
                zone_mass[z] = new_mass
    return -1
