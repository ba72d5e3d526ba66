# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled transient integration kernel.

Same contract as ``_kernel_py.advance``; see that module for the equations.
"""

import numpy as np

cimport numpy as cnp

IMPLEMENTATION = "cython"


cdef double _curve_eval(double t, int[::1] ptr, double[::1] ct, double[::1] cw,
                        int row) noexcept nogil:
    cdef int lo = ptr[row]
    cdef int hi = ptr[row + 1]
    cdef int j
    cdef double slope, f
    if t <= ct[lo]:
        if t == ct[lo]:
            return cw[lo]
        return 0.0
    if t >= ct[hi - 1]:
        slope = (cw[hi - 1] - cw[hi - 2]) / (ct[hi - 1] - ct[hi - 2])
        return cw[hi - 1] + slope * (t - ct[hi - 1])
    j = lo + 1
    while ct[j] < t:
        j += 1
    f = (t - ct[j - 1]) / (ct[j] - ct[j - 1])
    return cw[j - 1] + f * (cw[j] - cw[j - 1])


cdef void _rhs(double[::1] t, double[::1] out,
               double[:, ::1] in_matrix, double[::1] w_out,
               double[::1] q_ext, double[::1] q_passive, double[::1] g_amb,
               double[::1] cap300, bint debye_on, double debye_theta,
               double debye_floor, int[::1] cool_idx, int[::1] curve_ptr,
               double[::1] curve_t, double[::1] curve_w,
               double[::1] gas_cap_coef, double t_amb,
               double taper_width) noexcept nogil:
    cdef int n = t.shape[0]
    cdef int i, j
    cdef double power, taper, scale, cap, adv
    for i in range(n):
        adv = 0.0
        for j in range(n):
            adv += in_matrix[i, j] * t[j]
        taper = (t_amb - t[i]) / taper_width
        if taper > 1.0:
            taper = 1.0
        elif taper < 0.0:
            taper = 0.0
        power = adv - w_out[i] * t[i] + q_ext[i] + q_passive[i] * taper \
            + g_amb[i] * (t_amb - t[i])
        if cool_idx[i] >= 0:
            power -= _curve_eval(t[i], curve_ptr, curve_t, curve_w, cool_idx[i])
        if debye_on:
            scale = (t[i] / debye_theta)
            scale = scale * scale * scale
            if scale > 1.0:
                scale = 1.0
            elif scale < debye_floor:
                scale = debye_floor
        else:
            scale = 1.0
        cap = cap300[i] * scale + gas_cap_coef[i] / t[i]
        out[i] = power / cap


def advance(
    cnp.ndarray[cnp.float64_t, ndim=1] temps,
    cnp.ndarray[cnp.float64_t, ndim=1] zone_mass,
    cnp.ndarray[cnp.float64_t, ndim=1] zone_vented,
    int n_steps,
    double dt,
    cnp.ndarray[cnp.float64_t, ndim=2] in_matrix,
    cnp.ndarray[cnp.float64_t, ndim=1] w_out,
    cnp.ndarray[cnp.float64_t, ndim=1] q_ext,
    cnp.ndarray[cnp.float64_t, ndim=1] q_passive,
    cnp.ndarray[cnp.float64_t, ndim=1] g_amb,
    cnp.ndarray[cnp.float64_t, ndim=1] cap300,
    bint debye_on,
    double debye_theta,
    double debye_floor,
    cnp.ndarray[cnp.int32_t, ndim=1] cool_idx,
    cnp.ndarray[cnp.int32_t, ndim=1] curve_ptr,
    cnp.ndarray[cnp.float64_t, ndim=1] curve_t,
    cnp.ndarray[cnp.float64_t, ndim=1] curve_w,
    cnp.ndarray[cnp.float64_t, ndim=1] gas_cap_coef,
    cnp.ndarray[cnp.float64_t, ndim=1] vol,
    cnp.ndarray[cnp.int32_t, ndim=1] zone_of,
    cnp.ndarray[cnp.float64_t, ndim=1] zone_set_p,
    cnp.ndarray[cnp.float64_t, ndim=1] zone_reseat_p,
    double r_specific,
    double t_amb,
    double taper_width,
):
    cdef int n = temps.shape[0]
    cdef int nz = zone_mass.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k1 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k2 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k3 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k4 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] stage = np.empty(n)
    cdef double[::1] t_v = temps
    cdef double[::1] k1_v = k1, k2_v = k2, k3_v = k3, k4_v = k4, stage_v = stage
    cdef double[:, ::1] a_v = in_matrix
    cdef double[::1] wout_v = w_out, qe_v = q_ext, qp_v = q_passive, ga_v = g_amb
    cdef double[::1] c300_v = cap300, gcc_v = gas_cap_coef, vol_v = vol
    cdef int[::1] ci_v = cool_idx, cp_v = curve_ptr
    cdef double[::1] ct_v = curve_t, cw_v = curve_w
    cdef int[::1] zof_v = zone_of
    cdef double[::1] zm_v = zone_mass, zv_v = zone_vented
    cdef double[::1] zsp_v = zone_set_p, zrp_v = zone_reseat_p
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    cdef int step, i, z
    cdef double s, pressure, new_mass
    cdef bint bad
    cdef int fail = -1

    with nogil:
        for step in range(n_steps):
            _rhs(t_v, k1_v, a_v, wout_v, qe_v, qp_v, ga_v, c300_v, debye_on,
                 debye_theta, debye_floor, ci_v, cp_v, ct_v, cw_v, gcc_v,
                 t_amb, taper_width)
            for i in range(n):
                stage_v[i] = t_v[i] + half * k1_v[i]
            _rhs(stage_v, k2_v, a_v, wout_v, qe_v, qp_v, ga_v, c300_v, debye_on,
                 debye_theta, debye_floor, ci_v, cp_v, ct_v, cw_v, gcc_v,
                 t_amb, taper_width)
            for i in range(n):
                stage_v[i] = t_v[i] + half * k2_v[i]
            _rhs(stage_v, k3_v, a_v, wout_v, qe_v, qp_v, ga_v, c300_v, debye_on,
                 debye_theta, debye_floor, ci_v, cp_v, ct_v, cw_v, gcc_v,
                 t_amb, taper_width)
            for i in range(n):
                stage_v[i] = t_v[i] + dt * k3_v[i]
            _rhs(stage_v, k4_v, a_v, wout_v, qe_v, qp_v, ga_v, c300_v, debye_on,
                 debye_theta, debye_floor, ci_v, cp_v, ct_v, cw_v, gcc_v,
                 t_amb, taper_width)
            bad = False
            for i in range(n):
                t_v[i] = t_v[i] + sixth * (k1_v[i] + 2.0 * (k2_v[i] + k3_v[i]) + k4_v[i])
                if not (t_v[i] > 0.0) or t_v[i] != t_v[i]:
                    bad = True
            if bad:
                for i in range(n):
                    if not (t_v[i] > 0.0) or t_v[i] != t_v[i]:
                        fail = i
                        break
                break

            for z in range(nz):
                if zm_v[z] <= 0.0:
                    continue
                s = 0.0
                for i in range(n):
                    if zof_v[i] == z:
                        s += vol_v[i] / t_v[i]
                if s <= 0.0:
                    continue
                pressure = zm_v[z] * r_specific / s
                if pressure > zsp_v[z]:
                    new_mass = zsp_v[z] * s / r_specific
                    zv_v[z] += zm_v[z] - new_mass
                    zm_v[z] = new_mass
    return fail
