"""The compiled kernel and the numpy fallback must agree."""

import numpy as np
import pytest

from cryoloop import _kernel_py
from cryoloop import kernel as active_kernel

try:
    from cryoloop import _kernel as compiled
except ImportError:
    compiled = None


def _random_problem(seed: int):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 16))
    temps = rng.uniform(25.0, 290.0, n)
    in_matrix = np.zeros((n, n))
    for i in range(1, n):
        in_matrix[i, int(rng.integers(0, i))] = rng.uniform(0.5, 15.0)
    in_matrix[0, n - 1] = rng.uniform(0.5, 15.0)  # close the loop
    w_out = in_matrix.sum(axis=1)
    cool_idx = np.full(n, -1, dtype=np.int32)
    cool_idx[1] = 0
    zone_of = np.zeros(n, dtype=np.int32)
    zone_of[n // 2:] = 1
    args = dict(
        n_steps=300,
        dt=0.05,
        in_matrix=in_matrix,
        w_out=w_out,
        q_ext=rng.uniform(0.0, 30.0, n),
        q_passive=rng.uniform(0.0, 8.0, n),
        g_amb=rng.uniform(0.0, 0.01, n),
        cap300=rng.uniform(150.0, 2500.0, n),
        debye_on=bool(rng.integers(0, 2)),
        debye_theta=85.0,
        debye_floor=0.1,
        cool_idx=cool_idx,
        curve_ptr=np.array([0, 3], dtype=np.int32),
        curve_t=np.array([20.0, 80.0, 150.0]),
        curve_w=np.array([0.0, 350.0, 800.0]),
        gas_cap_coef=rng.uniform(1.0, 60.0, n),
        vol=rng.uniform(1e-5, 4e-4, n),
        zone_of=zone_of,
        zone_set_p=np.array([23e5, 23e5]),
        zone_reseat_p=np.array([22.5e5, 22.5e5]),
        r_specific=2077.0,
        t_amb=295.0,
        taper_width=10.0,
    )
    masses = rng.uniform(1e-3, 2e-2, 2)
    return temps, masses, args


def _run(module, temps, masses, args):
    t = temps.copy()
    m = masses.copy()
    v = np.zeros_like(m)
    status = module.advance(
        t, m, v, args["n_steps"], args["dt"], args["in_matrix"].copy(),
        args["w_out"].copy(), args["q_ext"], args["q_passive"], args["g_amb"],
        args["cap300"], args["debye_on"], args["debye_theta"], args["debye_floor"],
        args["cool_idx"], args["curve_ptr"], args["curve_t"], args["curve_w"],
        args["gas_cap_coef"], args["vol"], args["zone_of"], args["zone_set_p"],
        args["zone_reseat_p"], args["r_specific"], args["t_amb"], args["taper_width"],
    )
    return status, t, m, v


@pytest.mark.skipif(compiled is None, reason="compiled kernel not built")
@pytest.mark.parametrize("seed", range(8))
def test_implementations_agree(seed):
    temps, masses, args = _random_problem(seed)
    s_py, t_py, m_py, v_py = _run(_kernel_py, temps, masses, args)
    s_cy, t_cy, m_cy, v_cy = _run(compiled, temps, masses, args)
    assert s_py == s_cy
    assert np.allclose(t_py, t_cy, rtol=1e-10, atol=1e-10)
    assert np.allclose(m_py, m_cy, rtol=1e-12, atol=0.0)
    assert np.allclose(v_py, v_cy, rtol=1e-12, atol=1e-18)


def test_failure_status_names_node():
    temps, masses, args = _random_problem(3)
    args = dict(args)
    args["cap300"] = np.full_like(args["cap300"], 1e-8)  # force instability
    args["gas_cap_coef"] = np.zeros_like(args["gas_cap_coef"])
    status, _, _, _ = _run(_kernel_py, temps, masses, args)
    assert status >= 0


def test_active_kernel_is_selected():
    assert active_kernel.IMPLEMENTATION in ("cython", "python")
    if compiled is not None:
        assert active_kernel.IMPLEMENTATION == "cython"
