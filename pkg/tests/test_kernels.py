import numpy as np
import pytest

from rdode import kernels


def _run(mod, u0, v0, nsteps, track=True):
    u, v = u0.copy(), v0.copy()
    du = np.empty(nsteps if track else 0)
    dv = np.empty(nsteps if track else 0)
    out = mod.fitzhugh_advance(u, v, 0.5, 0.05, 1.0, 0.011, 2.0, 1e-4, 1 / 24, 1 / 18, nsteps, u0, v0, du, dv, 1e8)
    return out, u, v, du, dv


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


def test_fitzhugh_kernels_bitwise_equal(rng):
    comp = kernels.compiled_backend()
    if comp is None:
        pytest.skip("compiled backend not built")
    u0 = rng.uniform(-0.2, 1.2, (24, 18))
    v0 = rng.uniform(-0.05, 0.05, (24, 18))
    a = _run(comp, u0, v0, 37)
    b = _run(kernels.python_backend, u0, v0, 37)
    assert a[0] == b[0] == (37, -1, -1)
    for x, y in zip(a[1:], b[1:]):
        assert np.array_equal(x, y)


def test_kernel_blowup_location(rng):
    for mod in filter(None, (kernels.compiled_backend(), kernels.python_backend)):
        u0 = np.zeros((6, 5))
        v0 = np.zeros((6, 5))
        v0[3, 2] = np.nan
        (done, i, j), *_ = _run(mod, u0, v0, 4)
        assert done == 0 and (i, j) != (-1, -1)


def test_kernel_odd_step_count_writes_back(rng):
    for mod in filter(None, (kernels.compiled_backend(), kernels.python_backend)):
        u0 = rng.uniform(0, 1, (5, 4))
        v0 = rng.uniform(-0.01, 0.01, (5, 4))
        _, u1, v1, _, _ = _run(mod, u0, v0, 1, track=False)
        _, u2, v2, _, _ = _run(mod, u0, v0, 2, track=False)
        assert not np.array_equal(u1, u0) and not np.array_equal(u2, u1)
