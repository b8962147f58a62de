import numpy as np
import pytest

from rootembed import (ProbabilityMeasure, SimConfig, build_grid, extract_barrier, simulate_chain,
                       simulate_hitting, solve_vi)
from rootembed import backend, rng
from rootembed.barrier import exit_barrier, point_barrier

from conftest import D0, D1, PM1, SIGMA1

needs_compiled = pytest.mark.skipif(not backend.compiled_available(),
                                    reason="compiled kernels not built")

# published known-answer vectors for Philox4x64-10
KAT = [
    ((0, 0, 0, 0), (0, 0),
     (0x16554d9eca36314c, 0xdb20fe9d672d0fdc, 0xd7e772cee186176b, 0x7e68b68aec7ba23b)),
    ((2**64 - 1,) * 4, (2**64 - 1,) * 2,
     (0x87b092c3013fe90b, 0x438c3c67be8d0224, 0x9cc7d7c69cd777b6, 0xa09caebf594f0ba0)),
    ((0x243f6a8885a308d3, 0x13198a2e03707344, 0xa4093822299f31d0, 0x082efa98ec4e6c89),
     (0x452821e638d01377, 0xbe5466cf34e90c6c),
     (0xa528f45403e61d95, 0x38c72dbd566e9788, 0xa5a1610e72fd18b5, 0x57bd43b5e52b7fe6)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = rng.philox4x64(*(np.uint64(c) for c in ctr), *key)
    assert tuple(int(w[0]) for w in out) == expected


@needs_compiled
@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_compiled_philox_known_answers(ctr, key, expected):
    assert tuple(backend.get("compiled").philox_block(*ctr, *key)) == expected


def test_normals_look_normal():
    z = rng.path_normals(3, 17, 200_000)
    assert abs(z.mean()) < 3 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    assert abs(np.mean(z ** 4) - 3) < 0.1


def test_path_normals_match_blocks():
    z = rng.path_normals(5, 9, 10)
    blocks = np.concatenate([rng.normal_block(5, b, np.array([9]))[0] for b in range(3)])
    assert np.array_equal(z, blocks[:10])


def test_uniform_streams_are_distinct():
    a = rng.philox_uniforms(1, 1, 100)
    b = rng.philox_uniforms(1, 2, 100)
    assert not np.array_equal(a, b)
    assert np.array_equal(rng.philox_uniforms(1, 1, 50, start=50), a[50:])
    with pytest.raises(ValueError):
        rng.philox_uniforms(1, 0, 10)


def test_forced_python_backend(monkeypatch):
    assert backend.get("python") is backend._pykernels
    with pytest.raises(ValueError):
        backend.get("fortran")


@needs_compiled
@pytest.mark.parametrize("nu,mu,C", [(D0, D1, 1.0), (D0, PM1, 0.0), (PM1, D0, 1.0)])
def test_solver_backends_bitwise_equal(nu, mu, C):
    g = build_grid(nu, mu, SIGMA1, 0.5, dx=0.05)
    a = solve_vi(nu, mu, C, SIGMA1, g, backend_name="compiled")
    b = solve_vi(nu, mu, C, SIGMA1, g, backend_name="python")
    assert np.array_equal(a.frames, b.frames)
    assert np.array_equal(a.contact_step, b.contact_step)


@needs_compiled
def test_simulator_backends_agree():
    sigma = type(SIGMA1).table([-1.0, 0.0, 1.0], [0.8, 1.2, 0.9], K=2.0)
    nu = ProbabilityMeasure.uniform(-0.5, 0.5)
    mu = ProbabilityMeasure.uniform(-1.5, 1.5)
    g = build_grid(nu, mu, sigma, 1.0, dx=0.05)
    b = extract_barrier(solve_vi(nu, mu, 0.0, sigma, g), warn=False)
    cfg = SimConfig(300, 2e-3, 1.5, 7, (0.5, 1.5), record_unstopped=True, occupation=True)
    out = [simulate_hitting(nu, sigma, b, cfg, backend_name=k) for k in ("compiled", "python")]
    c, p = out
    assert np.array_equal(c.tau, p.tau)
    assert np.array_equal(c.censored, p.censored)
    assert np.allclose(c.x_tau, p.x_tau, rtol=0, atol=1e-12)
    assert np.allclose(c.checkpoints, p.checkpoints, rtol=0, atol=1e-12)
    assert np.allclose(c.free_checkpoints, p.free_checkpoints, rtol=0, atol=1e-12)
    assert np.allclose(c.occupation, p.occupation, rtol=0, atol=1e-9)


@needs_compiled
def test_chain_backends_agree():
    n = 201
    barriers = [exit_barrier(-5.0, 0.05, n, -1.0, 1.0), point_barrier(-5.0, 0.05, n, 0.0)]
    cfg = SimConfig(100, 2e-3, 2.0, 8, (1.0, 2.0))
    c, p = (simulate_chain(D0, SIGMA1, barriers, cfg, backend_name=k, allow_all_censored=True)
            for k in ("compiled", "python"))
    assert np.array_equal(c.tau, p.tau)
    assert np.allclose(c.x_tau, p.x_tau, rtol=0, atol=1e-12)


@needs_compiled
def test_python_backend_batches_do_not_matter(ui_case):
    cfg = SimConfig(120, 2e-3, 1.0, 3, (1.0,), n_batches=5)
    a = simulate_hitting(D0, SIGMA1, ui_case.barrier, cfg, backend_name="python")
    b = simulate_hitting(D0, SIGMA1, ui_case.barrier, cfg, backend_name="compiled")
    assert np.array_equal(a.tau, b.tau)
