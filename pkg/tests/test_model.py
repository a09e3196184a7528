import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bprlab.errors import ConfigError
from bprlab.model import InitSpec, ModelParams, init, load_checkpoint, save_checkpoint, score, score_all_items


def test_init_shapes_and_determinism():
    a = init(5, 7, 3, InitSpec(seed=4), use_bias=True)
    b = init(5, 7, 3, InitSpec(seed=4), use_bias=True)
    assert a.P.shape == (5, 3) and a.Q.shape == (7, 3) and a.item_bias.shape == (7,)
    assert_array_equal(a.P, b.P)
    assert_array_equal(a.item_bias, np.zeros(7))
    assert init(5, 7, 3, InitSpec(seed=4)).item_bias is None


def test_init_distribution_moments():
    p = init(2000, 2000, 16, InitSpec(std=0.1, seed=1))
    assert abs(p.P.mean()) < 2e-3
    assert_allclose(p.Q.std(), 0.1, rtol=0.02)
    u = init(2000, 10, 8, InitSpec("uniform", lo=-0.5, hi=0.25, seed=2))
    assert u.P.min() >= -0.5 and u.P.max() < 0.25


@pytest.mark.parametrize(
    "kwargs", [{"distribution": "uniform", "lo": 0.0, "hi": 0.0}, {"std": 0.0}, {"distribution": "cauchy"}]
)
def test_init_rejects_bad_spec(kwargs):
    with pytest.raises(ConfigError):
        InitSpec(**kwargs)


def test_init_rejects_zero_dim():
    with pytest.raises(ConfigError):
        init(3, 3, 0)


def test_score_formula_and_bounds(rng):
    params = ModelParams(rng.normal(size=(4, 3)), rng.normal(size=(6, 3)), rng.normal(size=6))
    assert score(params, 2, 5) == pytest.approx(params.item_bias[5] + params.P[2] @ params.Q[5])
    with pytest.raises(IndexError):
        score(params, 4, 0)
    with pytest.raises(IndexError):
        score(params, 0, -1)
    with pytest.raises(IndexError):
        score_all_items(params, 9)


def test_score_all_items_is_bit_identical_to_score(rng):
    params = ModelParams(rng.normal(size=(3, 17)), rng.normal(size=(40, 17)), rng.normal(size=40))
    for u in range(3):
        row = score_all_items(params, u)
        assert all(row[i] == score(params, u, i) for i in range(40))


def test_batched_scores_close_to_score(rng):
    params = ModelParams(rng.normal(size=(5, 4)), rng.normal(size=(9, 4)))
    s = params.scores(np.array([1, 3]))
    assert s.shape == (2, 9)
    assert_allclose(s[1], [score(params, 3, i) for i in range(9)], rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("bias", [True, False])
@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_checkpoint_roundtrip(tmp_path, rng, bias, dtype):
    params = ModelParams(
        rng.normal(size=(6, 5)).astype(dtype),
        rng.normal(size=(8, 5)).astype(dtype),
        rng.normal(size=8).astype(dtype) if bias else None,
    )
    path = save_checkpoint(params, tmp_path / "m.bin", {"note": "x"})
    back = load_checkpoint(path)
    assert back.P.dtype == dtype
    assert_array_equal(back.P, params.P)
    assert_array_equal(back.Q, params.Q)
    if bias:
        assert_array_equal(back.item_bias, params.item_bias)
    else:
        assert back.item_bias is None
    raw = path.read_bytes()
    assert raw[:4] == b"BPRM"
    assert (tmp_path / "m.bin.json").exists()


def test_checkpoint_rejects_garbage(tmp_path, rng):
    path = save_checkpoint(init(3, 3, 2), tmp_path / "m.bin")
    raw = path.read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-3])
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "t.bin")
    (tmp_path / "g.bin").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "g.bin")
