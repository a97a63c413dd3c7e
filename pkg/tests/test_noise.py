import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from shelab.errors import InputError
from shelab.noise import (NoiseBatch, coarsen, dump_noise, load_noise, sample_noise, split_at,
                          standard_normals, philox_key)


def test_cell_variance_large_grid():
    w = sample_noise(1000, 1000, 0.5, seed=3)
    v = np.mean(w.increments ** 2)
    target = w.dt * w.dx
    assert abs(v / target - 1) < 5 / np.sqrt(1e6 / 2)


def test_same_key_same_noise_and_streams_differ():
    a = sample_noise(16, 8, 1.0, 5, 2)
    assert a == sample_noise(16, 8, 1.0, 5, 2)
    assert not np.array_equal(a.increments, sample_noise(16, 8, 1.0, 5, 3).increments)
    assert not np.array_equal(a.increments, sample_noise(16, 8, 1.0, 6, 2).increments)


def test_total_mass_is_gaussian_with_variance_T():
    T = 0.5
    batch = NoiseBatch.from_seeds(8, 8, T, 17, range(10_000))
    total = batch.rows(0, 8).sum(axis=(1, 2)) / np.sqrt(T)
    assert stats.kstest(total, "norm").pvalue > 1e-3


def test_stream_independence():
    a = sample_noise(1000, 1000, 1.0, 9, 0).increments.ravel()
    b = sample_noise(1000, 1000, 1.0, 9, 1).increments.ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 5 / np.sqrt(1e6)


@given(st.integers(0, 2 ** 40), st.integers(0, 50), st.integers(0, 32), st.integers(0, 32))
def test_sub_blocks_regenerate_bit_exactly(seed, stream, k0, k1):
    k0, k1 = min(k0, k1), max(k0, k1)
    b = NoiseBatch.from_seeds(32, 6, 1.0, seed, [stream])
    assert np.array_equal(b.rows(k0, k1), b.rows(0, 32)[:, k0:k1])


def test_standard_normals_offsets_consistent():
    key = philox_key(1, 2)
    full = standard_normals(key, 0, 40)
    for start in (1, 3, 4, 7, 13):
        assert np.array_equal(standard_normals(key, start, 10), full[start:start + 10])


def test_coarsen_identity_and_associativity():
    w = sample_noise(32, 16, 1.0, 1)
    assert coarsen(w, 1, 1) == w
    a = coarsen(coarsen(w, 2, 1), 2, 1).increments
    b = coarsen(w, 4, 1).increments
    assert np.allclose(a, b, rtol=0, atol=1e-15)
    with pytest.raises(InputError):
        coarsen(w, 3, 1)
    with pytest.raises(InputError):
        NoiseBatch.from_seeds(32, 16, 1.0, 1, [0]).coarsen(1, 5)


def test_batch_coarsening_is_the_block_sum_of_the_fine_grid():
    fine = NoiseBatch.from_seeds(64, 32, 1.0, 4, [0, 1])
    coarse = fine.coarsen(4, 2)
    for i in range(2):
        assert np.allclose(coarse.rows(0, 16)[i], coarsen(fine.grid(i), 4, 2).increments, atol=1e-15)


def test_coarsened_cell_variance_and_law():
    w = sample_noise(2000, 500, 1.0, 12)
    c = coarsen(w, 2, 4)
    v = c.increments.ravel()
    target = 8 * w.dt * w.dx
    assert abs(np.mean(v ** 2) / target - 1) < 5 * np.sqrt(2 / v.size)
    direct = sample_noise(1000, 125, 1.0, 99).increments.ravel()
    assert stats.ks_2samp(v / np.sqrt(target), direct / np.sqrt(target)).pvalue > 1e-3


def test_split_at_keeps_past_and_replaces_future():
    w = sample_noise(32, 8, 1.0, 7, 3)
    s = w.dt * 10
    f = split_at(w, s, 1234)
    assert np.array_equal(f.increments[:10], w.increments[:10])
    assert not np.any(f.increments[10:] == w.increments[10:])
    assert split_at(w, 1.0, 5) == w
    fresh = split_at(w, 0.0, 5).increments
    assert not np.any(fresh == w.increments)
    with pytest.raises(InputError):
        split_at(w, w.dt * 0.5, 1)


def test_batch_split_matches_grid_split():
    b = NoiseBatch.from_seeds(32, 8, 1.0, 7, [3])
    s = 12 * b.dt
    assert np.array_equal(b.split_at(s, 99).rows(0, 32)[0], split_at(b.grid(0), s, 99).increments)


def test_future_average_is_centred():
    m = 1000
    b = NoiseBatch.from_seeds(16, 8, 1.0, 21, [0]).repeat(m)
    s = 8 * b.dt
    fut = b.split_at(s, np.arange(m) + 500)
    rows = fut.rows(0, 16)
    assert np.all(rows[:, :8] == rows[0, :8])
    totals = rows[:, 8:].sum(axis=(1, 2))
    se = totals.std(ddof=1) / np.sqrt(m)
    assert abs(totals.mean()) < 5 * se


def test_select_and_repeat_layout():
    b = NoiseBatch.from_seeds(8, 4, 1.0, 1, [5, 6])
    r = b.repeat(3)
    assert r.n_streams == 6
    assert np.array_equal(r.rows(0, 8)[4], b.rows(0, 8)[1])
    assert np.array_equal(b.select([1]).rows(0, 8)[0], b.rows(0, 8)[1])


def test_invalid_sizes():
    with pytest.raises(InputError):
        sample_noise(0, 4, 1.0, 1)
    with pytest.raises(InputError):
        sample_noise(4, 4, 1.5, 1)
    with pytest.raises(InputError):
        NoiseBatch.from_seeds(4, 4, 1.0, 1, [0]).rows(2, 9)


def test_binary_dump_round_trip(tmp_path):
    w = sample_noise(12, 6, 0.25, 2 ** 40 + 3, 17)
    p = tmp_path / "w.bin"
    dump_noise(p, w)
    back = load_noise(p)
    assert back == w
    raw = p.read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(InputError):
        load_noise(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(InputError):
        load_noise(tmp_path / "short.bin")
