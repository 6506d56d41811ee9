"""Tests for chunked Monte Carlo and serialization helpers."""

import json

import numpy as np
import pytest

from imkit.const import MC_CHUNK_SIZE, THREADS_ENV
from imkit.inference.exceptions.im_exception import ConfigurationException
from imkit.inference.parallel import chunk_sizes, resolve_threads, run_chunked
from imkit.inference.serialization import dumps, format_float, read_column_csv, write_csv


def test_chunk_sizes():
    assert chunk_sizes(2 * MC_CHUNK_SIZE + 5) == [MC_CHUNK_SIZE, MC_CHUNK_SIZE, 5]
    assert chunk_sizes(0) == []


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigurationException):
        resolve_threads()
    with pytest.raises(ConfigurationException):
        resolve_threads(0)


def test_run_chunked_is_thread_invariant():
    def task(rng, size):
        return rng.standard_normal(size)

    total = 3 * MC_CHUNK_SIZE + 17
    one = np.concatenate(run_chunked(task, total, 5, threads=1))
    many = np.concatenate(run_chunked(task, total, 5, threads=4))
    assert one.size == total
    assert np.array_equal(one, many)


def test_float_formatting():
    assert float(format_float(0.1)) == 0.1
    assert format_float(float("inf")) == "inf"
    data = json.loads(dumps({"a": 1.0 / 3.0, "b": [2.5, float("nan")], "c": True}))
    assert data["a"] == 1.0 / 3.0
    assert data["b"] == [2.5, None]
    assert data["c"] is True


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "out" / "x.csv", ["x"], [[0.1], [2.0], [-3.5]])
    assert read_column_csv(path) == [0.1, 2.0, -3.5]
    path.write_text("x\n1.0\noops\n")
    with pytest.raises(ValueError):
        read_column_csv(path)
