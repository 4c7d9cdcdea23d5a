"""Smoke tests for the extension module (run against the built _seq2d)."""

import json
import math

import numpy as np
import pytest

seq2d = pytest.importorskip("_seq2d")


def scalar_chain(gains):
    weights = [np.array([[g]], dtype=float) for g in gains]
    return seq2d.make_mlp_map(weights, [], "identity", False)


def test_iterate_scalar_chain():
    m = scalar_chain([2.0, 3.0, 5.0])
    states = seq2d.iterate(m, np.array([1.0]), 3)
    assert len(states) == 4
    assert states[3][-1] == pytest.approx(30.0, abs=1e-12)


def test_apply_matches_manual_step():
    m = scalar_chain([2.0, 3.0, 5.0])
    state = np.array([1.0, 0.0, 0.0, 0.0])
    out = seq2d.apply(m, state)
    assert out.tolist() == [0.0, 2.0, 0.0, 0.0]


def test_serialize_roundtrip():
    m = scalar_chain([2.0, 3.0, 5.0])
    text = seq2d.serialize(m)
    doc = json.loads(text)
    assert doc["partition"] == [1, 1, 1, 1]
    back = seq2d.deserialize(text)
    assert seq2d.serialize(back) == text


def test_fixed_point_and_impulse_classes():
    finite = scalar_chain([2.0, 3.0, 5.0])
    report = seq2d.find_fixed_point(finite, np.array([1.0]), 10, 1e-12)
    assert report["reached"] and report["at_iteration"] == 4
    assert seq2d.classify_impulse(finite, np.array([1.0]), 0, 1e-12)["class"] == "finite"

    weights = [np.array([[g]]) for g in (2.0, 3.0, 5.0)]
    infinite = seq2d.make_mlp_map(weights, [], "identity", True)
    assert seq2d.classify_impulse(infinite, np.array([1.0]), 0, 1e-12)["class"] == "infinite"


def test_sequential2d_flag():
    part = seq2d.BlockPartition([1, 1])
    m = seq2d.BlockMap(part)
    m.set_cell(0, 0, seq2d.Cell.affine(np.array([[1.0]])))
    m.set_cell(1, 0, seq2d.Cell.scaled_identity(1.0))
    assert not m.is_sequential2d()
    m.set_cell(1, 1, seq2d.Cell.scaled_identity(0.5))
    assert m.is_sequential2d()


def test_relu_affine_cell():
    part = seq2d.BlockPartition([1, 1])
    m = seq2d.BlockMap(part)
    m.set_cell(1, 0, seq2d.Cell.affine(np.array([[2.0]]), np.array([0.0]), "relu"))
    out = seq2d.apply(m, np.array([-3.0, 0.0]))
    assert out[1] == 0.0
    out = seq2d.apply(m, np.array([3.0, 0.0]))
    assert out[1] == 6.0
