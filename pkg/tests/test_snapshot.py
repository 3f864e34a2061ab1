import numpy as np
import pytest

from adaptchi import mps as M
from adaptchi.errors import SnapshotFormatError


def test_round_trip(tmp_path):
    psi = M.random_mps(6, 2, 5, seed=9)
    path = tmp_path / "state.achi"
    M.save(psi, path)
    back = M.load(path)
    assert back.center == psi.center
    for a, b in zip(psi.tensors, back.tensors):
        np.testing.assert_array_equal(a, b)


def test_header_layout():
    blob = M.dumps(M.neel_state(2))
    assert blob[:4] == b"ACHI"
    # header 20 bytes, two dim pairs, two 1x2x1 complex tensors
    assert len(blob) == 20 + 2 * 8 + 2 * 2 * 16


def test_center_none_round_trip():
    psi = M.MatrixProductState(M.neel_state(3).tensors, None)
    assert M.loads(M.dumps(psi)).center is None


@pytest.mark.parametrize("mutate", [
    lambda b: b"NOPE" + b[4:],
    lambda b: b[:-3],
    lambda b: b + b"\x00",
    lambda b: b[:4] + (7).to_bytes(4, "little") + b[8:],
])
def test_corrupt_inputs(mutate):
    with pytest.raises(SnapshotFormatError):
        M.loads(mutate(M.dumps(M.random_mps(3, 2, 2, seed=0))))


def test_version_message():
    blob = M.dumps(M.neel_state(2))
    with pytest.raises(SnapshotFormatError, match="version"):
        M.loads(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
