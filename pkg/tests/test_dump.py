import struct

import numpy as np
import pytest

from ssfmbound import dump
from ssfmbound.engine import propagate
from ssfmbound.field import ChannelParams, SimulationGrid, generate_input


def test_header_layout_is_32_bytes():
    assert dump.HEADER.size == 32
    buf = dump.encode(np.zeros((2, 3, 4), dtype=complex), num_steps=7, flags=0)
    magic, L, K, flags, m = struct.unpack("<8sQQII", buf[:32])
    assert (magic, L, K, flags, m) == (b"SSFMDMP1", 4, 7, 0, 3)
    assert len(buf) == 32 + 2 * 3 * 4 * 16


def test_interleaved_little_endian_payload():
    f = np.array([[[1 + 2j, -3.5 + 0.25j]]])
    f = np.concatenate([f, f])  # two positions
    buf = dump.encode(f, num_steps=1, flags=0)
    vals = struct.unpack("<8d", buf[32:])
    assert vals[:4] == (1.0, 2.0, -3.5, 0.25)


@pytest.mark.parametrize("retain", [False, True])
def test_record_round_trip(retain, tmp_path):
    g = SimulationGrid(0.1, 0.1, 4, 8)
    p = ChannelParams(beta2=1.0, gamma=1.0, n_ase=0.5)
    e = generate_input("iid-gaussian", 2.0, g, seed=1, realizations=3)
    rec = propagate(e, p, g, seed=2, retain_trajectory=retain)
    path = tmp_path / "t.bin"
    dump.write_record(path, rec, g.num_steps)
    d = dump.read(path)
    assert d.num_samples == 8 and d.num_steps == 4
    assert d.positions == (list(range(5)) if retain else [0, 4])
    np.testing.assert_array_equal(d.fields[0], e.samples)
    np.testing.assert_array_equal(d.fields[-1], rec.output.samples)


def test_decode_rejects_corruption():
    buf = dump.encode(np.zeros((2, 1, 2), dtype=complex), 1, 0)
    with pytest.raises(dump.DumpFormatError):
        dump.decode(b"XXXXXXXX" + buf[8:])
    with pytest.raises(dump.DumpFormatError):
        dump.decode(buf[:-1])
    with pytest.raises(dump.DumpFormatError):
        dump.decode(buf[:10])
