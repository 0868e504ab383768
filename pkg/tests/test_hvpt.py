import io
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from visprefix import hvpt
from visprefix.errors import FormatError


@given(arrays(np.float32, array_shapes(min_dims=1, max_dims=4, max_side=5),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_round_trip(a):
    back, end = hvpt.decode(hvpt.encode(a))
    assert back.dtype == np.float32 and np.array_equal(back, a)
    assert end == 6 + 4 * a.ndim + 4 * a.size


def test_layout_is_little_endian():
    blob = hvpt.encode(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
    assert blob[:4] == b"HVPT" and blob[4] == 1 and blob[5] == 2
    assert struct.unpack("<2I", blob[6:14]) == (1, 3)
    assert struct.unpack("<3f", blob[14:]) == (1.0, 2.0, 3.0)


def test_records_back_to_back():
    f = io.BytesIO()
    arrs = [np.ones((2, 2)), np.arange(3.0)]
    offs = [0]
    for a in arrs:
        offs.append(offs[-1] + hvpt.write_tensor(f, a))
    buf = f.getvalue()
    assert [x.tolist() for x in hvpt.read_all(buf)] == [a.tolist() for a in arrs]
    assert np.array_equal(hvpt.decode(buf, offs[1])[0], arrs[1])


@pytest.mark.parametrize("mutate, needle", [
    (lambda b: b"XXXX" + b[4:], "magic at offset 0"),
    (lambda b: b[:4] + bytes([2]) + b[5:], "version 2 at offset 0"),
    (lambda b: b[:-3], "truncated HVPT payload"),
    (lambda b: b[:7], "truncated HVPT dims"),
])
def test_corruption_is_a_format_error(mutate, needle):
    blob = mutate(hvpt.encode(np.ones((2, 3))))
    with pytest.raises(FormatError, match=needle):
        hvpt.decode(blob)
