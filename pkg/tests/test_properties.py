import math

import numpy as np
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from eikoplan.distance import SpeedModelParams, clip_speed
from eikoplan.field import TimeField
from eikoplan.fmm import GridSpec, fmm_solve
from eikoplan.scene import cspace_for, triangle_robot
from eikoplan.training import monotonic_loss, optimal_loss

SE2 = cspace_for(triangle_robot())
FIELD = TimeField(SE2, width=32, seed=0, dtype=torch.float64)
pos = st.floats(0.0, 5.0, allow_nan=False)
coord = st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-math.pi, math.pi))


@given(pos, pos, pos)
def test_hinges_nonnegative_and_zero_iff_satisfied(a, b, c):
    m = monotonic_loss(a, b, c).item()
    o = optimal_loss(a, b, c).item()
    assert m >= 0 and o >= 0
    assert (m == 0) == (b <= a and c <= a)
    assert (o == 0) == (a <= b + c)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_clip_speed_monotone_and_bounded(d1, d2):
    p = SpeedModelParams()
    lo, hi = sorted((d1, d2))
    assert clip_speed(lo, p) <= clip_speed(hi, p)
    assert p.s_min <= clip_speed(d1, p) <= p.s_const


@settings(max_examples=50, deadline=None)
@given(coord, coord)
def test_field_symmetric_positive(a, b):
    a, b = np.array(a), np.array(b)
    t_ab, t_ba = FIELD.times(a, b), FIELD.times(b, a)
    assert t_ab == t_ba
    if SE2.distance(a, b) > 0:
        assert t_ab > 0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.2, 3.0))
def test_fmm_order_and_scaling(x, y, speed):
    spec = GridSpec((24, 24), (1 / 24, 1 / 24), (1 / 48, 1 / 48), (False, False))
    tg = fmm_solve(spec, speed, (x, y), record_order=True)
    assert np.all(np.diff(tg.accept_order) >= -1e-12)
    unit = fmm_solve(spec, 1.0, (x, y))
    assert np.allclose(tg.values * speed, unit.values, atol=1e-9)
