import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chanrecon import make_schedule
from chanrecon.errors import ScheduleError
from chanrecon.schedule import VarianceSchedule


class TestMakeSchedule:
    def test_single_step_product(self):
        sched = make_schedule(1, 0.5, 0.5)
        assert sched.betas.tolist() == [0.5]
        assert sched.alpha_bars.tolist() == [0.5]

    def test_two_step_cumulative_product(self):
        # independent oracle: explicit running product
        sched = VarianceSchedule(np.array([0.1, 0.2]))
        expected = [1.0 - 0.1, (1.0 - 0.1) * (1.0 - 0.2)]
        assert np.allclose(sched.alpha_bars, expected)
        assert np.allclose(sched.alpha_bars, [0.9, 0.72])

    def test_endpoints_inclusive(self):
        sched = make_schedule(5, 1e-4, 0.02)
        assert sched.betas[0] == pytest.approx(1e-4)
        assert sched.betas[-1] == pytest.approx(0.02)

    def test_invalid_parameters(self):
        with pytest.raises(ScheduleError):
            make_schedule(10, 1.5, 1.6)
        with pytest.raises(ScheduleError):
            make_schedule(0, 0.1, 0.2)
        with pytest.raises(ScheduleError):
            make_schedule(10, 0.0, 0.2)
        with pytest.raises(ScheduleError):
            make_schedule(10, 0.3, 0.2)
        with pytest.raises(ScheduleError):
            make_schedule(10, 0.1, 0.2, kind="cosine")

    def test_alpha_bar_indexing(self):
        sched = VarianceSchedule(np.array([0.1, 0.2]))
        assert sched.alpha_bar(0) == 1.0
        assert sched.alpha_bar(2) == pytest.approx(0.72)
        with pytest.raises(IndexError):
            sched.alpha_bar(3)
        with pytest.raises(IndexError):
            sched.beta(0)

    @given(st.integers(1, 200), st.floats(1e-6, 0.5), st.floats(0.0, 0.49))
    @settings(max_examples=100, deadline=None)
    def test_alpha_bars_strictly_decreasing(self, T, beta_start, extra):
        sched = make_schedule(T, beta_start, min(beta_start + extra, 0.999))
        diffs = np.diff(sched.alpha_bars)
        assert np.all(diffs < 0) or T == 1
        # recurrence: abar_t = abar_{t-1} * (1 - beta_t), abar_0 = 1
        recur = np.concatenate([[1.0], sched.alpha_bars[:-1]]) * (1.0 - sched.betas)
        assert np.allclose(sched.alpha_bars, recur, rtol=0, atol=0)

    def test_fingerprint_stable_and_distinct(self):
        a = make_schedule(10, 1e-4, 0.02)
        b = make_schedule(10, 1e-4, 0.02)
        c = make_schedule(11, 1e-4, 0.02)
        assert a.fingerprint == b.fingerprint
        assert a.fingerprint != c.fingerprint
