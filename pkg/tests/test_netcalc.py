import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detnet.errors import InvalidParameter, ServiceOverload
from detnet.netcalc import (
    ArrivalCurve,
    BoundSet,
    ServiceCurve,
    aggregate,
    backlog_bound,
    bounds,
    delay_bound,
    output_curve,
    port_service,
    residual_spq,
)
from oracles import residual_closure, sampled_deviations

rates = st.floats(1e3, 1e10, allow_nan=False)
bursts = st.floats(0.0, 1e7, allow_nan=False)
latencies = st.floats(0.0, 1e-2, allow_nan=False)


@st.composite
def stable_pair(draw):
    R = draw(rates)
    r = draw(st.floats(0.0, 1.0)) * R
    return ArrivalCurve(r, draw(bursts)), ServiceCurve(R, draw(latencies))


class TestCurves:
    def test_arrival_is_zero_at_origin(self):
        a = ArrivalCurve(3e6, 12336)
        assert a(0.0) == 0.0
        assert a(1e-6) == pytest.approx(12336 + 3.0)

    def test_service_is_zero_before_latency(self):
        s = ServiceCurve(1e9, 7.65e-6)
        assert s(7e-6) == 0.0
        assert s(8.65e-6) == pytest.approx(1000.0)

    @pytest.mark.parametrize("rate,burst", [(-1.0, 0.0), (0.0, -1.0), (math.nan, 0.0), (math.inf, 0.0)])
    def test_arrival_rejects_bad_values(self, rate, burst):
        with pytest.raises(InvalidParameter):
            ArrivalCurve(rate, burst)

    @pytest.mark.parametrize("rate,lat", [(0.0, 0.0), (-5.0, 0.0), (1e9, -1e-6), (1e9, math.inf)])
    def test_service_rejects_bad_values(self, rate, lat):
        with pytest.raises(InvalidParameter):
            ServiceCurve(rate, lat)


class TestAggregate:
    def test_empty(self):
        assert aggregate([]) == ArrivalCurve(0.0, 0.0)

    def test_singleton(self):
        assert aggregate([ArrivalCurve(3e6, 12336)]) == ArrivalCurve(3e6, 12336)

    def test_componentwise(self):
        assert aggregate([ArrivalCurve(3e6, 12336), ArrivalCurve(1e7, 8000)]) == ArrivalCurve(1.3e7, 20336)

    @given(st.lists(st.tuples(rates, bursts), max_size=8))
    def test_order_independent(self, parts):
        curves = [ArrivalCurve(r, b) for r, b in parts]
        fwd, rev = aggregate(curves), aggregate(reversed(curves))
        assert fwd.rate_bps == pytest.approx(rev.rate_bps)
        assert fwd.burst_bits == pytest.approx(rev.burst_bits)


class TestBounds:
    def test_delay_examples(self):
        assert delay_bound(ArrivalCurve(3e6, 12336), ServiceCurve(1e9, 7.65e-6)) == pytest.approx(19.986e-6, abs=1e-15)
        assert delay_bound(ArrivalCurve(5e6, 0), ServiceCurve(1e7, 0)) == 0.0
        assert delay_bound(ArrivalCurve(1e7, 8000), ServiceCurve(1e7, 10e-6)) == pytest.approx(810e-6, abs=1e-15)

    def test_backlog_examples(self):
        assert backlog_bound(ArrivalCurve(3e6, 12336), ServiceCurve(1e9, 7.65e-6)) == pytest.approx(12358.95)
        assert backlog_bound(ArrivalCurve(4e6, 777), ServiceCurve(1e9, 0)) == 777
        assert backlog_bound(ArrivalCurve(1e7, 8000), ServiceCurve(1e9, 100e-6)) == pytest.approx(9000)

    def test_bounds_bundle(self):
        a, s = ArrivalCurve(1e7, 8000), ServiceCurve(1e9, 100e-6)
        assert bounds(a, s) == BoundSet(delay_bound(a, s), backlog_bound(a, s))

    def test_overload(self):
        with pytest.raises(ServiceOverload):
            delay_bound(ArrivalCurve(2e9, 0), ServiceCurve(1e9, 0))
        with pytest.raises(ServiceOverload):
            backlog_bound(ArrivalCurve(2e9, 0), ServiceCurve(1e9, 0))

    def test_equal_rates_are_stable(self):
        assert delay_bound(ArrivalCurve(1e9, 1000), ServiceCurve(1e9, 1e-6)) == pytest.approx(2e-6)

    @given(stable_pair())
    def test_match_sampled_oracle(self, pair):
        a, s = pair
        h, v = sampled_deviations(a.rate_bps, a.burst_bits, s.rate_bps, s.latency_s)
        assert delay_bound(a, s) == pytest.approx(h, rel=1e-6, abs=1e-15)
        assert backlog_bound(a, s) == pytest.approx(v, rel=1e-6, abs=1e-9)

    @given(stable_pair(), st.floats(1.0, 10.0))
    def test_monotone_in_burst_and_rate(self, pair, k):
        a, s = pair
        bigger = ArrivalCurve(a.rate_bps, a.burst_bits * k + 1)
        assert delay_bound(bigger, s) >= delay_bound(a, s)
        faster = ServiceCurve(s.rate_bps * k, s.latency_s)
        assert delay_bound(a, faster) <= delay_bound(a, s)


class TestOutputCurve:
    def test_examples(self):
        out = output_curve(ArrivalCurve(3e6, 12336), ServiceCurve(1e9, 7.65e-6))
        assert out.rate_bps == 3e6 and out.burst_bits == pytest.approx(12358.95)
        out = output_curve(ArrivalCurve(1e7, 8000), ServiceCurve(1e9, 100e-6))
        assert (out.rate_bps, out.burst_bits) == (1e7, pytest.approx(9000))

    @given(stable_pair())
    def test_identity_without_latency(self, pair):
        a, s = pair
        assert output_curve(a, ServiceCurve(s.rate_bps, 0.0)) == a

    @given(stable_pair())
    def test_output_dominates_input(self, pair):
        a, s = pair
        out = output_curve(a, s)
        assert out.rate_bps == a.rate_bps
        assert out.burst_bits >= a.burst_bits

    @given(stable_pair())
    def test_sampled_deconvolution(self, pair):
        # (a ⊘ s)(t) = sup_u a(t+u) - s(u); the sup over u sits at u = T for these shapes
        a, s = pair
        out = output_curve(a, s)
        us = np.union1d(np.linspace(0, 5 * s.latency_s + 1e-9, 2001), [s.latency_s])
        for t in (1e-9, 1e-6, 1e-3):
            sup = max(a(t + u) - s(u) for u in us)
            assert out(t) == pytest.approx(sup, rel=1e-9, abs=1e-6)


class TestPortService:
    def test_examples(self):
        s = port_service(1e9, 4.15e-6, 3.5e-6)
        assert s.rate_bps == 1e9 and s.latency_s == pytest.approx(7.65e-6, abs=1e-18)
        assert port_service(1e9, 0, 0) == ServiceCurve(1e9, 0)
        assert port_service(1e8, 4.15e-6, 3.5e-6).latency_s == pytest.approx(7.65e-6, abs=1e-18)

    def test_rejects_bad(self):
        with pytest.raises(InvalidParameter):
            port_service(0, 1e-6, 1e-6)
        with pytest.raises(InvalidParameter):
            port_service(1e9, -1e-6, 0)


class TestResidual:
    port = ServiceCurve(1e9, 7.65e-6)

    def test_blocking_only(self):
        res = residual_spq(self.port, ArrivalCurve.zero(), 12128)
        assert res.rate_bps == 1e9
        assert res.latency_s == pytest.approx(19.778e-6, abs=1e-15)

    def test_identity(self):
        assert residual_spq(self.port, ArrivalCurve.zero(), 0.0) is self.port

    def test_with_higher_traffic(self):
        res = residual_spq(self.port, ArrivalCurve(1e7, 8000), 12128)
        assert res.rate_bps == pytest.approx(9.9e8)
        assert res.latency_s == pytest.approx(27778e-9 / 0.99, abs=1e-15)
        assert res.latency_s * 1e6 == pytest.approx(28.059, abs=5e-4)

    def test_saturated(self):
        with pytest.raises(ServiceOverload):
            residual_spq(self.port, ArrivalCurve(1e9, 0), 0)
        with pytest.raises(InvalidParameter):
            residual_spq(self.port, ArrivalCurve.zero(), -1)

    @given(rates, latencies, st.floats(0, 0.99), bursts, st.floats(0, 2e5))
    def test_is_service_curve_lower_bound(self, R, T, frac, b_h, blocking):
        port = ServiceCurve(R, T)
        res = residual_spq(port, ArrivalCurve(frac * R, b_h), blocking)
        horizon = res.latency_s * 4 + 1e-6
        ts = np.linspace(0, horizon, 4001)
        closure = residual_closure(R, T, frac * R, b_h, blocking, ts)
        got = res.rate_bps * np.maximum(0.0, ts - res.latency_s)
        # never promises more than the leftover service, and meets it once both are linear
        assert np.all(got <= closure + 1e-6 * (1 + closure))
        assert got[-1] == pytest.approx(closure[-1], rel=1e-6, abs=1e-3)
