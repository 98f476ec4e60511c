import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnetsim.network import (
    BadRouting,
    Deterministic,
    DetWorkload,
    DimensionMismatch,
    DISABLED_RATE,
    Exponential,
    ExpWorkload,
    HyperWorkload,
    Hyperexponential,
    MaskViolation,
    NetworkSpec,
    TimeVarying,
    Trace,
    disabled,
    make_spec,
    sample_interarrival,
    sample_workload,
    substream,
    validate,
)


def criss_cross_spec():
    return make_spec(
        topology=[[1, 0], [0, 1], [1, 0]],
        rates=[[2, 0], [0, 1], [2, 0]],
        holding_costs=[1, 1, 1],
        routing=[[-1, 1, 0], [0, -1, 0], [0, 0, -1]],
        arrival_specs=[Exponential(0.9), disabled(), Exponential(0.9)],
        service_specs=[ExpWorkload()] * 3,
    )


class TestValidate:
    def test_criss_cross_dimensions(self):
        spec = criss_cross_spec()
        assert spec.num_queues == 3
        assert spec.num_servers == 2
        assert spec.validated

    def test_derived_routing_probs(self):
        spec = criss_cross_spec()
        expected = np.zeros((3, 3))
        expected[0, 1] = 1.0
        np.testing.assert_array_equal(spec.routing_probs, expected)
        assert spec.routing_target == (1, None, None)

    def test_rate_where_mask_zero_rejected(self):
        with pytest.raises(MaskViolation):
            make_spec(
                topology=[[1, 0]],
                rates=[[1.0, 1.0]],
                holding_costs=[1],
                routing=[[-1]],
                arrival_specs=[Exponential(1.0)],
                service_specs=[ExpWorkload()],
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionMismatch):
            make_spec(
                topology=[[1, 0], [0, 1]],
                rates=[[1.0]],
                holding_costs=[1, 1],
                routing=[[-1, 0], [0, -1]],
                arrival_specs=[Exponential(1.0)] * 2,
                service_specs=[ExpWorkload()] * 2,
            )

    def test_bad_routing_rejected(self):
        base = dict(
            topology=[[1], [1]],
            rates=[[1.0], [1.0]],
            holding_costs=[1, 1],
            arrival_specs=[Exponential(1.0)] * 2,
            service_specs=[ExpWorkload()] * 2,
        )
        with pytest.raises(BadRouting):
            make_spec(routing=[[1, -1], [0, -1]], **base)  # -1 off-diagonal
        with pytest.raises(BadRouting):
            make_spec(routing=[[-1, 2], [0, -1]], **base)  # entry outside range
        with pytest.raises(BadRouting):
            make_spec(routing=[[-1, 0]], **base)  # one delta missing

    def test_row_sums_of_probs(self):
        spec = criss_cross_spec()
        sums = spec.routing_probs.sum(axis=1)
        assert set(sums.tolist()) <= {0.0, 1.0}


class TestSampling:
    def test_exponential_mean(self):
        rng = substream(7, 0)
        spec = Exponential(0.9)
        n = 10**6
        total = sum(spec.sample(0.0, rng) for _ in range(n))
        assert abs(total / n - 1 / 0.9) < 0.01 * (1 / 0.9)

    def test_deterministic_exact(self):
        rng = substream(7, 1)
        spec = Deterministic(2.0)
        assert all(spec.sample(t, rng) == 2.0 for t in (0.0, 1.5, 99.0))

    def test_unit_exponential_workload_moments(self):
        rng = substream(7, 2)
        spec = ExpWorkload()
        n = 10**6
        xs = [spec.sample(rng) for _ in range(n)]
        mean = sum(xs) / n
        var = sum((x - mean) ** 2 for x in xs) / n
        assert abs(mean - 1.0) < 0.01
        assert abs(var - 1.0) < 0.03

    def test_deterministic_workload(self):
        rng = substream(7, 3)
        assert sample_workload(DetWorkload(), rng) == 1.0

    def test_hyperexponential_workload_moments(self):
        spec = HyperWorkload((0.9, 0.1), (0.5, 5.5))
        # Mixture formulas: mean = sum(w*m), second moment = 2*sum(w*m^2).
        assert abs(sum(w * m for w, m in zip(spec.weights, spec.means)) - 1.0) < 1e-12
        assert spec.scv == pytest.approx(5.5)
        rng = substream(7, 4)
        n = 200_000
        xs = [spec.sample(rng) for _ in range(n)]
        mean = sum(xs) / n
        second = sum(x * x for x in xs) / n
        assert abs(mean - 1.0) < 0.01
        scv = second / mean**2 - 1.0
        assert scv > 1.0

    def test_hyper_mixture_mean_must_be_one(self):
        with pytest.raises(Exception):
            HyperWorkload((0.5, 0.5), (1.0, 3.0))

    def test_trace_arrivals(self):
        spec = Trace((1.0, 2.5, 7.0))
        rng = substream(7, 5)
        assert sample_interarrival(spec, 0.0, rng) == 1.0
        assert sample_interarrival(spec, 1.0, rng) == 1.5
        assert sample_interarrival(spec, 6.0, rng) == 1.0
        assert sample_interarrival(spec, 7.0, rng) == math.inf

    def test_disabled_rate_is_sentinel(self):
        assert disabled().rate == DISABLED_RATE

    def test_identical_seeds_reproduce_streams(self):
        a = [substream(3, 1, 2).random() for _ in range(5)]
        b = [substream(3, 1, 2).random() for _ in range(5)]
        c = [substream(3, 1, 3).random() for _ in range(5)]
        assert a == b
        assert a != c


class TestTimeVarying:
    def test_integrated_rate_table(self):
        spec = TimeVarying(breaks=(5.0, 10.0), rates=(1.0, 4.0))
        assert spec.integrated_rate(5.0) == pytest.approx(5.0)
        assert spec.integrated_rate(10.0) == pytest.approx(25.0)
        assert spec.integrated_rate(12.0) == pytest.approx(27.0)  # wraps cyclically

    def test_rate_at(self):
        spec = TimeVarying(breaks=(5.0, 10.0), rates=(1.0, 4.0))
        assert spec.rate_at(0.0) == 1.0
        assert spec.rate_at(4.999) == 1.0
        assert spec.rate_at(5.0) == 4.0
        assert spec.rate_at(11.0) == 1.0

    def test_segment_counts_match_integrated_rate(self):
        # Two-segment table; arrivals counted per segment over 200 cycles and
        # compared to the integrated-rate oracle within 3 sigma (Poisson).
        spec = TimeVarying(breaks=(5.0, 10.0), rates=(1.0, 4.0))
        rng = substream(11, 0)
        cycles = 200
        horizon = 10.0 * cycles
        t = 0.0
        seg_counts = [0, 0]
        while True:
            t += spec.sample(t, rng)
            if t >= horizon:
                break
            seg_counts[0 if (t % 10.0) < 5.0 else 1] += 1
        expected = [cycles * 5.0, cycles * 20.0]
        for got, mean in zip(seg_counts, expected):
            assert abs(got - mean) <= 3.0 * math.sqrt(mean)

    def test_sampler_is_exact_inversion(self):
        # Duration from t=0 with target mass E: first 5 units hold mass 5.
        spec = TimeVarying(breaks=(5.0, 10.0), rates=(1.0, 4.0))

        class FixedRng:
            def __init__(self, e):
                self.e = e

            def expovariate(self, rate):
                return self.e

        # Mass 3 -> inside segment 1 at t=3.
        assert spec.sample(0.0, FixedRng(3.0)) == pytest.approx(3.0)
        # Mass 9 -> 5 consumed by segment 1, 4 more at rate 4 -> t=6.
        assert spec.sample(0.0, FixedRng(9.0)) == pytest.approx(6.0)
        # Mass 26 -> one full cycle (25) plus 1 -> t=11.
        assert spec.sample(0.0, FixedRng(26.0)) == pytest.approx(11.0)
        # Start mid-segment-2: from t=7, remaining seg2 mass 12.
        assert spec.sample(7.0, FixedRng(6.0)) == pytest.approx(1.5)

    def test_zero_rate_segments_are_skipped(self):
        spec = TimeVarying(breaks=(1.0, 2.0), rates=(0.0, 2.0))

        class FixedRng:
            def expovariate(self, rate):
                return 1.0

        # No mass in [0,1); 1.0 mass needs 0.5 units of the rate-2 segment.
        assert spec.sample(0.0, FixedRng()) == pytest.approx(1.5)


@given(
    rate=st.floats(min_value=0.01, max_value=50.0),
    now=st.floats(min_value=0.0, max_value=1e5),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=200, deadline=None)
def test_samples_strictly_positive_and_finite(rate, now, seed):
    rng = substream(seed, 0)
    for spec in (
        Exponential(rate),
        Deterministic(1.0 / rate),
        Hyperexponential((0.3, 0.7), (rate, 2 * rate)),
        TimeVarying((1.0, 3.0), (rate, rate / 2)),
    ):
        d = sample_interarrival(spec, now, rng)
        assert d > 0.0
        assert math.isfinite(d)
    for svc in (ExpWorkload(), HyperWorkload((0.9, 0.1), (0.5, 5.5))):
        w = sample_workload(svc, rng)
        assert w > 0.0
        assert math.isfinite(w)


@given(seed=st.integers(min_value=0, max_value=2**31), n=st.integers(2, 50))
@settings(max_examples=50, deadline=None)
def test_sampling_reproducible_bit_for_bit(seed, n):
    spec = Hyperexponential((0.2, 0.8), (0.5, 3.0))
    rng1 = substream(seed, 9)
    rng2 = substream(seed, 9)
    a = [sample_interarrival(spec, float(k), rng1) for k in range(n)]
    b = [sample_interarrival(spec, float(k), rng2) for k in range(n)]
    assert a == b
