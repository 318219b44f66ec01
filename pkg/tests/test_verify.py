import math

import numpy as np
import pytest

from ldcp.hypernet import IntervalHyperNetwork, interval_abstraction, propagate_bounds
from ldcp.mlp import MlpArchitecture, classify, forward
from ldcp.verify import (ConfusionMatrix, Decision, Kind, Neighborhood, Verdict, confusion, coverage_metrics,
                         interval_miscoverage, interval_overcoverage, naive_ldcp, neighborhood_box,
                         sample_neighborhoods, sphynx_verify, verify_network)
from oracles import phase_enumeration_optimum, random_hypernet, random_network, sample_concrete


def _constant_hypernet(out_lo, out_hi, d=2):
    """Zero weights everywhere; only the output bias is an interval."""
    arch = MlpArchitecture((d, 2, 1))
    lo, hi = np.zeros(arch.num_params), np.zeros(arch.num_params)
    lo[-1], hi[-1] = out_lo, out_hi
    return IntervalHyperNetwork(arch, lo, hi)


class TestNeighborhood:
    def test_linf_clipped(self):
        lo, hi = neighborhood_box(Neighborhood.linf_ball([0.02, 0.5], 0.05, 1))
        assert lo == pytest.approx([0.0, 0.45]) and hi == pytest.approx([0.07, 0.55])

    def test_membership_is_point(self):
        lo, hi = neighborhood_box(Neighborhood.membership([0.2, 0.4], -1))
        assert np.array_equal(lo, hi)

    def test_sensitivity_spans_feature(self):
        lo, hi = neighborhood_box(Neighborhood.sensitivity([0.2, 0.4, 0.6], (0, 2), 1))
        assert list(lo) == [0.0, 0.4, 0.0] and list(hi) == [1.0, 0.4, 1.0]

    def test_feature_out_of_range(self):
        with pytest.raises(IndexError):
            Neighborhood.sensitivity([0.2, 0.4], (2,), 1)

    def test_validation(self):
        with pytest.raises(ValueError):
            Neighborhood.membership([1.2], 1)
        with pytest.raises(ValueError):
            Neighborhood.membership([0.2], 0)
        with pytest.raises(ValueError):
            Neighborhood.linf_ball([0.2], 0.0, 1)

    def test_roundtrip(self):
        n = Neighborhood.sensitivity([0.2, 0.4], (1,), -1)
        back = Neighborhood.from_dict(n.to_dict())
        assert back.kind is Kind.SENSITIVITY and back.features == (1,) and back.label == -1
        assert np.array_equal(back.center, n.center)


class TestSphynxVerify:
    def test_bounds_alone_certify(self):
        v = sphynx_verify(_constant_hypernet(1.0, 2.0), Neighborhood.linf_ball([0.5, 0.5], 0.1, 1))
        assert v.decision is Decision.LDCP and v.nodes == 0 and v.objective_bound == 1.0

    def test_misclassified_point(self):
        v = sphynx_verify(_constant_hypernet(-2.0, -1.0), Neighborhood.membership([0.5, 0.5], 1))
        assert v.decision is Decision.NOT_LDCP and not v.ldcp

    def test_straddling_output_not_ldcp(self):
        v = sphynx_verify(_constant_hypernet(-1.0, 1.0), Neighborhood.membership([0.5, 0.5], -1))
        assert v.decision is Decision.NOT_LDCP

    def test_zero_output_belongs_to_positive_class(self):
        h = _constant_hypernet(0.0, 0.0)
        assert sphynx_verify(h, Neighborhood.membership([0.5, 0.5], 1)).ldcp
        assert not sphynx_verify(h, Neighborhood.membership([0.5, 0.5], -1)).ldcp

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sphynx_verify(_constant_hypernet(1, 2, d=3), Neighborhood.membership([0.5, 0.5], 1))

    def test_point_hypernet_membership_equals_classification(self, rng):
        for _ in range(30):
            net = random_network(rng, (3, 4, 1))
            x = rng.uniform(size=3)
            y = classify(net, x)
            assert verify_network(net, Neighborhood.membership(x, y)).ldcp
            assert not verify_network(net, Neighborhood.membership(x, -y)).ldcp

    def test_matches_exact_optimum(self, rng):
        for _ in range(40):
            h = random_hypernet(rng, (2, 3, 2, 1), width=0.15)
            x = rng.uniform(size=2)
            label = int(rng.choice([-1, 1]))
            nbh = Neighborhood.linf_ball(x, 0.1, label)
            lo, hi = neighborhood_box(nbh)
            ref, _ = phase_enumeration_optimum(h, lo, hi, label, propagate_bounds(h, lo, hi))
            expected = ref >= 0 if label == 1 else ref > 0
            if abs(ref) < 1e-7:
                continue
            assert sphynx_verify(h, nbh).ldcp == expected

    def test_certified_verdicts_are_sound(self, rng):
        certified = 0
        for _ in range(40):
            h = random_hypernet(rng, (2, 4, 1), width=0.05)
            x = rng.uniform(size=2)
            net = sample_concrete(h, rng)
            nbh = Neighborhood.linf_ball(x, 0.05, classify(net, x))
            if not sphynx_verify(h, nbh).ldcp:
                continue
            certified += 1
            lo, hi = neighborhood_box(nbh)
            for _ in range(100):
                assert classify(sample_concrete(h, rng), rng.uniform(lo, hi)) == nbh.label
        assert certified > 5

    def test_budget_exceeded_reported(self, rng):
        for _ in range(200):
            h = random_hypernet(rng, (2, 6, 6, 1), width=0.3)
            nbh = Neighborhood.linf_ball(rng.uniform(size=2), 0.3, 1)
            v = sphynx_verify(h, nbh, node_budget=1)
            if v.budget_exceeded:
                assert v.decision is Decision.NOT_LDCP and v.nodes == 1
                assert v.to_dict()["budget_exceeded"] is True
                return
        pytest.fail("no instance needed more than one node")

    def test_wider_hypernet_never_gains_certificates(self, rng):
        for _ in range(30):
            h = random_hypernet(rng, (2, 3, 1), width=0.1)
            wide = IntervalHyperNetwork(h.architecture, h.lower - 0.1, h.upper + 0.1)
            nbh = Neighborhood.linf_ball(rng.uniform(size=2), 0.05, int(rng.choice([-1, 1])))
            if sphynx_verify(wide, nbh).ldcp:
                assert sphynx_verify(h, nbh).ldcp

    def test_deterministic(self, rng):
        h = random_hypernet(rng, (2, 4, 1), width=0.2)
        nbh = Neighborhood.linf_ball([0.4, 0.6], 0.2, 1)
        a, b = sphynx_verify(h, nbh), sphynx_verify(h, nbh)
        assert a.decision == b.decision and a.objective_bound == b.objective_bound and a.nodes == b.nodes


class TestNaive:
    def test_no_loo_networks(self, small_data, small_trainer):
        net = small_trainer()
        x = small_data.inputs[0]
        res = naive_ldcp(net, small_data, small_trainer, Neighborhood.membership(x, classify(net, x)),
                         loo_networks=[])
        assert res.verdict.ldcp and len(res.per_network) == 1

    def test_adversarial_network_reported(self, small_data, small_trainer, rng):
        net = small_trainer()
        x = small_data.inputs[0]
        y = classify(net, x)
        theta = net.flat()
        theta[-1] -= y * (abs(forward(net, x)) + 1.0)  # flips the sign of the output at x
        bad = net.with_params(theta)
        loo = [small_trainer(j) for j in range(3)] + [bad]
        res = naive_ldcp(net, small_data, small_trainer, Neighborhood.membership(x, y), loo_networks=loo)
        assert not res.verdict.ldcp and 4 in res.failing

    def test_per_network_matches_direct(self, small_data, small_trainer):
        net = small_trainer()
        loo = [small_trainer(j) for j in range(4)]
        nbh = Neighborhood.linf_ball(small_data.inputs[1], 0.05, classify(net, small_data.inputs[1]))
        res = naive_ldcp(net, small_data, small_trainer, nbh, loo_networks=loo)
        for n, v in zip([net, *loo], res.per_network):
            assert verify_network(n, nbh).decision == v.decision


class TestCoverage:
    def test_identity(self, rng):
        nets = [random_network(rng, (2, 3, 1)) for _ in range(3)]
        opt = interval_abstraction(nets)
        m = coverage_metrics(opt, opt, nets)
        assert m.weight_abstraction_rate == 100.0 and m.network_abstraction_rate == 100.0
        assert m.miscoverage == 0.0 and m.overcoverage == pytest.approx(1.0)

    def test_miscoverage_examples(self):
        assert interval_miscoverage(np.array([0.0]), np.array([2.0]), np.array([-1.0]), np.array([2.0]))[0] == 0.5
        assert interval_miscoverage(np.array([-2.0]), np.array([4.0]), np.array([0.0]), np.array([2.0]))[0] == 0.0
        assert interval_miscoverage(np.array([1.0]), np.array([1.0]), np.array([1.0]), np.array([1.0]))[0] == 0.0
        assert math.isinf(interval_miscoverage(np.array([1.0]), np.array([1.0]), np.array([0.0]), np.array([1.0]))[0])

    def test_overcoverage_examples(self):
        assert interval_overcoverage(np.array([0.0]), np.array([2.0]), np.array([-1.0]), np.array([2.0]))[0] == 1.0
        assert interval_overcoverage(np.array([-2.0]), np.array([4.0]), np.array([0.0]), np.array([2.0]))[0] == 3.0
        assert math.isnan(interval_overcoverage(np.array([0.0]), np.array([1.0]), np.array([0.5]), np.array([0.5]))[0])

    def test_zero_width_excluded(self, rng):
        net = random_network(rng, (2, 3, 1))
        theta = net.flat()
        theta[0] += 0.5
        nets = [net, net.with_params(theta)]
        opt = interval_abstraction(nets)
        pred = IntervalHyperNetwork(opt.architecture, opt.lower - 1.0, opt.upper + 1.0)
        m = coverage_metrics(pred, opt, nets)
        assert m.overcoverage_excluded == opt.num_params - 1
        assert m.overcoverage == pytest.approx(2.5 / 0.5)

    def test_partial_network_coverage(self, rng):
        nets = [random_network(rng, (2, 3, 1)) for _ in range(4)]
        pred = interval_abstraction(nets[:2])
        m = coverage_metrics(pred, None, nets)
        assert m.network_abstraction_rate == 50.0 and m.weight_abstraction_rate < 100.0


class TestConfusion:
    def test_example(self):
        s = [True, True, False, False, True]
        n = [True, False, False, True, True]
        cm = confusion(s, n)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (2, 1, 1, 1)
        assert cm.accuracy == pytest.approx(0.6)
        assert cm.to_dict()["TP"] == 2

    def test_accepts_verdicts(self):
        v = Verdict(Decision.LDCP, 1.0, 0.0)
        assert confusion([v, Decision.NOT_LDCP], [Decision.LDCP, v]) == ConfusionMatrix(tp=1, fn=1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([True], [True, False])

    def test_empty(self):
        assert math.isnan(confusion([], []).accuracy)


class TestSampleNeighborhoods:
    def test_kinds_cycle_and_labels(self, rng):
        net = random_network(rng, (3, 4, 1))
        X = rng.uniform(size=(10, 3))
        nbhs = sample_neighborhoods(net, X, 6, seed=1, epsilon=0.1, features=(2,))
        assert [n.kind for n in nbhs] == [Kind.MEMBERSHIP, Kind.LINF_BALL, Kind.SENSITIVITY] * 2
        assert all(n.label == classify(net, n.center) for n in nbhs)
        assert nbhs[2].features == (2,) and nbhs[1].epsilon == 0.1

    def test_reproducible(self, rng):
        net = random_network(rng, (3, 4, 1))
        X = rng.uniform(size=(10, 3))
        a, b = sample_neighborhoods(net, X, 5, seed=4), sample_neighborhoods(net, X, 5, seed=4)
        assert all(np.array_equal(p.center, q.center) for p, q in zip(a, b))


def test_verdict_serialization():
    d = Verdict(Decision.NOT_LDCP, -0.25, 0.002, nodes=3).to_dict()
    assert d == {"verdict": "NotLdcp", "objective_bound": -0.25, "wall_time_ms": 2.0,
                 "budget_exceeded": False, "nodes": 3}
