import math

import numpy as np
import pytest

from riccati_mdp import (
    Atom,
    EventPredicate,
    GammaString,
    SymMatrix,
    finite_dim_exact,
    iota,
    iota_plus,
    is_class_A,
    loewner_leq,
    lsc_check,
    lyapunov_step,
    min_decay_exponent,
    poly_probability,
    rate_over_set,
    rate_point,
    riccati_step,
    spectral_norm,
)

import oracles

SQRT2 = oracles.SQRT2

# Distances of the open-loop orbit from the scalar fixed point:
# ||f0^k(p*) - p*|| = (2^k - 1)(2 + sqrt(2)).
ORBIT_DIST = [(2.0 ** k - 1.0) * (2.0 + SQRT2) for k in range(8)]


class TestEventPredicate:
    def test_ball_complement_matches(self, scalar_model, scalar_pstar):
        pred = EventPredicate.ball_complement(3.0)
        assert not pred.matches(scalar_pstar, scalar_pstar)
        far = SymMatrix(scalar_pstar.item() + 3.0)
        assert pred.matches(far, scalar_pstar)
        near = SymMatrix(scalar_pstar.item() + 2.999)
        assert not pred.matches(near, scalar_pstar)

    def test_open_variant_is_strict(self):
        # Exact-float boundary: center 2, point 5, radius 3.
        center = SymMatrix(2.0)
        closed = EventPredicate.ball_complement(3.0, center=center)
        opened = EventPredicate.ball_complement(3.0, center=center, open_=True)
        boundary = SymMatrix(5.0)
        assert closed.matches(boundary)
        assert not opened.matches(boundary)
        assert opened.matches(SymMatrix(5.0 + 1e-9))

    def test_explicit_center(self):
        pred = EventPredicate.ball_complement(1.0, center=SymMatrix(10.0))
        assert pred.matches(SymMatrix(11.0))
        assert not pred.matches(SymMatrix(10.5))

    def test_norm_above(self):
        pred = EventPredicate.norm_above(5.0)
        assert pred.matches(SymMatrix(5.5))
        assert not pred.matches(SymMatrix(5.0))
        assert pred.matches(SymMatrix(np.diag([1.0, 6.0])))

    def test_custom(self):
        pred = EventPredicate.custom(lambda x: x.a.trace() > 4.0)
        assert pred.matches(SymMatrix(np.diag([2.0, 2.5])))
        assert not pred.matches(SymMatrix.identity(2))

    def test_spec_round_trip(self):
        for text in ("ballc:2.5", "ballc-open:0.125", "norm-above:40"):
            pred = EventPredicate.from_spec(text)
            again = EventPredicate.from_spec(pred.to_spec())
            assert again.kind == pred.kind
            assert again.threshold == pred.threshold

    def test_from_spec_rejects_garbage(self):
        for bad in ("ballc", "ballc:-1", "ballc:0", "norm-above:xyz", "frobnicate:3"):
            with pytest.raises(ValueError):
                EventPredicate.from_spec(bad)

    def test_batch_agrees_with_matches(self, scalar_pstar):
        pred = EventPredicate.ball_complement(3.0)
        rng = np.random.default_rng(0)
        vals = rng.uniform(0.0, 10.0, size=200).reshape(-1, 1, 1)
        flags = pred.batch(vals, scalar_pstar)
        for v, f in zip(vals, flags):
            assert f == pred.matches(SymMatrix(v), scalar_pstar)

    def test_batch_matrix_values(self, planar_pstar):
        pred = EventPredicate.ball_complement(2.0)
        rng = np.random.default_rng(1)
        g = rng.standard_normal((100, 2, 2))
        vals = g @ np.swapaxes(g, -1, -2)
        flags = pred.batch(vals, planar_pstar)
        for v, f in zip(vals, flags):
            assert f == pred.matches(SymMatrix(v), planar_pstar)

    def test_custom_spec_is_opaque_label(self):
        # Custom predicates serialize as a bare label; they cannot round-trip.
        assert EventPredicate.custom(lambda x: True).to_spec() == "custom"
        with pytest.raises(ValueError):
            EventPredicate.from_spec("custom")


class TestIota:
    def test_orbit_landmarks(self, scalar_model):
        eps = 1e-9
        for k in (1, 2, 3, 4):
            assert iota(scalar_model, ORBIT_DIST[k] - eps) == k
            assert iota(scalar_model, ORBIT_DIST[k] + eps) == k + 1
            assert iota_plus(scalar_model, ORBIT_DIST[k] - eps) == k
            assert iota_plus(scalar_model, ORBIT_DIST[k] + eps) == k + 1

    def test_study_radius_gives_four(self, scalar_model, scalar_pstar):
        m1 = 40.0 - scalar_pstar.item()
        assert iota(scalar_model, m1) == 4
        assert iota_plus(scalar_model, m1) == 4

    def test_adjacency_property(self, scalar_model, planar):
        rng = np.random.default_rng(6)
        for model in (scalar_model, planar):
            for _ in range(250):
                radius = float(10.0 ** rng.uniform(-1.0, 3.0))
                lo = iota(model, radius, cap=60)
                hi = iota_plus(model, radius, cap=60)
                assert lo <= hi <= lo + 1

    def test_cap_returns_inf(self, scalar_model):
        assert iota(scalar_model, 1e6, cap=3) == math.inf

    def test_rejects_bad_radius(self, scalar_model):
        with pytest.raises(ValueError):
            iota(scalar_model, 0.0)
        with pytest.raises(ValueError):
            iota_plus(scalar_model, -1.0)


class TestClassA:
    def test_scalar_is_analytic_yes(self, scalar_model):
        report = is_class_A(scalar_model)
        assert report.passed and report.scalar_proof
        assert report.trials_run == 0

    def test_planar_screen_finds_counterexample(self, planar):
        report = is_class_A(planar, trials=300, seed=11)
        assert not report.scalar_proof
        assert not report.passed
        x = report.counterexample
        assert x is not None
        # The witness must genuinely violate f1(X) <= X, not just trip the
        # tolerance: its downward defect is a strictly negative eigenvalue.
        defect = np.linalg.eigvalsh((x - riccati_step(planar, x)).a).min()
        assert defect < -1e-6

    def test_counterexample_dominates_open_loop_image(self, planar, planar_pstar):
        report = is_class_A(planar, trials=300, seed=11)
        base = lyapunov_step(planar, planar_pstar)
        assert loewner_leq(base, report.counterexample)


class TestRateOverSet:
    def test_study_event(self, scalar_model, scalar_pstar):
        m1 = 40.0 - scalar_pstar.item()
        sol = rate_over_set(scalar_model, EventPredicate.ball_complement(m1))
        assert sol.exponent == 4
        assert sol.minimizer.to_text() == "0^4"
        assert sol.k_gamma == 4
        assert 0 < sol.strings_examined < 200

    def test_matches_brute_force_scalar(self, scalar_model):
        rng = np.random.default_rng(88)
        for _ in range(25):
            radius = math.exp(rng.uniform(math.log(1.0), math.log(3000.0)))
            sol = rate_over_set(scalar_model, EventPredicate.ball_complement(radius),
                                k_cap=12)
            if math.isfinite(sol.k_gamma):
                ref = oracles.min_zeros_scalar(radius, min(int(sol.k_gamma) + 3, 15))
                assert sol.exponent == ref

    def test_witness_attains_the_event(self, planar, planar_pstar):
        pred = EventPredicate.ball_complement(6.0)
        sol = rate_over_set(planar, pred)
        assert math.isfinite(sol.exponent)
        from riccati_mdp import eval_string
        val = eval_string(planar, sol.minimizer).value
        assert pred.matches(val, planar_pstar)
        assert sol.minimizer.bits.count(0) == sol.exponent

    def test_unreachable_event_is_inf(self, scalar_model):
        sol = rate_over_set(scalar_model, EventPredicate.custom(lambda x: False),
                            k_cap=6)
        assert sol.exponent == math.inf
        assert sol.minimizer is None
        assert sol.k_gamma == math.inf

    def test_k_cap_limit(self, scalar_model):
        with pytest.raises(ValueError):
            rate_over_set(scalar_model, EventPredicate.ball_complement(1.0), k_cap=27)

    def test_norm_event(self, scalar_model, scalar_pstar):
        # ||x|| > 40 is the same event as distance >= 40 - p* up to the
        # boundary, and the minimizing word is again four open-loop steps.
        sol = rate_over_set(scalar_model, EventPredicate.norm_above(40.0))
        assert sol.exponent == 4
        assert sol.minimizer.to_text() == "0^4"


class TestRatePoint:
    def test_orbit_points(self, scalar_model, scalar_pstar):
        x = scalar_pstar
        for k in range(4):
            assert rate_point(scalar_model, x, 1e-6).exponent == k
            x = lyapunov_step(scalar_model, x)

    def test_off_support_is_inf(self, scalar_model, scalar_pstar):
        x = SymMatrix(scalar_pstar.item() + 0.37)
        assert rate_point(scalar_model, x, 1e-6, k_cap=8).exponent == math.inf

    def test_non_orbit_ball_is_capped(self, scalar_model, scalar_pstar):
        # The enumeration cut needs the pure open-loop orbit to enter the
        # ball; a value reachable only through mixed words comes back as the
        # inf cap marker rather than a wrong finite number.
        x = riccati_step(scalar_model,
                         lyapunov_step(scalar_model, lyapunov_step(scalar_model, scalar_pstar)))
        sol = rate_point(scalar_model, x, 1e-8)
        assert sol.exponent == math.inf
        assert sol.minimizer is None

    def test_lsc_along_shrinking_balls(self, scalar_model, scalar_pstar):
        x = lyapunov_step(scalar_model, lyapunov_step(scalar_model, scalar_pstar))
        report = lsc_check(scalar_model, x, [1e-2, 1e-4, 1e-6, 1e-8])
        assert report.passed and not report.inconclusive
        assert report.exponents[-1] == 2

    def test_lsc_inconclusive_off_support(self, scalar_model, scalar_pstar):
        x = SymMatrix(scalar_pstar.item() + 0.37)
        report = lsc_check(scalar_model, x, [1e-2, 1e-4], k_cap=6)
        assert report.inconclusive and not report.passed

    def test_lsc_rejects_non_decreasing_tols(self, scalar_model, scalar_pstar):
        with pytest.raises(ValueError):
            lsc_check(scalar_model, scalar_pstar, [1e-4, 1e-2])


class TestFiniteDim:
    def test_two_step_atoms(self, scalar_model, scalar_pstar):
        dist = finite_dim_exact(scalar_model, scalar_pstar, [2])
        atoms = {round(a.values[0].item(), 9): a.multiplicity for a in dist.atoms}
        p = oracles.P_STAR_SCALAR
        expected = {
            round(p, 9): {0: 1},
            round(oracles.F1_OF_F0_SCALAR, 9): {1: 1},
            round(oracles.f0_scalar(p), 9): {1: 1},
            round(oracles.f0_scalar(oracles.f0_scalar(p)), 9): {2: 1},
        }
        assert atoms == expected

    def test_joint_two_times(self, scalar_model, scalar_pstar):
        dist = finite_dim_exact(scalar_model, scalar_pstar, [1, 2])
        got = {
            (round(a.values[0].item(), 6), round(a.values[1].item(), 6)):
                a.multiplicity
            for a in dist.atoms
        }
        p = oracles.P_STAR_SCALAR
        f0p = oracles.f0_scalar(p)
        expected = {
            (round(p, 6), round(p, 6)): {0: 1},
            (round(p, 6), round(f0p, 6)): {1: 1},
            (round(f0p, 6), round(oracles.f1_scalar(f0p), 6)): {1: 1},
            (round(f0p, 6), round(oracles.f0_scalar(f0p), 6)): {2: 1},
        }
        assert got == expected

    def test_path_count_is_exhaustive(self, scalar_model, scalar_pstar):
        for t in (1, 4, 9):
            dist = finite_dim_exact(scalar_model, scalar_pstar, [t])
            total_paths = sum(c for a in dist.atoms for c in a.multiplicity.values())
            assert total_paths == 2 ** t

    def test_total_probability_is_one(self, scalar_model, planar, scalar_pstar, planar_pstar):
        for model, start in ((scalar_model, scalar_pstar), (planar, planar_pstar)):
            dist = finite_dim_exact(model, start, [7])
            for g in (0.05, 0.5, 0.8, 0.99):
                assert dist.total_probability(g) == pytest.approx(1.0, abs=1e-12)

    def test_event_probability_matches_path_enumeration(self, scalar_model, scalar_pstar):
        dist = finite_dim_exact(scalar_model, scalar_pstar, [6])
        for thr in (5.0, 11.0, 25.0):
            for g in (0.3, 0.8, 0.95):
                lib = dist.event_probability(lambda vals: vals[-1].item() >= thr, g)
                ref = oracles.finite_time_event_prob_scalar(6, g, lambda x: x >= thr)
                assert lib == pytest.approx(ref, abs=1e-13)

    def test_event_exponent(self, scalar_model, scalar_pstar):
        dist = finite_dim_exact(scalar_model, scalar_pstar, [12])
        m1 = 40.0 - scalar_pstar.item()
        exponent = dist.event_exponent(
            lambda vals: abs(vals[-1].item() - scalar_pstar.item()) >= m1)
        assert exponent == 4

    def test_atoms_partition_all_paths(self, scalar_model, scalar_pstar):
        # Both update maps are injective here, so the 2^10 paths stay
        # distinguishable: one atom per path, each holding a single count.
        dist = finite_dim_exact(scalar_model, scalar_pstar, [10])
        assert len(dist.atoms) == 2 ** 10
        for atom in dist.atoms:
            assert sum(atom.multiplicity.values()) == 1
            assert 0 <= atom.ell <= 10

    def test_starting_point_respected(self, scalar_model):
        dist = finite_dim_exact(scalar_model, SymMatrix(1.0), [1])
        vals = sorted(a.values[0].item() for a in dist.atoms)
        assert vals == pytest.approx([2.0, 3.0], rel=1e-12)

    def test_horizon_cap(self, scalar_model, scalar_pstar):
        with pytest.raises(ValueError):
            finite_dim_exact(scalar_model, scalar_pstar, [23])

    def test_times_validation(self, scalar_model, scalar_pstar):
        with pytest.raises(ValueError):
            finite_dim_exact(scalar_model, scalar_pstar, [])
        with pytest.raises(ValueError):
            finite_dim_exact(scalar_model, scalar_pstar, [3, 3])
        with pytest.raises(ValueError):
            finite_dim_exact(scalar_model, scalar_pstar, [2, 1])
        with pytest.raises(ValueError):
            finite_dim_exact(scalar_model, scalar_pstar, [-1])

    def test_time_zero_records_the_start(self, scalar_model, scalar_pstar):
        dist = finite_dim_exact(scalar_model, scalar_pstar, [0])
        assert len(dist.atoms) == 1
        assert dist.atoms[0].values[0] == scalar_pstar
        assert dist.atoms[0].multiplicity == {0: 1}


class TestPolyHelpers:
    def test_poly_probability(self):
        mult = {1: 3, 2: 1}
        g = 0.75
        ref = 3 * (1 - g) * g + (1 - g) ** 2
        assert poly_probability(mult, g, 2) == pytest.approx(ref, rel=1e-15)

    def test_atom_ell_is_min_power(self, scalar_pstar):
        atom = Atom(values=(scalar_pstar,), horizon=5, multiplicity={3: 2, 2: 1, 5: 4})
        assert atom.ell == 2

    def test_min_decay_exponent(self):
        assert min_decay_exponent([4, 7, 5]) == 4
        assert min_decay_exponent([math.inf, 3]) == 3
        with pytest.raises(ValueError):
            min_decay_exponent([])

    def test_impossible_event_has_inf_exponent(self, scalar_model, scalar_pstar):
        dist = finite_dim_exact(scalar_model, scalar_pstar, [3])
        assert dist.event_exponent(lambda vals: False) == math.inf
        assert dist.event_probability(lambda vals: False, 0.7) == 0.0
