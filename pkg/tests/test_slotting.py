import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsdo.core import Layout, Order, RackRow, SlotAssignment, build_route_graph
from wsdo.errors import ValidationError
from wsdo.slotting import (
    Clustering,
    assign_slots,
    build_product_features,
    evaluate_reassignment,
    kmeans_cluster,
    pick_counts,
    slot_depot_distances,
    weighted_mean_depot_distance,
)


def strip_layout(num_slots=4, length=8.0):
    """One rack row along a corridor; depot at the left end."""
    return Layout(
        floor_width=length + 2.0,
        floor_depth=4.0,
        rack_rows=(RackRow(offset=2.0, depth=1.0, length=length, slot_count=num_slots),),
        aisle_widths=(2.0, 1.0),
        depot=(0.5, 0.5),
    )


def orders_from_counts(counts):
    orders = []
    i = 0
    for pid, n in counts.items():
        for _ in range(n):
            orders.append(Order(id=f"O{i:03d}", timestamp=float(i), lines=((pid, 1),)))
            i += 1
    return orders


# ---------------------------------------------------------------- k-means --

class TestKmeans:
    def test_k_equals_n_zero_inertia(self):
        X = np.array([[0.0], [1.0], [5.0], [9.0]])
        result = kmeans_cluster(X, k=4, seed=3)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)
        assert len(set(result.assignment.values())) == 4

    def test_two_well_separated_groups_match_brute_force(self):
        points = [0.0, 0.1, 10.0, 10.1]
        X = np.array(points).reshape(-1, 1)
        result = kmeans_cluster(X, k=2, seed=0)

        # oracle: exhaustive 2-partitions minimizing inertia
        best_inertia, best_parts = None, None
        idx = range(4)
        for size in (1, 2):
            for left in itertools.combinations(idx, size):
                right = tuple(i for i in idx if i not in left)
                inertia = 0.0
                for part in (left, right):
                    vals = np.array([points[i] for i in part])
                    inertia += float(np.sum((vals - vals.mean()) ** 2))
                if best_inertia is None or inertia < best_inertia:
                    best_inertia, best_parts = inertia, (set(left), set(right))
        assert result.inertia == pytest.approx(best_inertia, abs=1e-12)
        groups = {}
        for pid, c in result.assignment.items():
            groups.setdefault(c, set()).add(int(pid))
        assert set(map(frozenset, groups.values())) == set(map(frozenset, best_parts))
        assert sorted(result.centroids.ravel()) == pytest.approx([0.05, 10.05])

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 3))
        a = kmeans_cluster(X, k=4, seed=11)
        b = kmeans_cluster(X, k=4, seed=11)
        assert a.assignment == b.assignment
        assert np.array_equal(a.centroids, b.centroids)

    def test_converged_result_is_fixpoint(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(25, 2))
        result = kmeans_cluster(X, k=3, seed=2)
        d2 = np.sum((X[:, None, :] - result.centroids[None, :, :]) ** 2, axis=2)
        relabeled = np.argmin(d2, axis=1)
        labels = np.array([result.assignment[str(i)] for i in range(25)])
        assert np.array_equal(relabeled, labels)
        # inertia matches its definition
        assert result.inertia == pytest.approx(
            float(np.sum(d2[np.arange(25), labels])), rel=1e-12
        )

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(min_value=2, max_value=5),
        st.integers(min_value=0, max_value=10_000),
        st.integers(min_value=6, max_value=40),
    )
    def test_inertia_history_non_increasing(self, k, seed, n):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 2))
        result = kmeans_cluster(X, k=k, seed=seed)
        hist = result.inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_invalid_k(self):
        X = np.zeros((3, 1))
        with pytest.raises(ValidationError):
            kmeans_cluster(X, k=0, seed=0)
        with pytest.raises(ValidationError):
            kmeans_cluster(X, k=4, seed=0)


# ------------------------------------------------------------ assign_slots --

class TestAssignSlots:
    def test_hot_product_gets_closest_slot(self):
        layout = strip_layout(num_slots=2, length=8.0)
        graph = build_route_graph(layout, 0.5)
        clustering = Clustering(k=1, assignment={"A": 0, "B": 0},
                                centroids=np.zeros((1, 1)), inertia=0.0)
        history = orders_from_counts({"A": 10, "B": 1})
        result = assign_slots(clustering, layout, graph, history)
        dists = slot_depot_distances(layout, graph)
        assert dists[result.slot_of("A")] < dists[result.slot_of("B")]

    def test_equal_frequencies_tie_break_by_product_id(self):
        layout = strip_layout(num_slots=3)
        graph = build_route_graph(layout, 0.5)
        clustering = Clustering(k=1, assignment={"C": 0, "A": 0, "B": 0},
                                centroids=np.zeros((1, 1)), inertia=0.0)
        history = orders_from_counts({"A": 2, "B": 2, "C": 2})
        result = assign_slots(clustering, layout, graph, history)
        dists = slot_depot_distances(layout, graph)
        ranked = sorted(result.mapping, key=lambda p: dists[result.slot_of(p)])
        assert ranked == ["A", "B", "C"]

    def test_hot_cluster_ranked_first(self):
        layout = strip_layout(num_slots=4)
        graph = build_route_graph(layout, 0.5)
        clustering = Clustering(k=2, assignment={"A": 0, "B": 0, "C": 1, "D": 1},
                                centroids=np.zeros((2, 1)), inertia=0.0)
        history = orders_from_counts({"A": 1, "B": 1, "C": 8, "D": 9})
        result = assign_slots(clustering, layout, graph, history)
        dists = slot_depot_distances(layout, graph)
        worst_hot = max(dists[result.slot_of(p)] for p in ("C", "D"))
        best_cold = min(dists[result.slot_of(p)] for p in ("A", "B"))
        assert worst_hot <= best_cold

    def test_beats_random_assignment_on_default_instance(self, default_instance, default_graph):
        features = build_product_features(default_instance.catalog, default_instance.history)
        clustering = kmeans_cluster(features, k=4, seed=7)
        optimized = assign_slots(
            clustering, default_instance.layout, default_graph, default_instance.history
        )
        before = weighted_mean_depot_distance(
            default_instance.assignment, default_graph, default_instance.history
        )
        after = weighted_mean_depot_distance(optimized, default_graph, default_instance.history)
        assert after <= before

    def test_optimal_among_cluster_respecting_assignments(self):
        # brute force over within-cluster slot permutations, <= 6 products
        layout = strip_layout(num_slots=6, length=12.0)
        graph = build_route_graph(layout, 0.5)
        clustering = Clustering(
            k=2,
            assignment={"A": 0, "B": 0, "C": 0, "D": 1, "E": 1, "F": 1},
            centroids=np.zeros((2, 1)), inertia=0.0,
        )
        history = orders_from_counts({"A": 9, "B": 4, "C": 7, "D": 1, "E": 2, "F": 3})
        greedy = assign_slots(clustering, layout, graph, history)
        gm = weighted_mean_depot_distance(greedy, graph, history)

        dists = slot_depot_distances(layout, graph)
        ranked_slots = sorted(layout.slot_ids(), key=lambda s: (dists[s], s))
        hot_block, cold_block = ranked_slots[:3], ranked_slots[3:]
        for hot_perm in itertools.permutations(hot_block):
            for cold_perm in itertools.permutations(cold_block):
                mapping = dict(zip(("A", "B", "C"), hot_perm))
                mapping.update(zip(("D", "E", "F"), cold_perm))
                alt = weighted_mean_depot_distance(SlotAssignment(mapping), graph, history)
                assert gm <= alt + 1e-9


# ---------------------------------------------------- evaluate_reassignment --

def gate_fixture():
    layout = strip_layout(num_slots=4, length=8.0)
    graph = build_route_graph(layout, 0.5)
    history = orders_from_counts({"A": 8, "B": 5, "C": 2, "D": 1})
    dists = slot_depot_distances(layout, graph)
    ranked = sorted(layout.slot_ids(), key=lambda s: (dists[s], s))
    # current: reversed (cold products close); proposed: frequency order
    current = SlotAssignment(dict(zip(("D", "C", "B", "A"), ranked)))
    proposed = SlotAssignment(dict(zip(("A", "B", "C", "D"), ranked)))
    return layout, graph, history, current, proposed


class TestEvaluateReassignment:
    def test_zero_budget_accepts_nothing(self):
        _, graph, history, current, proposed = gate_fixture()
        plan = evaluate_reassignment(current, proposed, history, graph,
                                     move_cost=1.0, budget=0.0)
        assert plan.accepted_moves() == []

    def test_unlimited_budget_free_targets_accepts_all_beneficial(self):
        layout = strip_layout(num_slots=8, length=16.0)
        graph = build_route_graph(layout, 0.5)
        history = orders_from_counts({"A": 6, "B": 3})
        dists = slot_depot_distances(layout, graph)
        ranked = sorted(layout.slot_ids(), key=lambda s: (dists[s], s))
        current = SlotAssignment({"A": ranked[6], "B": ranked[7]})
        proposed = SlotAssignment({"A": ranked[0], "B": ranked[1]})
        plan = evaluate_reassignment(current, proposed, history, graph,
                                     move_cost=1.0, budget=float("inf"))
        assert len(plan.accepted_moves()) == 2
        assert plan.apply(current).mapping == proposed.mapping

    def test_never_accepts_non_positive_benefit(self):
        _, graph, history, current, proposed = gate_fixture()
        # swap direction: moving hot product AWAY from depot has negative benefit
        plan = evaluate_reassignment(proposed, current, history, graph,
                                     move_cost=1.0, budget=float("inf"))
        for move in plan.accepted_moves():
            assert move.benefit > 0.0

    def test_budgeted_pair_against_subset_oracle(self):
        _, graph, history, current, proposed = gate_fixture()
        budget, cost = 2.0, 1.0
        plan = evaluate_reassignment(current, proposed, history, graph,
                                     move_cost=cost, budget=budget)
        accepted = plan.accepted_moves()
        assert len(accepted) <= 2

        candidates = [m for m in plan.moves if m.benefit > 0]
        best = 0.0
        for size in range(1, int(budget / cost) + 1):
            for subset in itertools.combinations(candidates, size):
                for ordering in itertools.permutations(subset):
                    occupied = set(current.mapping.values())
                    total = 0.0
                    ok = True
                    for m in ordering:
                        if m.to_slot in occupied:
                            ok = False
                            break
                        occupied.discard(m.from_slot)
                        occupied.add(m.to_slot)
                        total += m.benefit
                    if ok:
                        best = max(best, total)
        print(f"greedy benefit {plan.total_benefit:.3f} vs oracle optimum {best:.3f}")
        assert plan.total_benefit <= best + 1e-9

    def test_plan_respects_slot_uniqueness(self):
        _, graph, history, current, proposed = gate_fixture()
        plan = evaluate_reassignment(current, proposed, history, graph,
                                     move_cost=1.0, budget=float("inf"))
        after = plan.apply(current)
        slots = list(after.mapping.values())
        assert len(set(slots)) == len(slots)


# ------------------------------------------------------- product features --

class TestProductFeatures:
    def test_standardized_columns(self, small_instance):
        features = build_product_features(small_instance.catalog, small_instance.history)
        assert features.matrix.shape == (len(small_instance.catalog), 3)
        mean = features.matrix.mean(axis=0)
        assert np.max(np.abs(mean)) <= 1e-9
        std = features.matrix.std(axis=0)
        assert np.all((np.abs(std - 1.0) <= 1e-9) | (std <= 1e-9))

    def test_pick_counts_count_lines(self):
        orders = [
            Order(id="a", timestamp=0.0, lines=(("P1", 3), ("P2", 1))),
            Order(id="b", timestamp=1.0, lines=(("P1", 1),)),
        ]
        assert pick_counts(orders) == {"P1": 2, "P2": 1}
