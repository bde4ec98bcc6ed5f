import numpy as np
import pytest

from wsdo.core import Layout, Order, RackRow, SimParams, SlotAssignment
from wsdo.errors import DegenerateLabelsError, InfeasibleParallelismError, ValidationError
from wsdo.order_class import (
    OrderFeatures,
    TrainingSample,
    bootstrap_labels,
    build_picklists,
    featurize_order,
    hinge_objective,
    parallelism_limit,
    svm_train,
    svm_update,
)
from wsdo.slotting import Clustering


def clustering_of(mapping, k):
    return Clustering(k=k, assignment=dict(mapping),
                      centroids=np.zeros((k, 1)), inertia=0.0)


def order_of(lines, oid="O1"):
    return Order(id=oid, timestamp=0.0, lines=tuple(lines))


SEPARABLE = (
    [((0.0, 0.0), 0), ((0.0, 1.0), 0), ((5.0, 5.0), 1), ((5.0, 6.0), 1)]
)


# -------------------------------------------------------------- featurize --

class TestFeaturizeOrder:
    def test_single_cluster_block(self):
        clustering = clustering_of({"A": 2, "B": 2, "C": 2}, k=4)
        feats = featurize_order(order_of([("A", 1), ("B", 2), ("C", 1)]), clustering)
        assert feats.cluster_block == (0.0, 0.0, 1.0, 0.0)
        assert feats.total_lines == 3.0

    def test_identical_line_multisets_identical_features(self):
        clustering = clustering_of({"A": 0, "B": 1}, k=2)
        f1 = featurize_order(order_of([("A", 1), ("B", 3)], "O1"), clustering)
        f2 = featurize_order(order_of([("A", 1), ("B", 3)], "O2"), clustering)
        assert f1.vector == f2.vector

    def test_even_split_normalized(self):
        clustering = clustering_of({"A": 0, "B": 0, "C": 1, "D": 1}, k=4)
        feats = featurize_order(
            order_of([("A", 1), ("B", 1), ("C", 1), ("D", 1)]), clustering
        )
        assert feats.cluster_block == (0.5, 0.5, 0.0, 0.0)

    def test_quantity_scaling_leaves_features_unchanged(self):
        clustering = clustering_of({"A": 0, "B": 1}, k=2)
        base = featurize_order(order_of([("A", 1), ("B", 2)]), clustering)
        scaled = featurize_order(order_of([("A", 5), ("B", 10)]), clustering)
        assert base.vector == scaled.vector

    def test_unclustered_product_rejected(self):
        clustering = clustering_of({"A": 0}, k=1)
        with pytest.raises(ValidationError):
            featurize_order(order_of([("Z", 1)]), clustering)

    def test_bootstrap_labels_dominant_cluster(self):
        clustering = clustering_of({"A": 0, "B": 1, "C": 1}, k=2)
        orders = [
            order_of([("A", 1)], "O1"),
            order_of([("B", 1), ("C", 1)], "O2"),
            order_of([("A", 1), ("B", 1)], "O3"),  # tie: smaller cluster wins
        ]
        assert bootstrap_labels(orders, clustering) == [0, 1, 0]


# -------------------------------------------------------------- svm_train --

class TestSvmTrain:
    def test_separable_fixture_perfect_accuracy(self):
        model = svm_train(SEPARABLE, C=1.0, epochs=80, seed=0)
        assert model.accuracy(SEPARABLE) == 1.0

    def test_margin_exists_for_fixture(self):
        model = svm_train(SEPARABLE, C=10.0, epochs=200, seed=1)
        for x, y in SEPARABLE:
            scores = model.decision_values(x)
            assert model.labels[int(np.argmax(scores))] == y

    def test_duplicated_samples_same_predictions(self):
        model1 = svm_train(SEPARABLE, C=1.0, epochs=80, seed=0)
        model2 = svm_train(SEPARABLE * 2, C=1.0, epochs=80, seed=0)
        for x, _ in SEPARABLE:
            assert model1.predict(x) == model2.predict(x)

    def test_best_iterate_beats_zero_initializer(self):
        rng = np.random.default_rng(3)
        samples = [(tuple(rng.normal(size=3)), int(rng.integers(0, 2))) for _ in range(40)]
        model = svm_train(samples, C=0.5, epochs=30, seed=2)
        X = np.vstack([np.asarray(x) for x, _ in samples])
        lam = 1.0 / 0.5
        for li, label in enumerate(model.labels):
            y = np.where(np.asarray([s[1] for s in samples]) == label, 1.0, -1.0)
            obj = hinge_objective(model.weights[li], float(model.biases[li]), X, y, lam)
            zero = hinge_objective(np.zeros(3), 0.0, X, y, lam)
            assert obj <= zero + 1e-12

    def test_single_category_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            svm_train([((0.0, 0.0), 1), ((1.0, 1.0), 1)])

    def test_deterministic_per_seed(self):
        m1 = svm_train(SEPARABLE, C=1.0, epochs=40, seed=9)
        m2 = svm_train(SEPARABLE, C=1.0, epochs=40, seed=9)
        assert np.array_equal(m1.weights, m2.weights)
        assert np.array_equal(m1.biases, m2.biases)

    def test_json_round_trip_lossless(self):
        model = svm_train(SEPARABLE, C=1.0, epochs=40, seed=4)
        back = model.__class__.from_json(model.to_json())
        assert np.array_equal(back.weights, model.weights)
        assert np.array_equal(back.biases, model.biases)
        assert back.to_json() == model.to_json()


# ------------------------------------------------------------- svm_update --

def stream_samples(n, seed, t0=0.0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = int(rng.integers(0, 2))
        center = (0.0, 0.0) if label == 0 else (6.0, 6.0)
        x = tuple(np.asarray(center) + rng.normal(scale=0.3, size=2))
        out.append(TrainingSample(vector=x, label=label, timestamp=t0 + i))
    return out


class TestSvmUpdate:
    def test_empty_batch_is_noop(self):
        window = stream_samples(6, 1)
        model = svm_train([(s.vector, s.label) for s in window], epochs=30, seed=0)
        updated, new_window = svm_update(model, window, [])
        assert updated is model
        assert new_window == window

    def test_fifo_eviction(self):
        window = stream_samples(4, 2)
        model = svm_train([(s.vector, s.label) for s in window], epochs=30, seed=0)
        extra = stream_samples(2, 3, t0=100.0)
        _, new_window = svm_update(model, window, extra, window_capacity=4)
        assert len(new_window) == 4
        assert new_window[:2] == window[2:]
        assert new_window[2:] == extra
        _, w2 = svm_update(model, window, extra, window_capacity=10)
        assert len(w2) == 6

    def test_window_metadata_tracks_timestamps(self):
        window = stream_samples(4, 2)
        model = svm_train([(s.vector, s.label) for s in window], epochs=30, seed=0)
        extra = stream_samples(3, 3, t0=50.0)
        updated, merged = svm_update(model, window, extra, window_capacity=5)
        assert updated.oldest_timestamp == merged[0].timestamp
        assert updated.newest_timestamp == 52.0
        assert updated.window_size == 5
        assert updated.updates == 1

    def test_retrain_accuracy_matches_scratch(self):
        window = stream_samples(24, 5)
        model = svm_train([(s.vector, s.label) for s in window], epochs=60, seed=0)
        batch = stream_samples(12, 6, t0=200.0)
        updated, merged = svm_update(model, window, batch, window_capacity=30)
        scratch = svm_train([(s.vector, s.label) for s in merged], epochs=60, seed=0)
        pairs = [(s.vector, s.label) for s in merged]
        acc_updated = updated.accuracy(pairs)
        acc_scratch = scratch.accuracy(pairs)
        assert acc_updated >= 0.9
        assert abs(acc_updated - acc_scratch) <= 0.02

    def test_unseen_category_expands_label_set(self):
        window = stream_samples(8, 7)
        model = svm_train([(s.vector, s.label) for s in window], epochs=30, seed=0)
        novel = [TrainingSample(vector=(12.0, -3.0), label=7, timestamp=999.0)]
        updated, _ = svm_update(model, window, novel, window_capacity=20)
        assert 7 in updated.labels


# ---------------------------------------------------------- build_picklists --

def picklist_fixture(aisle=2.4, max_carts=3):
    layout = Layout(
        floor_width=10.0,
        floor_depth=6.0,
        rack_rows=(RackRow(offset=aisle, depth=1.0, length=6.0, slot_count=6),),
        aisle_widths=(aisle, 6.0 - aisle - 1.0),
        depot=(5.0, 0.5),
    )
    params = SimParams(picker_speed=1.0, handle_time=5.0, cart_width=1.0,
                       shift_length=8.0, clearance_coeff=0.01, cell_size=0.5,
                       max_carts=max_carts)
    clustering = clustering_of({"A": 0, "B": 1}, k=2)
    assignment = SlotAssignment({"A": "r0s0", "B": "r0s5"})
    samples = [((1.0, 0.0, 1.0), 0), ((0.0, 1.0, 1.0), 1),
               ((0.9, 0.1, 2.0), 0), ((0.1, 0.9, 2.0), 1)]
    model = svm_train(samples, C=1.0, epochs=60, seed=0)
    return layout, params, clustering, assignment, model


class TestBuildPicklists:
    def test_zero_orders_empty(self):
        layout, params, clustering, assignment, model = picklist_fixture()
        batches, dispatch = build_picklists([], model, clustering, assignment,
                                            None, params, layout)
        assert batches == [] and dispatch == []

    def test_parallelism_formula(self):
        layout, params, *_ = picklist_fixture(aisle=2.4, max_carts=3)
        assert parallelism_limit(layout, params) == 2

    def test_parallelism_zero_raises(self):
        layout, params, clustering, assignment, model = picklist_fixture(aisle=0.9)
        orders = [order_of([("A", 1)], "O1")]
        with pytest.raises(InfeasibleParallelismError):
            build_picklists(orders, model, clustering, assignment, None, params, layout)

    def test_single_category_batch_sizes(self):
        layout, params, clustering, assignment, model = picklist_fixture()
        orders = [order_of([("A", 1)], f"O{i}") for i in range(12)]
        batches, dispatch = build_picklists(orders, model, clustering, assignment,
                                            None, params, layout, batch_cap=5)
        assert [len(b.order_ids) for b in batches] == [5, 5, 2]
        assert dispatch == [0, 1, 2]

    def test_every_order_in_exactly_one_batch(self):
        layout, params, clustering, assignment, model = picklist_fixture()
        orders = [order_of([("A", 1)] if i % 3 else [("B", 1)], f"O{i}")
                  for i in range(17)]
        batches, _ = build_picklists(orders, model, clustering, assignment,
                                     None, params, layout, batch_cap=4)
        seen = [oid for b in batches for oid in b.order_ids]
        assert sorted(seen) == sorted(o.id for o in orders)
        assert len(set(seen)) == len(seen)

    def test_same_category_batches_consecutive(self):
        layout, params, clustering, assignment, model = picklist_fixture()
        orders = []
        for i in range(10):
            pid = "A" if i % 2 == 0 else "B"
            orders.append(order_of([(pid, 1)], f"O{i}"))
        batches, _ = build_picklists(orders, model, clustering, assignment,
                                     None, params, layout, batch_cap=2)
        cats = [b.category for b in batches]
        assert cats == sorted(cats)

    def test_cart_index_below_limit(self):
        layout, params, clustering, assignment, model = picklist_fixture()
        P = parallelism_limit(layout, params)
        orders = [order_of([("A", 1)], f"O{i}") for i in range(9)]
        batches, _ = build_picklists(orders, model, clustering, assignment,
                                     None, params, layout, batch_cap=1)
        assert all(0 <= b.cart_index < P for b in batches)

    def test_scale_consistency_of_classification(self):
        layout, params, clustering, assignment, model = picklist_fixture()
        o1 = order_of([("A", 1), ("B", 1)], "O1")
        o2 = order_of([("A", 7), ("B", 7)], "O2")
        f1 = featurize_order(o1, clustering)
        f2 = featurize_order(o2, clustering)
        assert f1.cluster_block == f2.cluster_block
        assert model.predict(f1) == model.predict(f2)
