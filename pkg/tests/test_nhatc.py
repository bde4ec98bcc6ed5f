import numpy as np
import pytest

from wsdo.errors import ConfigurationError, ValidationError
from wsdo.nhatc import (
    ActiveSet,
    ContinuousNodeImpl,
    CouplingTerm,
    LinkSpec,
    SubproblemNode,
    augment_objective,
    configure_active_set,
    nhatc_solve,
    solve_node,
)


def quad_node(node_id, center, t_link=None, r_link=None):
    params = {"center": [float(center)]}
    if t_link:
        params["t_idx"] = {t_link: [0]}
    if r_link:
        params["r_idx"] = {r_link: [0]}
    return SubproblemNode(node_id=node_id, kind="quadratic", params=params)


def toy_graph():
    nodes = [quad_node("P1", 2.0, t_link="L"), quad_node("P2", 4.0, r_link="L")]
    links = [LinkSpec(link_id="L", target_node="P1", response_node="P2", dim=1)]
    return nodes, links


# -------------------------------------------------------- augment_objective --

class TestAugmentObjective:
    def test_zero_coupling_returns_raw_objective(self):
        f = lambda x: float(x[0] ** 2 + 1.0)
        penalized = augment_objective(f, [CouplingTerm(c=[0.0], v=[0.0], w=[1.0])])
        x = np.array([3.0])
        assert penalized(x) == f(x)

    def test_quadratic_term_value(self):
        penalized = augment_objective(lambda x: 0.0,
                                      [CouplingTerm(c=[2.0], v=[0.0], w=[1.0])])
        assert penalized(np.zeros(1)) == pytest.approx(4.0)

    def test_doubling_w_quadruples_quadratic_term(self):
        base = augment_objective(lambda x: 0.0,
                                 [CouplingTerm(c=[3.0], v=[0.0], w=[1.0])])
        doubled = augment_objective(lambda x: 0.0,
                                    [CouplingTerm(c=[3.0], v=[0.0], w=[2.0])])
        assert doubled(np.zeros(1)) == pytest.approx(4.0 * base(np.zeros(1)))

    def test_linear_term(self):
        penalized = augment_objective(lambda x: 0.0,
                                      [CouplingTerm(c=[2.0], v=[3.0], w=[0.0])])
        assert penalized(np.zeros(1)) == pytest.approx(6.0)

    def test_dimension_mismatch_raises(self):
        penalized = augment_objective(lambda x: 0.0,
                                      [CouplingTerm(c=[1.0, 2.0], v=[0.0], w=[1.0])])
        with pytest.raises(ValidationError):
            penalized(np.zeros(1))


# -------------------------------------------------------------- solve_node --

class TestSolveNode:
    def test_no_neighbors_plain_local_solve(self):
        node = quad_node("P", 2.0)
        result = solve_node(node, incoming={}, penalties={})
        assert result.x == pytest.approx([2.0], abs=1e-7)
        assert result.objective == pytest.approx(0.0, abs=1e-12)

    def test_consistent_target_keeps_optimum(self):
        node = quad_node("P", 2.0, r_link="L")
        result = solve_node(node, incoming={"L": [2.0]},
                            penalties={"L": {"v": [0.0], "w": [1.0], "scale": 1.0}})
        assert result.x == pytest.approx([2.0], abs=1e-7)

    def test_pulling_target_shifts_optimum(self):
        # min (x-2)^2 + (4-x)^2  ->  x = 3
        node = quad_node("P", 2.0, r_link="L")
        result = solve_node(node, incoming={"L": [4.0]},
                            penalties={"L": {"v": [0.0], "w": [1.0], "scale": 1.0}})
        assert result.x == pytest.approx([3.0], abs=1e-7)
        assert result.values["L"] == pytest.approx([3.0], abs=1e-7)


# -------------------------------------------------------------- nhatc_solve --

class TestNhatcSolve:
    def test_two_node_toy_converges_to_all_at_once_optimum(self):
        nodes, links = toy_graph()
        report = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=50)
        assert report.converged
        assert report.iterations <= 50
        assert report.c_inf_history[-1] <= 1e-4
        z1 = report.final_x["P1"][0]
        z2 = report.final_x["P2"][0]
        assert z1 == pytest.approx(3.0, abs=1e-3)
        assert z2 == pytest.approx(3.0, abs=1e-3)

    def test_single_node_graph_one_iteration(self):
        report = nhatc_solve([quad_node("P", 5.0)], [], tol_c=1e-6, max_outer=10)
        assert report.converged
        assert report.iterations == 1
        assert report.c_inf_history == [0.0]
        assert report.final_x["P"] == pytest.approx([5.0], abs=1e-7)

    def test_already_consistent_fixpoint(self):
        nodes = [quad_node("A", 3.0, t_link="L"), quad_node("B", 3.0, r_link="L")]
        links = [LinkSpec("L", "A", "B", dim=1)]
        report = nhatc_solve(nodes, links, tol_c=1e-6, max_outer=20)
        assert report.converged and report.iterations == 1
        final = report.links[0]
        assert final["w"] == [1.0]          # no penalty growth
        assert final["v"] == [0.0]

    def test_weight_monotone_and_v_update_replayable(self):
        # asymmetric curvatures force several iterations
        p1 = SubproblemNode(node_id="P1", kind="quadratic",
                            params={"center": [0.0], "t_idx": {"L": [0]}})
        p1.build_impl()
        p1.impl.objective = lambda x: float(3.0 * x[0] ** 2)
        p1.impl.gradient = lambda x: np.array([6.0 * x[0]])
        p2 = quad_node("P2", 8.0, r_link="L")
        links = [LinkSpec("L", "P1", "P2", dim=1)]
        report = nhatc_solve([p1, p2], links, tol_c=1e-5, max_outer=60)
        assert report.converged
        # all-at-once optimum of 3z^2 + (z-8)^2 is z = 2
        assert report.final_x["P1"][0] == pytest.approx(2.0, abs=1e-2)
        states = report.link_state_history["L"]
        ws = [s["w"][0] for s in states]
        assert all(b >= a for a, b in zip(ws, ws[1:]))
        for prev, nxt in zip(states, states[1:]):
            expected_v = prev["v"][0] + 2.0 * prev["w"][0] ** 2 * prev["c"][0]
            assert nxt["v"][0] == pytest.approx(expected_v, rel=1e-12, abs=1e-12)

    def test_sign_convention_swap_same_solution(self):
        nodes = [quad_node("P1", 2.0, r_link="L"), quad_node("P2", 4.0, t_link="L")]
        links = [LinkSpec("L", target_node="P2", response_node="P1", dim=1)]
        report = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=50)
        assert report.converged
        assert report.final_x["P1"][0] == pytest.approx(3.0, abs=1e-3)
        assert report.final_x["P2"][0] == pytest.approx(3.0, abs=1e-3)

    def test_link_scale_normalizes_convergence_norm(self):
        nodes = [quad_node("P1", 200.0, t_link="L"), quad_node("P2", 400.0, r_link="L")]
        links = [LinkSpec("L", "P1", "P2", dim=1, scale=100.0)]
        report = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=80)
        assert report.converged
        assert report.final_x["P1"][0] == pytest.approx(300.0, abs=0.1)


# -------------------------------------------------------------- active set --

class TestActiveSet:
    def test_all_active_is_noop_subset(self):
        nodes, links = toy_graph()
        active = configure_active_set(nodes, links, ["P1", "P2"])
        report_sub = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=50, active=active)
        nodes2, links2 = toy_graph()
        report_full = nhatc_solve(nodes2, links2, tol_c=1e-4, max_outer=50)
        assert report_sub.final_x == report_full.final_x
        assert report_sub.c_inf_history == report_full.c_inf_history

    def test_frozen_response_acts_as_constraint(self):
        nodes, links = toy_graph()
        active = configure_active_set(nodes, links, ["P1"],
                                      frozen_values={"L": {"r": [4.0]}})
        report = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=60, active=active)
        assert report.converged
        # P1 is pulled onto the frozen response
        assert report.final_x["P1"][0] == pytest.approx(4.0, abs=1e-3)
        assert report.final_x["P2"] is None
        assert report.node_status["P2"][-1] == "frozen"

    def test_missing_frozen_value_raises(self):
        nodes, links = toy_graph()
        with pytest.raises(ConfigurationError, match="frozen"):
            configure_active_set(nodes, links, ["P1"])

    def test_frozen_target_link_not_measured(self):
        nodes, links = toy_graph()
        active = configure_active_set(nodes, links, ["P2"],
                                      frozen_values={"L": {"t": [2.0]}})
        report = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=10, active=active)
        assert report.measured_links == []
        assert report.converged          # nothing measurable left open
        # frozen target still steers the active responder through the penalty
        assert 2.0 < report.final_x["P2"][0] <= 4.0

    def test_unknown_active_id_rejected(self):
        nodes, links = toy_graph()
        with pytest.raises(ConfigurationError):
            configure_active_set(nodes, links, ["nope"])


class TestReportShape:
    def test_report_serializable_and_sectioned(self):
        import json

        nodes, links = toy_graph()
        report = nhatc_solve(nodes, links, tol_c=1e-4, max_outer=50)
        doc = report.to_dict()
        assert set(doc) == {"numerics", "meta"}
        assert "wall_time_s" in doc["meta"]
        assert "c_inf_history" in doc["numerics"]
        json.dumps(doc)   # must be JSON clean
