"""Decision optimisation, decomposition, relevance classification, and the
sealed-bid auction construction."""

import itertools

import numpy as np
import pytest

import helpers
from eunet import (
    PROB,
    UTIL,
    DecisionProblem,
    EmptyEventError,
    Event,
    ValidationError,
    auction_best_response,
    build_network,
    build_vickrey_auction,
    classify_relevance,
    conditional_event_utility,
    decompose_decisions,
    optimal_decision,
    reconstruct_joint,
)
from eunet.decision import TIE_TOLERANCE


# -- DecisionProblem validation ------------------------------------------------


def test_decision_vars_are_reordered_to_network_order(chain_net):
    prob = DecisionProblem(chain_net, ("X3", "X1"), chain_net.true_event())
    assert prob.decision_vars == ("X1", "X3")


def test_duplicate_decision_vars_rejected(chain_net):
    with pytest.raises(ValidationError, match="duplicate"):
        DecisionProblem(chain_net, ("X1", "X1"), chain_net.true_event())


def test_empty_decision_set_rejected(chain_net):
    with pytest.raises(ValidationError, match="at least one"):
        DecisionProblem(chain_net, (), chain_net.true_event())


def test_unknown_decision_var_rejected(chain_net):
    with pytest.raises(ValidationError, match="unknown"):
        DecisionProblem(chain_net, ("Y9",), chain_net.true_event())


def test_evidence_must_live_in_same_space(chain_net, hw1):
    with pytest.raises(ValidationError, match="different variable system"):
        DecisionProblem(chain_net, ("X1",), hw1.true_event())


def test_empty_evidence_rejected(chain_net):
    empty = chain_net.cylinder({"X1": "1"}) & chain_net.cylinder({"X1": "0"})
    with pytest.raises(EmptyEventError):
        DecisionProblem(chain_net, ("X2",), empty)


def test_evidence_may_not_fix_a_decision_variable(chain_net):
    with pytest.raises(ValidationError, match="fixes decision variable"):
        DecisionProblem(chain_net, ("X1",), chain_net.cylinder({"X1": "1"}))


# -- optimal_decision ---------------------------------------------------------


def test_single_variable_optimum(hw1):
    prob = DecisionProblem(hw1, ("H",), hw1.true_event())
    result = optimal_decision(prob)
    assert result.argmax == ({"H": "1"},)
    assert result.eu == pytest.approx(1.5, rel=1e-12)


def test_optimum_under_evidence(hw2):
    # coupled tables: fixing W changes the best H
    prob = DecisionProblem(hw2, ("H",), hw2.cylinder({"W": "1"}))
    result = optimal_decision(prob)
    want = max(
        conditional_event_utility(
            hw2, hw2.cylinder({"H": h}), hw2.cylinder({"W": "1"})
        )
        for h in ("0", "1")
    )
    assert result.eu == pytest.approx(want, rel=1e-12)


def test_all_constant_network_ties_everything(rng):
    net = helpers.net_of({"A": ("0", "1"), "B": ("0", "1")})
    prob = DecisionProblem(net, ("A", "B"), net.true_event())
    result = optimal_decision(prob)
    assert len(result.argmax) == 4
    assert result.eu == pytest.approx(1.0, rel=1e-12)


def test_argmax_order_is_lexicographic_in_domain_indexes():
    net = helpers.net_of({"A": ("0", "1", "2")})
    prob = DecisionProblem(net, ("A",), net.true_event())
    result = optimal_decision(prob)
    assert result.argmax == ({"A": "0"}, {"A": "1"}, {"A": "2"})


def test_infeasible_combinations_are_skipped():
    net = helpers.net_of(
        {"A": ("0", "1"), "B": ("0", "1")},
        w={"A": {("1",): 2.0}, "B": {("1",): 3.0}},
    )
    # the evidence rules out the jointly best combination (A=1, B=1)
    # without pinning either variable on its own
    keep = Event.from_assignments(
        net.space,
        [{"A": "0", "B": "0"}, {"A": "0", "B": "1"}, {"A": "1", "B": "0"}],
    )
    prob = DecisionProblem(net, ("A", "B"), keep)
    result = optimal_decision(prob)
    assert result.argmax == ({"A": "0", "B": "1"},)
    # u ratios over the evidence average to 2, so the winner's 3 conditions to 1.5
    assert result.eu == pytest.approx(1.5, rel=1e-12)


def test_no_feasible_decision_raises():
    net = helpers.net_of({"A": ("0", "1"), "B": ("0", "1")})
    evidence = Event(net.space, states=frozenset())
    with pytest.raises(EmptyEventError):
        DecisionProblem(net, ("A",), evidence)


def test_argmax_invariant_under_utility_rescaling(rng):
    # utilities enter the model only as ratios against the reference state,
    # so a global rescale of the raw utility table derives the very same
    # potentials, and with them the very same optimum
    from eunet import EUNGraph, Space, VariableSpec, derive_restricted_potentials

    names = ("X1", "X2", "X3")
    specs = [VariableSpec(n, ("0", "1")) for n in names]
    space = Space(specs)
    pairs = list(itertools.combinations(names, 2))
    complete = EUNGraph.of(prob_arcs=pairs, util_arcs=pairs, nodes=names)
    p = helpers.random_positive_table(rng, space.shape)
    u = helpers.random_positive_table(rng, space.shape)

    q_pots = derive_restricted_potentials(p, space, complete, PROB)
    w_base = derive_restricted_potentials(u, space, complete, UTIL)
    w_scaled = derive_restricted_potentials(8.0 * u, space, complete, UTIL)
    for a, b in zip(w_base, w_scaled):
        assert np.array_equal(a.table, b.table)

    net = build_network(specs, names, complete, [*q_pots, *w_base])
    rescaled = build_network(specs, names, complete, [*q_pots, *w_scaled])
    base = optimal_decision(DecisionProblem(net, ("X2",), net.true_event()))
    again = optimal_decision(
        DecisionProblem(rescaled, ("X2",), rescaled.true_event())
    )
    assert again.argmax == base.argmax
    assert again.eu == base.eu


# -- decomposition ------------------------------------------------------------


def test_independent_decisions_split_into_singletons(hw1):
    prob = DecisionProblem(hw1, ("H", "W"), hw1.true_event())
    assert decompose_decisions(prob) == (("H",), ("W",))


def test_coupled_decisions_stay_together(hw2):
    prob = DecisionProblem(hw2, ("H", "W"), hw2.true_event())
    assert decompose_decisions(prob) == (("H", "W"),)


def test_chain_coupling_is_transitive_through_components():
    net = helpers.net_of(
        {"A": ("0", "1"), "B": ("0", "1"), "C": ("0", "1")},
        prob_arcs=[("A", "B"), ("B", "C")],
        q={
            "B": {("1", "0"): 2.0, ("1", "1"): 3.0},
            "C": {("1", "0"): 2.0, ("1", "1"): 5.0},
        },
    )
    prob = DecisionProblem(net, ("A", "C"), net.true_event())
    # B is unobserved, so the A - B - C path couples the two decisions
    assert decompose_decisions(prob) == (("A", "C"),)
    # conditioning on B cuts the path
    assert decompose_decisions(prob, conditioning=("B",)) == (("A",), ("C",))


def test_blockwise_optimisation_agrees_with_joint(rng):
    for _ in range(5):
        net = helpers.random_network(rng, n_vars=5, arc_prob=0.3, same_graphs=True)
        prob = DecisionProblem(net, ("X1", "X4"), net.true_event())
        blocks = decompose_decisions(prob)
        joint = optimal_decision(prob)
        if len(blocks) == 1:
            continue
        combined: dict[str, str] = {}
        for block in blocks:
            sub = optimal_decision(DecisionProblem(net, block, net.true_event()))
            combined.update(sub.argmax[0])
        got = conditional_event_utility(
            net, net.cylinder(combined), net.true_event()
        )
        assert got == pytest.approx(joint.eu, rel=1e-9)


def test_decomposition_blocks_are_sorted_by_network_order():
    net = helpers.net_of(
        {"A": ("0", "1"), "B": ("0", "1"), "C": ("0", "1"), "D": ("0", "1")},
        prob_arcs=[("C", "D")],
        q={"D": {("1", "0"): 2.0, ("1", "1"): 3.0}},
    )
    prob = DecisionProblem(net, ("D", "C", "A"), net.true_event())
    assert decompose_decisions(prob) == (("A",), ("C", "D"))


# -- relevance classification ---------------------------------------------------


def relevance_net():
    """P matters for utility, S only reweights outcomes, N touches nothing."""
    return helpers.net_of(
        {"P": ("0", "1"), "S": ("0", "1"), "N": ("0", "1"), "T": ("0", "1")},
        prob_arcs=[("S", "T")],
        util_arcs=[("P", "T")],
        q={"T": {("1", "0"): 3.0, ("1", "1"): 0.25}},
        w={"T": {("1", "0"): 2.0, ("1", "1"): 4.0}},
    )


def test_relevant_variable():
    net = relevance_net()
    assert classify_relevance(net, ("P",)) == "relevant"


def test_payoff_irrelevant_variable():
    net = relevance_net()
    # S carries no utility weight anywhere but still shapes the distribution
    assert classify_relevance(net, ("S",)) == "payoff-irrelevant"


def test_strategically_irrelevant_variable():
    net = relevance_net()
    assert classify_relevance(net, ("N",)) == "strategically-irrelevant"


def test_strategic_irrelevance_beats_payoff_irrelevance():
    # a variable disconnected from everything is reported by the strongest label
    net = helpers.net_of({"A": ("0", "1"), "B": ("0", "1")})
    assert classify_relevance(net, ("A",)) == "strategically-irrelevant"


def test_conditioning_can_sever_strategic_influence():
    # A carries no utility weight but steers T's distribution through M;
    # once M is observed the remaining influence disappears
    net = helpers.net_of(
        {"A": ("0", "1"), "M": ("0", "1"), "T": ("0", "1")},
        prob_arcs=[("A", "M"), ("M", "T")],
        q={
            "M": {("1", "0"): 2.0, ("1", "1"): 3.0},
            "T": {("1", "0"): 2.0, ("1", "1"): 5.0},
        },
        w={"T": {("1",): 2.0}},
    )
    assert classify_relevance(net, ("A",)) == "payoff-irrelevant"
    assert classify_relevance(net, ("A",), conditioning=("M",)) == (
        "strategically-irrelevant"
    )


def test_classification_validates_inputs(hw1):
    with pytest.raises(ValidationError, match="unknown"):
        classify_relevance(hw1, ("Z",))
    with pytest.raises(ValidationError, match="disjoint|overlap"):
        classify_relevance(hw1, ("H",), conditioning=("H",))


# -- auction construction -------------------------------------------------------


@pytest.fixture(scope="module")
def auction_k2():
    return build_vickrey_auction(2, epsilon=1e-9)


def test_auction_rejects_bad_parameters():
    with pytest.raises(ValidationError, match="at least 2"):
        build_vickrey_auction(1)
    with pytest.raises(ValidationError, match="epsilon"):
        build_vickrey_auction(2, epsilon=0.0)
    with pytest.raises(ValidationError, match="epsilon"):
        build_vickrey_auction(2, epsilon=1e-3)


def test_auction_grid_and_ordering(auction_k2):
    assert auction_k2.grid == ("0", "0.5", "1")
    assert auction_k2.network.ordering == ("V", "B", "S", "C", "A")


def test_auction_grid_label_lookup(auction_k2):
    assert auction_k2.grid_label(0.5) == "0.5"
    assert auction_k2.grid_label("0.5") == "0.5"
    assert auction_k2.grid_label(1) == "1"
    with pytest.raises(ValidationError, match="off-grid"):
        auction_k2.grid_label(0.3)
    with pytest.raises(ValidationError, match="off-grid"):
        auction_k2.grid_label("0.3")


def test_auction_network_is_consistent(auction_k2):
    assert auction_k2.network.imap_report().ok


def test_auction_win_utility_entries(auction_k2):
    net = auction_k2.network
    pot = net.potential(UTIL, "A")
    a_spec = net.space.spec("A")
    v_spec = net.space.spec("V")
    # winning at price 0.5 with value 1: ratio (1+1)/(1+0.5) = 4/3
    row = a_spec.domain.index("1:0.5")
    col = v_spec.domain.index("1")
    assert pot.table[row, col] == (1.0 + 1.0) / (1.0 + 0.5)
    # winning at one's own value is exactly utility-neutral
    for k, label in enumerate(auction_k2.grid):
        assert pot.table[a_spec.domain.index(f"1:{label}"), k] == 1.0
    # losing rows carry no utility weight at all
    for m_label in auction_k2.grid:
        lose = a_spec.domain.index(f"2:{m_label}")
        assert np.all(pot.table[lose, :] == 1.0)


def test_auction_allocation_distribution(auction_k2):
    # p(a | b=0.5, c=0) puts 1-(rows-1)*eps on the win-at-price-0 outcome
    net = auction_k2.network
    joint = reconstruct_joint(net)
    axes = {name: i for i, name in enumerate(net.ordering)}
    b_idx = net.space.spec("B").domain.index("0.5")
    c_idx = net.space.spec("C").domain.index("0")
    p = joint.p.sum(axis=(axes["V"], axes["S"]))  # now indexed (B, C, A)
    row = p[b_idx, c_idx, :]
    row = row / row.sum()
    a_spec = net.space.spec("A")
    win = a_spec.domain.index("1:0")
    eps = auction_k2.epsilon
    rows = len(a_spec.domain)
    assert row[win] == pytest.approx(1.0 - (rows - 1) * eps, rel=1e-9)
    for j in range(rows):
        if j != win:
            assert row[j] == pytest.approx(eps, rel=1e-6)


def test_auction_bidder_wins_ties(auction_k2):
    # equal bid and opposing cost resolve in the bidder's favour
    net = auction_k2.network
    joint = reconstruct_joint(net)
    axes = {name: i for i, name in enumerate(net.ordering)}
    idx = net.space.spec("B").domain.index("0.5")
    c_idx = net.space.spec("C").domain.index("0.5")
    p = joint.p.sum(axis=(axes["V"], axes["S"]))
    row = p[idx, c_idx, :]
    win = net.space.spec("A").domain.index("1:0.5")
    assert row.argmax() == win


def test_auction_truthful_bid_value_half(auction_k2):
    argmax = auction_best_response(auction_k2, 0.5)
    assert argmax == ("0", "0.5")
    assert "0.5" in argmax


def test_auction_truthful_bid_extremes(auction_k2):
    assert auction_best_response(auction_k2, 0.0) == ("0",)
    assert auction_best_response(auction_k2, 1.0) == ("0.5", "1")


def test_auction_eu_ratio_at_value_half(auction_k2):
    # conditional EU of bids 0 and 1 at v=0.5, computed against the
    # tie-breaking structure of the smoothed allocation table
    prob = auction_k2.decision_problem(0.5)
    net = auction_k2.network
    eu = {
        b: conditional_event_utility(
            net, net.cylinder({"B": b}), prob.evidence
        )
        for b in auction_k2.grid
    }
    assert eu["0"] / eu["1"] == pytest.approx(3.5 / 3.25, rel=1e-6)
    assert eu["0"] == pytest.approx(eu["0.5"], rel=1e-6)


def test_auction_argmax_stable_across_epsilon():
    coarse = build_vickrey_auction(3, epsilon=1e-6)
    fine = build_vickrey_auction(3, epsilon=1e-9)
    for v in coarse.grid:
        assert auction_best_response(coarse, v) == auction_best_response(fine, v)


def test_auction_custom_opponent_table():
    g = 4
    rng = np.random.default_rng(7)
    table = rng.uniform(0.05, 1.0, size=(g, g))
    table /= table.sum(axis=1, keepdims=True)
    model = build_vickrey_auction(3, epsilon=1e-9, opponent_bid_table=table)
    for v in model.grid:
        assert v in auction_best_response(model, v)


def test_auction_opponent_table_validation():
    with pytest.raises(ValidationError, match="shape"):
        build_vickrey_auction(2, opponent_bid_table=np.full((2, 2), 0.5))
    bad_rows = np.full((3, 3), 0.5)
    with pytest.raises(ValidationError, match="sum"):
        build_vickrey_auction(2, opponent_bid_table=bad_rows)
    negative = np.full((3, 3), 1.0 / 3.0)
    negative[0, 0] = -1.0 / 3.0
    negative[0, 1] = 1.0
    with pytest.raises(ValidationError, match="positive"):
        build_vickrey_auction(2, opponent_bid_table=negative)


def test_auction_decision_problem_pins_the_value(auction_k2):
    prob = auction_k2.decision_problem(1.0)
    assert prob.decision_vars == ("B",)
    assert prob.evidence.fixed_variables() == {"V": "1"}


def test_tie_tolerance_is_strict_enough():
    assert TIE_TOLERANCE == 1e-9
