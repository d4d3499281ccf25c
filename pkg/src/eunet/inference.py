"""Event-level probability and expected utility on a network.

An event's probability, expected utility, and value are all sums over the
reconstructed joint tables.  Writing S_p(E) for the sum of probability
ratios over E and S_u(E) for the sum of probability-times-utility ratios,

    p(E)      = S_p(E) / S_p(True)
    u_rel(E)  = S_u(E) / S_p(E)        (relative to u at the reference state)
    u_norm(E) = u_rel(E) / u_rel(True) (the sure event is worth exactly 1)
    v(E)      = u_norm(E) p(E) = S_u(E) / S_u(True)

Conditionals divide: p(E|F) = p(EF)/p(F), u(E|F) = u(EF)/u(F), and
v(E|F) = v(EF)/v(F) = u(E|F) p(E|F).  All of it is exact enumeration over
the cached ratio tables, with cylinder events hitting a slicing fast path.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass

from .model import (
    PROB,
    UTIL,
    EmptyEventError,
    EunError,
    Event,
    Network,
    SeparationError,
    ValidationError,
)

__all__ = [
    "MeasureTriple",
    "marginal_p_ratio",
    "marginal_u_ratio",
    "conditional_probability",
    "event_utility",
    "conditional_event_utility",
    "value",
    "utility_bayes",
    "local_conditional_eu",
]

_AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class MeasureTriple:
    """Probability, relative and normalised expected utility, and value."""

    p: float
    u_rel: float
    u_norm: float
    v: float

    @property
    def classification(self) -> str:
        """"good" for u_norm above 1, "bad" below, "neutral" at exactly 1."""
        if self.u_norm > 1.0:
            return "good"
        if self.u_norm < 1.0:
            return "bad"
        return "neutral"


def _event_sums(network: Network, event: Event, state_cap: int | None = None) -> tuple[float, float]:
    """(S_p, S_u) over the event: ratio sums against the reference state."""
    if event.space != network.space:
        raise ValidationError("event belongs to a different variable system")
    pr = network.ratio_tables(PROB, state_cap)
    ur = network.ratio_tables(UTIL, state_cap)
    fixed = event.fixed
    if fixed is not None:
        idx: list[object] = [slice(None)] * len(network.space)
        for ax, v in fixed.items():
            idx[ax] = v
        key = tuple(idx)
        psub = pr[key]
        sp = float(psub.sum())
        su = float((psub * ur[key]).sum())
        return sp, su
    flat = event.flat_indexes()
    if flat.size == 0:
        return 0.0, 0.0
    pvals = pr.reshape(-1)[flat]
    sp = float(pvals.sum())
    su = float((pvals * ur.reshape(-1)[flat]).sum())
    return sp, su


def _require_nonempty(event: Event, role: str) -> None:
    if event.is_empty:
        raise EmptyEventError(f"{role} is empty, the measure is undefined on it")


def marginal_p_ratio(
    network: Network, partial: Mapping[str, str], state_cap: int | None = None
) -> float:
    """Marginal probability of the cylinder on ``partial``, relative to p(x0).

    The sum of joint ratios over all completions of the free variables,
    taken in index order.  An empty partial yields 1 / p(x0).
    """
    event = network.cylinder(partial)
    sp, _ = _event_sums(network, event, state_cap)
    return sp


def marginal_u_ratio(
    network: Network, partial: Mapping[str, str], state_cap: int | None = None
) -> float:
    """Expected utility of the cylinder on ``partial``, relative to u(x0).

    The probability-weighted average of utility ratios over the completions
    of the free variables.  Agreement with the event-level computation is
    checked internally.
    """
    event = network.cylinder(partial)
    sp, su = _event_sums(network, event, state_cap)
    out = su / sp
    direct = event_utility(network, event, state_cap).u_rel
    if abs(out - direct) > _AGREEMENT_TOL * abs(direct):
        raise EunError(
            "internal inconsistency: marginal utility ratio disagrees with the event computation"
        )
    return out


def conditional_probability(
    network: Network,
    e: Event,
    f: Event,
    allow_empty: bool = False,
    state_cap: int | None = None,
) -> float:
    """p(E | F).  The conditioning event must have positive probability.

    An empty intersection is a hard error unless ``allow_empty`` is set, in
    which case the conditional is 0.
    """
    _require_nonempty(f, "conditioning event F")
    ef = e & f
    if ef.is_empty:
        if allow_empty:
            return 0.0
        raise EmptyEventError(
            "E and F do not intersect, conditional probability undefined"
        )
    sp_ef, _ = _event_sums(network, ef, state_cap)
    sp_f, _ = _event_sums(network, f, state_cap)
    return sp_ef / sp_f


def event_utility(network: Network, e: Event, state_cap: int | None = None) -> MeasureTriple:
    """Probability, expected utility, and value of one event.

    ``u_rel`` is relative to the utility of the reference state, ``u_norm``
    rescales so the sure event is worth 1, and ``v = u_norm * p`` is the
    additive value measure.
    """
    _require_nonempty(e, "event E")
    sp, su = _event_sums(network, e, state_cap)
    true_ev = network.true_event()
    sp_t, su_t = _event_sums(network, true_ev, state_cap)
    u_rel = su / sp
    u_norm = u_rel / (su_t / sp_t)
    p = sp / sp_t
    return MeasureTriple(p=p, u_rel=u_rel, u_norm=u_norm, v=su / su_t)


def conditional_event_utility(
    network: Network, e: Event, f: Event, state_cap: int | None = None
) -> float:
    """u(E | F) = u(E and F) / u(F), in the normalisation-free ratio form."""
    _require_nonempty(f, "conditioning event F")
    ef = e & f
    if ef.is_empty:
        raise EmptyEventError("E and F do not intersect, conditional utility undefined")
    sp_ef, su_ef = _event_sums(network, ef, state_cap)
    sp_f, su_f = _event_sums(network, f, state_cap)
    return (su_ef / sp_ef) / (su_f / sp_f)


def value(
    network: Network, e: Event, f: Event | None = None, state_cap: int | None = None
) -> float:
    """v(E) or, given ``f``, the conditional value v(E | F) = v(EF) / v(F)."""
    if f is None:
        return event_utility(network, e, state_cap).v
    _require_nonempty(f, "conditioning event F")
    ef = e & f
    if ef.is_empty:
        raise EmptyEventError("E and F do not intersect, conditional value undefined")
    _, su_ef = _event_sums(network, ef, state_cap)
    _, su_f = _event_sums(network, f, state_cap)
    return su_ef / su_f


def utility_bayes(network: Network, f: Event, e: Event, state_cap: int | None = None) -> float:
    """u(F | E) from the reversed conditionals, the utility analogue of Bayes.

    Combines u(E|F), u(E|not F), the priors u(F), u(not F), and the posterior
    probabilities of F and not F given E.  The result is checked against the
    direct conditional within a tight relative tolerance.
    """
    not_f = ~f
    for name, ev in (("F", f), ("not F", not_f), ("E and F", e & f), ("E and not F", e & not_f)):
        if ev.is_empty:
            raise EmptyEventError(f"{name} is empty, the utility Bayes rule is undefined")

    u_e_given_f = conditional_event_utility(network, e, f, state_cap)
    u_e_given_nf = conditional_event_utility(network, e, not_f, state_cap)
    u_f = event_utility(network, f, state_cap).u_norm
    u_nf = event_utility(network, not_f, state_cap).u_norm
    p_f_given_e = conditional_probability(network, f, e, state_cap=state_cap)
    p_nf_given_e = conditional_probability(network, not_f, e, state_cap=state_cap)

    numerator = u_e_given_f * u_f
    denominator = numerator * p_f_given_e + u_e_given_nf * u_nf * p_nf_given_e
    out = numerator / denominator

    direct = conditional_event_utility(network, f, e, state_cap)
    if abs(out - direct) > _AGREEMENT_TOL * abs(direct):
        raise EunError(
            "internal inconsistency: utility Bayes disagrees with the direct conditional"
        )
    return out


def local_conditional_eu(
    network: Network,
    b: Mapping[str, str],
    a: Mapping[str, str],
    state_cap: int | None = None,
) -> float:
    """u(b | a) through the separator shortcut, touching only A and B.

    Requires the variables of ``a`` to separate the variables of ``b`` from
    everything else in both layers, on a network that passes the
    mantle-consistency check.  Under those conditions the conditional
    expected utility reduces to

        u(b | a) = w(b | a) / sum_b' w(b' | a) p(b' | a)

    where w and q are the two layers' ratio tables over the B block given
    the A block (everything else pinned at reference, which the separation
    makes irrelevant), and p(b|a) is q(b|a) renormalised over the B block.
    The enumeration runs over the B block only.
    """
    b_idx = network.space.partial_indexes(b)
    a_idx = network.space.partial_indexes(a)
    if set(b_idx) & set(a_idx):
        raise ValidationError("the b and a assignments must not share variables")
    if not b_idx:
        raise ValidationError("the b assignment must be non-empty")

    names = network.space.names
    b_vars = {names[i] for i in b_idx}
    a_vars = {names[i] for i in a_idx}
    rest = set(names) - b_vars - a_vars
    if rest:
        for layer in (PROB, UTIL):
            if not network.graph.separating(
                layer, frozenset(b_vars), frozenset(rest), frozenset(a_vars)
            ):
                raise SeparationError(
                    f"the conditioning variables do not separate the target block "
                    f"from the rest in the {layer} layer"
                )
    report = network.imap_report(state_cap=state_cap)
    if not report.ok:
        raise SeparationError(
            "network fails the mantle-consistency check, the local shortcut is undefined on it"
        )

    # Chain products restricted to the A and B blocks.  Variables outside the
    # two blocks sit at their reference values, where their own factors are
    # exactly 1, so they never need touching.
    local = sorted(set(b_idx) | set(a_idx))
    log_pots = {layer: network._log_potentials(layer) for layer in (PROB, UTIL)}
    refs = network.space.reference_indexes

    def block_ratio(layer: str, values: dict[int, int]) -> float:
        total = 0.0
        for i in local:
            axes, logt = log_pots[layer][i]
            total += float(logt[tuple(values.get(ax, refs[ax]) for ax in axes)])
        return math.exp(total)

    b_axes = sorted(b_idx)
    target = tuple(b_idx[ax] for ax in b_axes)
    w_by_combo: dict[tuple[int, ...], float] = {}
    q_by_combo: dict[tuple[int, ...], float] = {}
    for combo in itertools.product(*(range(network.space.shape[ax]) for ax in b_axes)):
        values = dict(a_idx)
        values.update(zip(b_axes, combo))
        w_by_combo[combo] = block_ratio(UTIL, values)
        q_by_combo[combo] = block_ratio(PROB, values)

    q_total = sum(q_by_combo.values())
    denom = sum(
        w_by_combo[c] * q_by_combo[c] / q_total for c in w_by_combo
    )
    return w_by_combo[target] / denom
