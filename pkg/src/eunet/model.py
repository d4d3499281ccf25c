"""Core model for expected utility networks.

An expected utility network is an undirected graph over a finite, ordered set
of discrete variables, with two independent arc layers: one for probability
("prob") and one for utility ("util").  Each variable carries one positive
ratio table per layer.  The table for variable ``i`` in a layer stores the
ceteris paribus ratio of the joint measure when ``i`` moves away from its
reference value, conditioned on the values of the below-index neighbours of
``i`` in that layer, with every above-index neighbour pinned at its reference
value.  The product of the per-variable tables along the ordering recovers
the joint measure up to the value it takes at the global reference state, so
a network is a compact, strictly positive parameterisation of a probability
measure and a utility function at once.

Everything in this module is exact enumeration at desk scale.  Enumerating a
state space is guarded by a cap (default one million states, overridable via
the ``EUN_STATE_CAP`` environment variable or per call).  Networks are
immutable once built; all reads are pure and cached reads are safe under
concurrent initialisation.
"""

from __future__ import annotations

import itertools
import math
import os
import threading
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "PROB",
    "UTIL",
    "LAYERS",
    "DEFAULT_STATE_CAP",
    "STATE_CAP_ENV",
    "EunError",
    "ValidationError",
    "StateCapError",
    "EmptyEventError",
    "SeparationError",
    "VariableSpec",
    "EUNGraph",
    "RestrictedPotential",
    "Space",
    "Assignment",
    "Event",
    "Network",
    "ReconstructedJoint",
    "MantlePotential",
    "ImapViolation",
    "ImapReport",
    "build_network",
    "joint_ratio",
    "reconstruct_joint",
    "full_mantle_potential",
    "validate_imap",
    "derive_restricted_potentials",
    "resolve_state_cap",
]

PROB = "prob"
UTIL = "util"
LAYERS = (PROB, UTIL)

DEFAULT_STATE_CAP = 1_000_000
STATE_CAP_ENV = "EUN_STATE_CAP"


class EunError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(EunError, ValueError):
    """A network, document, or argument failed structural validation."""


class StateCapError(EunError):
    """An operation would enumerate more states than the configured cap."""


class EmptyEventError(EunError, ValueError):
    """An event operation required a non-empty event or intersection."""


class SeparationError(EunError, ValueError):
    """A graph-separation precondition does not hold."""


def resolve_state_cap(cap: int | None = None) -> int:
    """Return the effective state cap: explicit value, else env var, else default."""
    if cap is not None:
        if cap < 1:
            raise ValidationError("state cap must be a positive integer")
        return int(cap)
    raw = os.environ.get(STATE_CAP_ENV)
    if raw is not None:
        try:
            value = int(raw)
        except ValueError as exc:
            raise ValidationError(f"{STATE_CAP_ENV} must be an integer, got {raw!r}") from exc
        if value < 1:
            raise ValidationError(f"{STATE_CAP_ENV} must be positive, got {value}")
        return value
    return DEFAULT_STATE_CAP


def _check_layer(layer: str) -> str:
    if layer not in LAYERS:
        raise ValidationError(f"unknown layer {layer!r}, expected one of {LAYERS}")
    return layer


@dataclass(frozen=True)
class VariableSpec:
    """A discrete variable: name, ordered domain labels, and reference label.

    The reference label defaults to the first domain label.  Domains of size
    one are rejected, a variable that cannot move carries no information.
    """

    name: str
    domain: tuple[str, ...]
    reference: str | None = None

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise ValidationError("variable name must be a non-empty string")
        domain = tuple(self.domain)
        object.__setattr__(self, "domain", domain)
        if len(domain) < 2:
            raise ValidationError(f"variable {self.name!r}: domain must have at least 2 values")
        if len(set(domain)) != len(domain):
            raise ValidationError(f"variable {self.name!r}: domain labels must be unique")
        if any(not isinstance(v, str) or not v for v in domain):
            raise ValidationError(f"variable {self.name!r}: domain labels must be non-empty strings")
        ref = self.reference if self.reference is not None else domain[0]
        if ref not in domain:
            raise ValidationError(
                f"variable {self.name!r}: reference value {ref!r} absent from domain"
            )
        object.__setattr__(self, "reference", ref)

    @property
    def size(self) -> int:
        return len(self.domain)

    @property
    def reference_index(self) -> int:
        return self.domain.index(self.reference)

    def value_index(self, label: str) -> int:
        try:
            return self.domain.index(label)
        except ValueError:
            raise ValidationError(
                f"variable {self.name!r}: assignment value {label!r} outside domain {self.domain}"
            ) from None


def _normalize_arc(pair: Sequence[str]) -> tuple[str, str]:
    a, b = pair
    if a == b:
        raise ValidationError(f"self-loop arc on {a!r} is not allowed")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class EUNGraph:
    """Two undirected arc layers over a shared node set.

    Arcs are stored as sorted name pairs.  ``nodes`` lists every node the
    graph knows about, including isolated ones; arc endpoints are always
    members.
    """

    prob_arcs: frozenset[tuple[str, str]]
    util_arcs: frozenset[tuple[str, str]]
    nodes: frozenset[str]

    @classmethod
    def of(
        cls,
        prob_arcs: Iterable[Sequence[str]] = (),
        util_arcs: Iterable[Sequence[str]] = (),
        nodes: Iterable[str] = (),
    ) -> "EUNGraph":
        p = frozenset(_normalize_arc(a) for a in prob_arcs)
        u = frozenset(_normalize_arc(a) for a in util_arcs)
        ns = set(nodes)
        for x, y in itertools.chain(p, u):
            ns.add(x)
            ns.add(y)
        return cls(p, u, frozenset(ns))

    def arcs(self, layer: str) -> frozenset[tuple[str, str]]:
        _check_layer(layer)
        return self.prob_arcs if layer == PROB else self.util_arcs

    def neighbors(self, layer: str, name: str) -> frozenset[str]:
        if name not in self.nodes:
            raise ValidationError(f"unknown variable {name!r} in graph query")
        out = set()
        for x, y in self.arcs(layer):
            if x == name:
                out.add(y)
            elif y == name:
                out.add(x)
        return frozenset(out)

    def _adjacency(self, layer: str) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for x, y in self.arcs(layer):
            adj[x].add(y)
            adj[y].add(x)
        return adj

    def separating(
        self,
        layer: str,
        a: frozenset[str],
        b: frozenset[str],
        c: frozenset[str],
    ) -> bool:
        """Breadth-first check that every path from ``a`` to ``b`` meets ``c``.

        Assumes the three sets are validated elsewhere (disjoint, known names).
        """
        adj = self._adjacency(layer)
        seen = set(a)
        frontier = list(a)
        while frontier:
            node = frontier.pop()
            for nxt in adj[node]:
                if nxt in c or nxt in seen:
                    continue
                if nxt in b:
                    return False
                seen.add(nxt)
                frontier.append(nxt)
        return True


class RestrictedPotential:
    """One variable's ceteris paribus ratio table in one layer.

    ``table`` has one axis for the variable itself followed by one axis per
    below-index neighbour (the ``parents``), in ordering index order.  Rows
    where the variable sits at its reference value are identically 1, every
    entry is strictly positive and finite, and the table covers the full
    cross product of the domains involved.
    """

    __slots__ = ("var", "layer", "parents", "table")

    def __init__(
        self,
        var: str,
        layer: str,
        parents: tuple[str, ...],
        table: np.ndarray,
        *,
        reference_index: int | None = None,
    ) -> None:
        _check_layer(layer)
        arr = np.asarray(table, dtype=float)
        if arr.ndim != 1 + len(parents):
            raise ValidationError(
                f"potential for {var!r}/{layer}: table has {arr.ndim} axes, "
                f"expected {1 + len(parents)} (variable plus parents)"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"potential for {var!r}/{layer}: non-finite entry")
        if not np.all(arr > 0.0):
            raise ValidationError(f"potential for {var!r}/{layer}: non-positive potential entry")
        if reference_index is not None:
            ref_slice = arr[reference_index]
            if not np.all(ref_slice == 1.0):
                raise ValidationError(
                    f"potential for {var!r}/{layer}: non-unit reference row "
                    f"(entries at the reference value must equal 1 exactly)"
                )
        arr = arr.copy()
        arr.flags.writeable = False
        self.var = var
        self.layer = layer
        self.parents = tuple(parents)
        self.table = arr

    @classmethod
    def _unchecked(
        cls, var: str, layer: str, parents: tuple[str, ...], table: np.ndarray
    ) -> "RestrictedPotential":
        # Validation bypass for internal experiments (scaled tables etc).
        obj = object.__new__(cls)
        arr = np.asarray(table, dtype=float).copy()
        arr.flags.writeable = False
        obj.var = var
        obj.layer = layer
        obj.parents = tuple(parents)
        obj.table = arr
        return obj

    @classmethod
    def identity(
        cls, spec: VariableSpec, parent_specs: Sequence[VariableSpec], layer: str
    ) -> "RestrictedPotential":
        shape = (spec.size,) + tuple(p.size for p in parent_specs)
        return cls(
            spec.name,
            layer,
            tuple(p.name for p in parent_specs),
            np.ones(shape),
            reference_index=spec.reference_index,
        )

    @classmethod
    def from_entries(
        cls,
        spec: VariableSpec,
        parent_specs: Sequence[VariableSpec],
        layer: str,
        entries: Mapping[tuple[str, ...], float],
    ) -> "RestrictedPotential":
        """Build a table from ``(value, *parent_values) -> ratio`` entries.

        Rows for the reference value of the variable may be omitted, they are
        implied to be 1.  Every non-reference row must be present.
        """
        shape = (spec.size,) + tuple(p.size for p in parent_specs)
        table = np.full(shape, np.nan)
        table[spec.reference_index] = 1.0
        for key, ratio in entries.items():
            key = tuple(key)
            if len(key) != 1 + len(parent_specs):
                raise ValidationError(
                    f"potential for {spec.name!r}/{layer}: entry key {key!r} has wrong arity"
                )
            vi = spec.value_index(key[0])
            pis = tuple(p.value_index(k) for p, k in zip(parent_specs, key[1:]))
            if vi == spec.reference_index and float(ratio) != 1.0:
                raise ValidationError(
                    f"potential for {spec.name!r}/{layer}: non-unit reference row "
                    f"(entry {key!r} must be 1, got {ratio!r})"
                )
            table[(vi,) + pis] = float(ratio)
        if np.any(np.isnan(table)):
            raise ValidationError(
                f"potential for {spec.name!r}/{layer}: potential table incomplete "
                f"(missing rows for some value combination)"
            )
        return cls(
            spec.name, layer, tuple(p.name for p in parent_specs), table,
            reference_index=spec.reference_index,
        )

    def value(self, value_label: str, parent_labels: Mapping[str, str], space: "Space") -> float:
        """Look one entry up by labels.  Convenience for tests and debugging."""
        spec = space.spec(self.var)
        vi = spec.value_index(value_label)
        pis = tuple(
            space.spec(p).value_index(parent_labels[p]) for p in self.parents
        )
        return float(self.table[(vi,) + pis])

    def __repr__(self) -> str:  # pragma: no cover
        return f"RestrictedPotential({self.var!r}, {self.layer!r}, parents={self.parents!r})"


class Space:
    """The ordered variable system a network (and its events) lives on."""

    __slots__ = ("specs", "names", "shape", "reference_indexes", "_index")

    def __init__(self, specs: Sequence[VariableSpec]) -> None:
        specs = tuple(specs)
        names = tuple(s.name for s in specs)
        if len(set(names)) != len(names):
            raise ValidationError("variable names must be unique")
        self.specs = specs
        self.names = names
        self.shape = tuple(s.size for s in specs)
        self.reference_indexes = tuple(s.reference_index for s in specs)
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self) -> int:
        return len(self.specs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Space):
            return NotImplemented
        return self.specs == other.specs

    def __hash__(self) -> int:
        return hash(self.specs)

    @property
    def state_count(self) -> int:
        return math.prod(self.shape)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown variable {name!r}") from None

    def spec(self, name: str) -> VariableSpec:
        return self.specs[self.index(name)]

    def partial_indexes(self, partial: Mapping[str, str]) -> dict[int, int]:
        """Map a name->label partial assignment to axis->value-index form."""
        out: dict[int, int] = {}
        for name, label in partial.items():
            i = self.index(name)
            out[i] = self.specs[i].value_index(label)
        return out

    def assignment(self, values: Mapping[str, str]) -> "Assignment":
        """Build a full assignment from a name->label mapping."""
        if set(values) != set(self.names):
            missing = set(self.names) - set(values)
            extra = set(values) - set(self.names)
            parts = []
            if missing:
                parts.append(f"missing {sorted(missing)}")
            if extra:
                parts.append(f"unknown {sorted(extra)}")
            raise ValidationError("assignment does not cover the variables: " + ", ".join(parts))
        idx = tuple(self.specs[i].value_index(values[n]) for i, n in enumerate(self.names))
        return Assignment(self, idx)

    def reference_assignment(self) -> "Assignment":
        return Assignment(self, self.reference_indexes)


@dataclass(frozen=True)
class Assignment:
    """A full joint realisation, one value per variable, stored by index."""

    space: Space
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.space):
            raise ValidationError("assignment length does not match the variable count")
        for i, v in enumerate(self.values):
            if not 0 <= v < self.space.shape[i]:
                raise ValidationError(
                    f"assignment value index {v} outside domain of {self.space.names[i]!r}"
                )

    @property
    def labels(self) -> dict[str, str]:
        return {
            n: self.space.specs[i].domain[self.values[i]]
            for i, n in enumerate(self.space.names)
        }

    def __getitem__(self, name: str) -> str:
        i = self.space.index(name)
        return self.space.specs[i].domain[self.values[i]]


class Event:
    """A set of joint states, possibly held lazily as a cylinder.

    A cylinder event fixes some variables at single values and leaves the
    rest free.  Set operations materialise explicit state sets (guarded by
    the state cap), except cylinder-with-cylinder intersection which stays
    lazy.  Empty events can arise from set operations; measure operations
    reject them.
    """

    __slots__ = ("space", "_partial", "_states", "_flat")

    def __init__(
        self,
        space: Space,
        *,
        partial: dict[int, int] | None = None,
        states: frozenset[tuple[int, ...]] | None = None,
    ) -> None:
        if (partial is None) == (states is None):
            raise ValueError("exactly one of partial/states must be given")
        self.space = space
        self._partial = dict(partial) if partial is not None else None
        self._states = states
        self._flat: np.ndarray | None = None

    @classmethod
    def cylinder(cls, space: Space, partial: Mapping[str, str]) -> "Event":
        return cls(space, partial=space.partial_indexes(partial))

    @classmethod
    def true(cls, space: Space) -> "Event":
        return cls(space, partial={})

    @classmethod
    def from_assignments(
        cls, space: Space, assignments: Iterable[Assignment | Mapping[str, str]]
    ) -> "Event":
        states = set()
        for a in assignments:
            if isinstance(a, Assignment):
                if a.space != space:
                    raise ValidationError("assignment belongs to a different variable system")
                states.add(a.values)
            else:
                states.add(space.assignment(a).values)
        return cls(space, states=frozenset(states))

    @property
    def is_cylinder(self) -> bool:
        return self._partial is not None

    @property
    def fixed(self) -> dict[int, int] | None:
        """The axis->value map for cylinder events, else None."""
        return dict(self._partial) if self._partial is not None else None

    def _free_axes(self) -> list[int]:
        assert self._partial is not None
        return [i for i in range(len(self.space)) if i not in self._partial]

    @property
    def size(self) -> int:
        if self._partial is not None:
            return math.prod(self.space.shape[i] for i in self._free_axes())
        assert self._states is not None
        return len(self._states)

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    def states(self, state_cap: int | None = None) -> frozenset[tuple[int, ...]]:
        """Materialise the explicit state set (cap-guarded for cylinders)."""
        if self._states is not None:
            return self._states
        assert self._partial is not None
        cap = resolve_state_cap(state_cap)
        if self.size > cap:
            raise StateCapError(
                f"materialising {self.size} states exceeds the cap of {cap}"
            )
        fixed = self._partial
        ranges = [
            [fixed[i]] if i in fixed else range(self.space.shape[i])
            for i in range(len(self.space))
        ]
        states = frozenset(itertools.product(*ranges))
        self._states = states
        return states

    def assignments(self) -> tuple[Assignment, ...]:
        """The member states as Assignment objects, sorted for determinism."""
        return tuple(
            Assignment(self.space, s) for s in sorted(self.states())
        )

    def fixed_variables(self) -> dict[str, str]:
        """Variables taking a single value across the whole event."""
        if self.is_empty:
            raise EmptyEventError("empty event has no fixed variables")
        if self._partial is not None:
            return {
                self.space.names[i]: self.space.specs[i].domain[v]
                for i, v in sorted(self._partial.items())
            }
        states = sorted(self.states())
        out = {}
        first = states[0]
        for i in range(len(self.space)):
            if all(s[i] == first[i] for s in states):
                out[self.space.names[i]] = self.space.specs[i].domain[first[i]]
        return out

    def _require_same_space(self, other: "Event") -> None:
        if self.space != other.space:
            raise ValidationError("events belong to different variable systems")

    def __and__(self, other: "Event") -> "Event":
        self._require_same_space(other)
        if self._partial is not None and other._partial is not None:
            merged = dict(self._partial)
            for i, v in other._partial.items():
                if merged.setdefault(i, v) != v:
                    return Event(self.space, states=frozenset())
            return Event(self.space, partial=merged)
        return Event(self.space, states=self.states() & other.states())

    def __or__(self, other: "Event") -> "Event":
        self._require_same_space(other)
        if self._partial is not None and other._partial is not None:
            if self._partial == other._partial:
                return Event(self.space, partial=dict(self._partial))
        return Event(self.space, states=self.states() | other.states())

    def __invert__(self) -> "Event":
        cap = resolve_state_cap(None)
        if self.space.state_count > cap:
            raise StateCapError(
                f"complement over {self.space.state_count} states exceeds the cap of {cap}"
            )
        everything = Event.true(self.space).states()
        return Event(self.space, states=everything - self.states())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Event):
            return NotImplemented
        if self.space != other.space:
            return False
        if self._partial is not None and other._partial is not None:
            return self._partial == other._partial
        return self.states() == other.states()

    def __hash__(self) -> int:
        return hash((self.space, self.states()))

    def flat_indexes(self) -> np.ndarray:
        """Sorted flat indexes into the row-major joint table."""
        if self._flat is None:
            states = sorted(self.states())
            if not states:
                self._flat = np.empty(0, dtype=np.intp)
            else:
                arr = np.array(states, dtype=np.intp).T
                self._flat = np.ravel_multi_index(tuple(arr), self.space.shape)
        return self._flat

    def __repr__(self) -> str:  # pragma: no cover
        if self._partial is not None:
            fixed = self.fixed_variables() if not self.is_empty else {}
            return f"Event.cylinder({fixed!r})"
        return f"Event({self.size} states)"


class ReconstructedJoint(NamedTuple):
    """Normalised probability table and utility ratio table, ordering-shaped."""

    p: np.ndarray
    u: np.ndarray


class MantlePotential(NamedTuple):
    """A full-mantle ratio table: variable, conditioning names, table."""

    var: str
    given: tuple[str, ...]
    table: np.ndarray


@dataclass(frozen=True)
class ImapViolation:
    variable: str
    layer: str
    deviation: float
    witness: dict[str, str]


@dataclass(frozen=True)
class ImapReport:
    tolerance: float
    violations: tuple[ImapViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


class Network:
    """An immutable expected utility network.

    Built through :func:`build_network`.  All public reads are pure; the
    full ratio tables and the utility normaliser are computed once on demand
    and cached behind a lock, so concurrent readers are safe.
    """

    def __init__(
        self,
        space: Space,
        graph: EUNGraph,
        potentials: Mapping[str, Mapping[str, RestrictedPotential]],
        *,
        validated: bool = True,
    ) -> None:
        self.space = space
        self.graph = graph
        self._potentials = {layer: dict(potentials[layer]) for layer in LAYERS}
        self.validated = validated
        self._lock = threading.Lock()
        self._cache: dict[str, object] = {}

    # -- structure reads ---------------------------------------------------

    @property
    def ordering(self) -> tuple[str, ...]:
        return self.space.names

    @property
    def state_count(self) -> int:
        return self.space.state_count

    def potential(self, layer: str, name: str) -> RestrictedPotential:
        _check_layer(layer)
        try:
            return self._potentials[layer][name]
        except KeyError:
            raise ValidationError(f"unknown variable {name!r}") from None

    def mantle(self, layer: str, name: str) -> frozenset[str]:
        """All neighbours of ``name`` in the given layer."""
        self.space.index(name)
        return self.graph.neighbors(layer, name)

    def below_neighbors(self, layer: str, name: str) -> tuple[str, ...]:
        """Below-index neighbours in ordering index order."""
        i = self.space.index(name)
        mantle = self.graph.neighbors(layer, name)
        return tuple(n for n in self.space.names[:i] if n in mantle)

    def above_neighbors(self, layer: str, name: str) -> tuple[str, ...]:
        i = self.space.index(name)
        mantle = self.graph.neighbors(layer, name)
        return tuple(n for n in self.space.names[i + 1 :] if n in mantle)

    # -- event and assignment helpers --------------------------------------

    def cylinder(self, partial: Mapping[str, str]) -> Event:
        return Event.cylinder(self.space, partial)

    def true_event(self) -> Event:
        return Event.true(self.space)

    def assignment(self, values: Mapping[str, str]) -> Assignment:
        return self.space.assignment(values)

    def reference_assignment(self) -> Assignment:
        return self.space.reference_assignment()

    # -- cached numeric tables ---------------------------------------------

    def _log_potentials(self, layer: str) -> tuple[tuple[tuple[int, ...], np.ndarray], ...]:
        """Per-variable (axes, log table) pairs, cached.  Cap-free."""
        key = f"logpots/{layer}"
        cached = self._cache.get(key)
        if cached is None:
            with self._lock:
                cached = self._cache.get(key)
                if cached is None:
                    out = []
                    for name in self.space.names:
                        pot = self._potentials[layer][name]
                        axes = (self.space.index(name),) + tuple(
                            self.space.index(p) for p in pot.parents
                        )
                        logt = np.log(pot.table)
                        logt.flags.writeable = False
                        out.append((axes, logt))
                    cached = tuple(out)
                    self._cache[key] = cached
        return cached  # type: ignore[return-value]

    def _check_cap(self, state_cap: int | None) -> None:
        cap = resolve_state_cap(state_cap)
        if self.state_count > cap:
            raise StateCapError(
                f"enumeration over {self.state_count} states exceeds the cap of {cap}"
            )

    def _full_log_ratio(self, layer: str, state_cap: int | None = None) -> np.ndarray:
        """Log joint ratio table over the full state space, cached per layer.

        Accumulates the broadcast per-variable log tables left to right along
        the ordering, the same summation order as the scalar path in
        :func:`joint_ratio` (the two can still differ by an ulp at the final
        exponentiation).
        """
        self._check_cap(state_cap)
        key = f"logratio/{layer}"
        cached = self._cache.get(key)
        if cached is None:
            parts = self._log_potentials(layer)  # before taking the lock, it locks too
            with self._lock:
                cached = self._cache.get(key)
                if cached is None:
                    n = len(self.space)
                    total = np.zeros(self.space.shape)
                    for axes, logt in parts:
                        order = sorted(range(len(axes)), key=lambda k: axes[k])
                        view = logt.transpose(order)
                        idx: list[object] = [None] * n
                        for v in sorted(axes):
                            idx[v] = slice(None)
                        total = total + view[tuple(idx)]
                    total.flags.writeable = False
                    self._cache[key] = total
                    cached = total
        return cached  # type: ignore[return-value]

    def ratio_tables(self, layer: str, state_cap: int | None = None) -> np.ndarray:
        """The full joint ratio table (value 1 at the reference state)."""
        _check_layer(layer)
        key = f"ratio/{layer}"
        cached = self._cache.get(key)
        if cached is None:
            log_table = self._full_log_ratio(layer, state_cap)
            with self._lock:
                cached = self._cache.get(key)
                if cached is None:
                    table = np.exp(log_table)
                    table.flags.writeable = False
                    self._cache[key] = table
                    cached = table
        else:
            self._check_cap(state_cap)
        return cached  # type: ignore[return-value]

    def u_rel_true(self, state_cap: int | None = None) -> float:
        """Expected utility of the sure event, relative to u at the reference state."""
        key = "u_rel_true"
        cached = self._cache.get(key)
        if cached is None:
            pr = self.ratio_tables(PROB, state_cap)
            ur = self.ratio_tables(UTIL, state_cap)
            with self._lock:
                cached = self._cache.get(key)
                if cached is None:
                    cached = float((pr * ur).sum() / pr.sum())
                    self._cache[key] = cached
        return cached  # type: ignore[return-value]

    def imap_report(self, tolerance: float = 1e-9, state_cap: int | None = None) -> ImapReport:
        """Cached mantle-consistency report at the default tolerance."""
        if tolerance == 1e-9:
            cached = self._cache.get("imap")
            if cached is None:
                report = validate_imap(self, tolerance, state_cap=state_cap)
                with self._lock:
                    cached = self._cache.setdefault("imap", report)
            return cached  # type: ignore[return-value]
        return validate_imap(self, tolerance, state_cap=state_cap)

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"Network({len(self.space)} variables, "
            f"{len(self.graph.prob_arcs)} prob arcs, {len(self.graph.util_arcs)} util arcs)"
        )


def build_network(
    specs: Sequence[VariableSpec],
    ordering: Sequence[str],
    graph: EUNGraph,
    potentials: Iterable[RestrictedPotential] = (),
) -> Network:
    """Validate the parts and assemble an immutable network.

    ``ordering`` is a permutation of the variable names and fixes the index
    of every variable.  Each potential must condition on exactly the
    below-index neighbours of its variable in its layer, in index order.
    Missing potentials default to the identity table over the correct
    conditioning set, so a graph with no potentials at all is the uniform
    probability and constant utility over the space.
    """
    by_name = {}
    for spec in specs:
        if spec.name in by_name:
            raise ValidationError(f"duplicate variable {spec.name!r}")
        by_name[spec.name] = spec
    ordering = tuple(ordering)
    if sorted(ordering) != sorted(by_name):
        raise ValidationError(
            "ordering must be a permutation of the variable names, "
            f"got {ordering!r} over {sorted(by_name)}"
        )
    space = Space([by_name[n] for n in ordering])

    unknown = {n for arc in itertools.chain(graph.prob_arcs, graph.util_arcs) for n in arc}
    unknown -= set(ordering)
    if unknown:
        raise ValidationError(f"unknown variable in an arc: {sorted(unknown)}")
    graph = EUNGraph(graph.prob_arcs, graph.util_arcs, frozenset(ordering))

    net = Network(space, graph, {PROB: {}, UTIL: {}}, validated=False)
    expected_parents = {
        layer: {name: net.below_neighbors(layer, name) for name in ordering}
        for layer in LAYERS
    }

    tables: dict[str, dict[str, RestrictedPotential]] = {PROB: {}, UTIL: {}}
    for pot in potentials:
        if pot.var not in by_name:
            raise ValidationError(f"potential for unknown variable {pot.var!r}")
        if pot.var in tables[pot.layer]:
            raise ValidationError(f"duplicate potential for {pot.var!r}/{pot.layer}")
        want = expected_parents[pot.layer][pot.var]
        if pot.parents != want:
            raise ValidationError(
                f"potential for {pot.var!r}/{pot.layer}: conditioning set mismatch with graph, "
                f"expected parents {want!r}, got {pot.parents!r}"
            )
        spec = by_name[pot.var]
        shape = (spec.size,) + tuple(by_name[p].size for p in want)
        if pot.table.shape != shape:
            raise ValidationError(
                f"potential for {pot.var!r}/{pot.layer}: table shape {pot.table.shape} "
                f"does not match domains {shape}"
            )
        if not np.all(pot.table[spec.reference_index] == 1.0):
            raise ValidationError(
                f"potential for {pot.var!r}/{pot.layer}: non-unit reference row"
            )
        tables[pot.layer][pot.var] = pot

    for layer in LAYERS:
        for name in ordering:
            if name not in tables[layer]:
                parent_specs = [by_name[p] for p in expected_parents[layer][name]]
                tables[layer][name] = RestrictedPotential.identity(
                    by_name[name], parent_specs, layer
                )

    return Network(space, graph, tables, validated=True)


def _as_values(network: Network, x: Assignment | Mapping[str, str]) -> tuple[int, ...]:
    if isinstance(x, Assignment):
        if x.space != network.space:
            raise ValidationError("assignment belongs to a different variable system")
        return x.values
    return network.space.assignment(x).values


def joint_ratio(network: Network, layer: str, x: Assignment | Mapping[str, str]) -> float:
    """The joint measure at ``x`` relative to the reference state.

    Computed as the chain product of the per-variable restricted tables along
    the ordering: each factor reads the variable's value, its below-index
    neighbours at their values in ``x``, and leaves every above-index
    neighbour implicitly at its reference value.  The product is accumulated
    in log space, left to right.
    """
    _check_layer(layer)
    values = _as_values(network, x)
    total = 0.0
    for axes, logt in network._log_potentials(layer):
        total += float(logt[tuple(values[a] for a in axes)])
    return math.exp(total)


def reconstruct_joint(network: Network, state_cap: int | None = None) -> ReconstructedJoint:
    """Enumerate the full joint: normalised p table and u ratio table.

    The probability table sums to 1; the utility table is expressed relative
    to the utility of the reference state.  Axes follow the ordering.  This
    is the oracle backbone for everything else in the package: every other
    numeric operation must agree with sums over these tables.
    """
    pr = network.ratio_tables(PROB, state_cap)
    ur = network.ratio_tables(UTIL, state_cap)
    p = pr / pr.sum()
    p.flags.writeable = False
    return ReconstructedJoint(p=p, u=ur)


def full_mantle_potential(
    network: Network,
    layer: str,
    var: str,
    tolerance: float = 1e-9,
    strict: bool = True,
    state_cap: int | None = None,
) -> MantlePotential:
    """The ratio table of ``var`` conditioned on its whole mantle.

    Evaluated from the reconstructed joint with the non-mantle variables held
    at their reference values.  If the ratio varies across non-mantle
    completions beyond ``tolerance`` (relative), strict mode raises; loose
    mode returns the reference-completion table anyway.
    """
    _check_layer(layer)
    i = network.space.index(var)
    table = network.ratio_tables(layer, state_cap)
    mantle_axes = sorted(network.space.index(m) for m in network.mantle(layer, var))
    free_axes = [
        a for a in range(len(network.space)) if a != i and a not in mantle_axes
    ]

    ref_idx: list[object] = [slice(None)] * len(network.space)
    ref_idx[i] = slice(network.space.reference_indexes[i], network.space.reference_indexes[i] + 1)
    ratio = table / table[tuple(ref_idx)]

    if free_axes:
        spread_hi = ratio.max(axis=tuple(free_axes))
        spread_lo = ratio.min(axis=tuple(free_axes))
        deviation = float(((spread_hi - spread_lo) / spread_lo).max())
        if strict and deviation > tolerance:
            raise ValidationError(
                f"full-mantle potential for {var!r}/{layer}: non-mantle dependence detected "
                f"(relative deviation {deviation:.3e} exceeds {tolerance:.1e})"
            )

    take: list[object] = [slice(None)] * len(network.space)
    for a in free_axes:
        take[a] = network.space.reference_indexes[a]
    picked = ratio[tuple(take)]
    # Move the variable's own axis first, mantle axes follow in index order.
    kept = [a for a in range(len(network.space)) if a == i or a in mantle_axes]
    dest = kept.index(i)
    picked = np.moveaxis(picked, dest, 0)
    picked = np.ascontiguousarray(picked)
    picked.flags.writeable = False
    return MantlePotential(
        var=var,
        given=tuple(network.space.names[a] for a in mantle_axes),
        table=picked,
    )


def validate_imap(
    network: Network, tolerance: float = 1e-9, state_cap: int | None = None
) -> ImapReport:
    """Check by enumeration that each layer's graph is an independence map.

    For every variable and layer, the full-window ratio of the variable (its
    joint ratio against the same state with the variable moved to its
    reference value) must depend only on the variable's declared mantle.  Any
    dependence on a non-mantle variable beyond the relative tolerance is a
    violation; the report carries a witness configuration for each.
    """
    violations = []
    n = len(network.space)
    for layer in LAYERS:
        table = network.ratio_tables(layer, state_cap)
        for i, var in enumerate(network.space.names):
            mantle_axes = {network.space.index(m) for m in network.mantle(layer, var)}
            free_axes = [a for a in range(n) if a != i and a not in mantle_axes]
            if not free_axes:
                continue
            ridx: list[object] = [slice(None)] * n
            ridx[i] = slice(
                network.space.reference_indexes[i], network.space.reference_indexes[i] + 1
            )
            ratio = table / table[tuple(ridx)]
            hi = ratio.max(axis=tuple(free_axes))
            lo = ratio.min(axis=tuple(free_axes))
            rel = (hi - lo) / lo
            deviation = float(rel.max())
            if deviation > tolerance:
                kept = [a for a in range(n) if a not in free_axes]
                flat = int(np.argmax(rel))
                kept_shape = [network.space.shape[a] for a in kept]
                kept_vals = np.unravel_index(flat, kept_shape) if kept_shape else ()
                witness = {
                    network.space.names[a]: network.space.specs[a].domain[v]
                    for a, v in zip(kept, kept_vals)
                }
                violations.append(
                    ImapViolation(variable=var, layer=layer, deviation=deviation, witness=witness)
                )
    return ImapReport(tolerance=tolerance, violations=tuple(violations))


def derive_restricted_potentials(
    table: np.ndarray,
    space: Space,
    graph: EUNGraph,
    layer: str,
) -> list[RestrictedPotential]:
    """Read restricted potentials off a positive joint table.

    For each variable the potential entry at (value, below-neighbour values)
    is the ratio of the joint at that configuration, with every other
    variable at its reference value, against the same configuration with the
    variable itself moved to its reference value.  The input table may be
    unnormalised; ratios are scale free.
    """
    _check_layer(layer)
    arr = np.asarray(table, dtype=float)
    if arr.shape != space.shape:
        raise ValidationError(
            f"joint table shape {arr.shape} does not match the variable domains {space.shape}"
        )
    if not np.all(arr > 0.0):
        raise ValidationError("joint table must be strictly positive")

    helper = Network(space, EUNGraph(graph.prob_arcs, graph.util_arcs, frozenset(space.names)),
                     {PROB: {}, UTIL: {}}, validated=False)
    out = []
    n = len(space)
    for i, name in enumerate(space.names):
        parents = helper.below_neighbors(layer, name)
        parent_axes = [space.index(p) for p in parents]
        take: list[object] = [space.reference_indexes[a] for a in range(n)]
        take[i] = slice(None)
        for a in parent_axes:
            take[a] = slice(None)
        sub = arr[tuple(take)]
        # Axes of sub follow ascending variable index, and parents are already
        # in index order, so only the variable's own axis needs moving.
        kept = sorted([i] + parent_axes)
        sub = np.moveaxis(sub, kept.index(i), 0)
        ref = sub[space.reference_indexes[i]]
        ratio = sub / ref
        ratio[space.reference_indexes[i]] = 1.0
        out.append(
            RestrictedPotential(
                name,
                layer,
                parents,
                ratio,
                reference_index=space.reference_indexes[i],
            )
        )
    return out
