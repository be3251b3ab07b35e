"""Pearl-style classical structural causal models over finite variables:
deterministic solving, do-submodels, the three-step counterfactual
evaluation, and brute-force enumeration used as an oracle elsewhere."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .dag import Dag
from .errors import (
    InvalidModelError,
    NonTotalFunctionError,
    TooLargeError,
    UnknownVariableError,
    ZeroEvidenceProbabilityError,
)

ENUMERATION_GUARD = 2**20


@dataclass(frozen=True)
class FiniteVar:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise InvalidModelError(f"variable {self.name} has an empty value set")
        if len(set(self.values)) != len(self.values):
            raise InvalidModelError(f"variable {self.name} has duplicate values")

    def index(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise UnknownVariableError(
                f"{value!r} is not a value of {self.name}"
            ) from None


@dataclass(frozen=True)
class StructuralFunction:
    """Total function table  (u_value, parent values...) -> value."""

    target: str
    parents: tuple[str, ...]
    table: dict  # (u, *pa) tuple of strings -> string

    def apply(self, u_value: str, pa_values: tuple[str, ...]) -> str:
        key = (u_value,) + tuple(pa_values)
        if key not in self.table:
            raise NonTotalFunctionError(
                f"function for {self.target} undefined at {key}"
            )
        return self.table[key]


@dataclass
class ClassicalCsm:
    endogenous: tuple[FiniteVar, ...]
    exogenous: tuple[FiniteVar, ...]  # one per endogenous variable, same order
    functions: tuple[StructuralFunction, ...]

    def __post_init__(self):
        self.endogenous = tuple(self.endogenous)
        self.exogenous = tuple(self.exogenous)
        self.functions = tuple(self.functions)
        if len(self.endogenous) != len(self.exogenous):
            raise InvalidModelError("need exactly one exogenous variable per endogenous")
        by_target = {f.target: f for f in self.functions}
        if set(by_target) != {v.name for v in self.endogenous}:
            raise InvalidModelError("functions must cover every endogenous variable")
        self.dag = Dag(
            [v.name for v in self.endogenous],
            {(p, f.target) for f in self.functions for p in f.parents},
        )
        self._check_total()

    def _check_total(self):
        endo = {v.name: v for v in self.endogenous}
        for f, u in zip(self.functions_in_order(), self.exogenous):
            var = endo[f.target]
            domains = [u.values] + [endo[p].values for p in f.parents]
            for key in itertools.product(*domains):
                value = f.table.get(key)
                if value is None:
                    raise NonTotalFunctionError(
                        f"function for {f.target} undefined at {key}"
                    )
                if value not in var.values:
                    raise InvalidModelError(
                        f"function for {f.target} maps {key} to alien value {value!r}"
                    )

    def functions_in_order(self) -> tuple[StructuralFunction, ...]:
        by_target = {f.target: f for f in self.functions}
        return tuple(by_target[v.name] for v in self.endogenous)

    def endo_var(self, name: str) -> FiniteVar:
        for v in self.endogenous:
            if v.name == name:
                return v
        raise UnknownVariableError(f"no endogenous variable {name!r}")

    def exo_for(self, endo_name: str) -> FiniteVar:
        idx = [v.name for v in self.endogenous].index(endo_name)
        return self.exogenous[idx]


@dataclass
class ClassicalPsm:
    csm: ClassicalCsm
    priors: tuple[tuple[float, ...], ...]  # per exogenous variable, same order
    joint_prior: dict | None = None  # optional {u-assignment tuple: prob}

    def __post_init__(self):
        self.priors = tuple(tuple(p) for p in self.priors)
        if len(self.priors) != len(self.csm.exogenous):
            raise InvalidModelError("need one prior per exogenous variable")
        for var, prior in zip(self.csm.exogenous, self.priors):
            if len(prior) != len(var.values):
                raise InvalidModelError(f"prior length mismatch for {var.name}")
            if abs(sum(prior) - 1.0) > 1e-9 or any(p < 0 for p in prior):
                raise InvalidModelError(f"prior for {var.name} is not a distribution")
        if self.joint_prior is not None:
            total = sum(self.joint_prior.values())
            if abs(total - 1.0) > 1e-9:
                raise InvalidModelError("joint prior is not normalized")

    def u_assignments(self):
        """(assignment dict, probability) over exogenous values, nonzero only."""
        names = [v.name for v in self.csm.exogenous]
        if self.joint_prior is not None:
            for values, p in sorted(self.joint_prior.items()):
                if p > 0.0:
                    yield dict(zip(names, values)), p
            return
        spaces = [v.values for v in self.csm.exogenous]
        for combo in itertools.product(*spaces):
            p = math.prod(
                prior[var.index(val)]
                for var, prior, val in zip(self.csm.exogenous, self.priors, combo)
            )
            if p > 0.0:
                yield dict(zip(names, combo)), p

    def prior_of(self, exo_name: str, value: str) -> float:
        idx = [v.name for v in self.csm.exogenous].index(exo_name)
        return self.priors[idx][self.csm.exogenous[idx].index(value)]


@dataclass(frozen=True)
class ClassicalQuery:
    evidence: dict  # endogenous name -> value (may be empty)
    antecedent: dict  # do(X = x')
    consequent: dict  # Y = y'


def solve(csm: ClassicalCsm, u_assignment: dict) -> dict:
    """The unique endogenous solution for a full exogenous assignment."""
    order = csm.dag.topological_order()
    values: dict[str, str] = {}
    funcs = {f.target: f for f in csm.functions}
    for name in order:
        f = funcs[name]
        u_name = csm.exo_for(name).name
        if u_name not in u_assignment:
            raise UnknownVariableError(f"no exogenous value supplied for {u_name}")
        pa_vals = tuple(values[p] for p in f.parents)
        values[name] = f.apply(u_assignment[u_name], pa_vals)
    return values


def do_submodel(csm: ClassicalCsm, interventions: dict) -> ClassicalCsm:
    """Replace the functions at the intervened variables by constants and cut
    their incoming arrows."""
    endo_names = {v.name for v in csm.endogenous}
    for name, value in interventions.items():
        if name not in endo_names:
            raise UnknownVariableError(f"cannot intervene on unknown variable {name!r}")
        csm.endo_var(name).index(value)  # validates the value
    new_functions = []
    for f in csm.functions_in_order():
        if f.target in interventions:
            value = interventions[f.target]
            u_var = csm.exo_for(f.target)
            table = {(u,): value for u in u_var.values}
            new_functions.append(StructuralFunction(f.target, (), table))
        else:
            new_functions.append(f)
    return ClassicalCsm(csm.endogenous, csm.exogenous, tuple(new_functions))


def _guard(csm: ClassicalCsm):
    size = math.prod(len(v.values) for v in csm.exogenous)
    if size > ENUMERATION_GUARD:
        raise TooLargeError(f"exogenous space of size {size} exceeds the guard")


def brute_force_joint(psm: ClassicalPsm) -> dict:
    """Exact joint over endogenous assignments by enumeration of u."""
    _guard(psm.csm)
    names = [v.name for v in psm.csm.endogenous]
    joint: dict[tuple, float] = {}
    for u, p in psm.u_assignments():
        v = solve(psm.csm, u)
        key = tuple(v[n] for n in names)
        joint[key] = joint.get(key, 0.0) + p
    return joint


def classical_counterfactual(
    psm: ClassicalPsm, query: ClassicalQuery, eps: float = 1e-12
) -> float:
    """Abduction (posterior over u given the evidence), action (do-submodel),
    prediction (posterior mass of the u-region where the consequent holds)."""
    _guard(psm.csm)
    entries = []
    total = 0.0
    for u, p in psm.u_assignments():
        v = solve(psm.csm, u)
        if all(v[name] == val for name, val in query.evidence.items()):
            entries.append((u, p))
            total += p
    if total <= eps:
        raise ZeroEvidenceProbabilityError("evidence has zero probability")

    modified = do_submodel(psm.csm, query.antecedent) if query.antecedent else psm.csm
    mass = 0.0
    for u, p in entries:
        v = solve(modified, u)
        if all(v[name] == val for name, val in query.consequent.items()):
            mass += p
    return mass / total
