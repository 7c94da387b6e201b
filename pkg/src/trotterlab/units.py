"""Formal unit combinations and their infinitesimal data.

A section ``t -> y_t`` is described symbolically as a sum of terms.  Each
term sandwiches a chain of unit segments between a left and a right
algebra element and may carry one exponential twist ``exp(t * beta)`` on
a declared side.  A chain is a list of (label, fraction) segments whose
fractions sum to one, so a term evaluated at horizon ``t`` concatenates
the labelled units over consecutive subintervals covering ``[0, t]``.

The inner products ``<y_t, . y'_t>`` of two such sections are smooth in
``t``; :func:`pair_derivative` returns the exact derivative at ``t = 0``
by bilinear expansion over term pairs:

* the chain contributes the fraction-weighted sum of generator entries
  over the common refinement of both terms' segment grids,
* a twist contributes a left multiplication by ``beta*`` (first slot) or
  a right multiplication by ``beta`` (second slot); at first order the
  declared side does not matter,
* the constant multipliers conjugate the whole expression.

Adjoining a new label for the prospective limit unit of a section ``y``
extends the generator kernel with the derivative data; the extension is
accepted only when it passes the conditional positivity test, which is
precisely the condition for the limit unit to exist in some enlargement
of the system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .algebra import Superoperator, dagger, unit_element
from .kernels import (
    ConditionallyCpdReport,
    CpdSemigroup,
    OperatorKernel,
    is_conditionally_cpd,
)

__all__ = [
    "Segment",
    "Term",
    "UnitExpression",
    "unit_expression",
    "affine_expression",
    "twisted_expression",
    "concat_expression",
    "modified_expression",
    "pair_derivative",
    "ExtendedGenerator",
    "ExtensionPositivityError",
    "extend_generator",
    "NormalizedUnit",
    "normalize_unit",
]

_FRACTION_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    label: str
    fraction: float

    def __post_init__(self):
        if not self.fraction > 0:
            raise ValueError(f"segment fraction must be positive, got {self.fraction}")


@dataclass(frozen=True)
class Term:
    """One summand ``left * twist? * chain * twist? * right`` of a section."""

    left: np.ndarray
    right: np.ndarray
    segments: tuple[Segment, ...]
    twist: np.ndarray | None = None
    twist_side: str = "none"

    def __post_init__(self):
        left = np.asarray(self.left, dtype=complex)
        right = np.asarray(self.right, dtype=complex)
        if left.shape != right.shape or left.ndim != 2 or left.shape[0] != left.shape[1]:
            raise ValueError("term multipliers must be square matrices of equal size")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        segments = tuple(self.segments)
        if not segments:
            raise ValueError("a term needs at least one segment")
        total = sum(seg.fraction for seg in segments)
        if abs(total - 1.0) > _FRACTION_TOL:
            raise ValueError(f"segment fractions must sum to 1, got {total}")
        object.__setattr__(self, "segments", segments)
        if self.twist_side not in ("none", "left", "right"):
            raise ValueError(f"invalid twist side {self.twist_side!r}")
        if (self.twist is None) != (self.twist_side == "none"):
            raise ValueError("twist and twist_side must be given together")
        if self.twist is not None:
            twist = np.asarray(self.twist, dtype=complex)
            if twist.shape != left.shape:
                raise ValueError("twist must match the multiplier size")
            object.__setattr__(self, "twist", twist)

    @property
    def dim(self) -> int:
        return self.left.shape[0]

    def cut_fractions(self) -> tuple[float, ...]:
        cuts = np.cumsum([seg.fraction for seg in self.segments])[:-1]
        return tuple(float(c) for c in cuts)

    def label_at(self, fraction: float) -> str:
        acc = 0.0
        for seg in self.segments:
            acc += seg.fraction
            if fraction < acc:
                return seg.label
        return self.segments[-1].label


@dataclass(frozen=True)
class UnitExpression:
    """A formal combination of unit symbols defining a section ``t -> y_t``."""

    dim: int
    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("an expression needs at least one term")
        for term in terms:
            if term.dim != self.dim:
                raise ValueError("all terms must share the expression dimension")
        object.__setattr__(self, "terms", terms)

    def labels_used(self) -> set[str]:
        return {seg.label for term in self.terms for seg in term.segments}

    def require_labels(self, labels: Sequence[str]) -> None:
        missing = self.labels_used() - set(labels)
        if missing:
            raise KeyError(f"expression uses unknown unit labels {sorted(missing)}")

    def value_at_zero(self) -> np.ndarray:
        """The element the section degenerates to at ``t = 0``."""
        return sum(term.left @ term.right for term in self.terms)

    def unit_section_defect(self) -> float:
        """Deviation of the time-zero value from the algebra unit."""
        return float(np.linalg.norm(self.value_at_zero() - unit_element(self.dim), 2))


def unit_expression(label: str, dim: int) -> UnitExpression:
    eye = unit_element(dim)
    return UnitExpression(dim, (Term(eye, eye, (Segment(label, 1.0),)),))


def affine_expression(coefficients: Sequence[complex], labels: Sequence[str],
                      dim: int) -> UnitExpression:
    """``y_t = sum_l k_l xi^l_t`` with scalar coefficients (usually summing to 1)."""
    if len(coefficients) != len(labels):
        raise ValueError("need one coefficient per label")
    eye = unit_element(dim)
    terms = tuple(Term(complex(k) * eye, eye, (Segment(label, 1.0),))
                  for k, label in zip(coefficients, labels))
    return UnitExpression(dim, terms)


def twisted_expression(label: str, beta: np.ndarray, dim: int,
                       side: str = "right") -> UnitExpression:
    """``y_t = xi_t exp(t beta)`` (side "right") or ``exp(t beta) xi_t`` (side "left")."""
    eye = unit_element(dim)
    return UnitExpression(dim, (Term(eye, eye, (Segment(label, 1.0),),
                                     twist=np.asarray(beta, dtype=complex), twist_side=side),))


def concat_expression(segments: Sequence[tuple[str, float]], dim: int) -> UnitExpression:
    """One term concatenating unit segments over consecutive fractions of the horizon."""
    eye = unit_element(dim)
    segs = tuple(Segment(label, float(frac)) for label, frac in segments)
    return UnitExpression(dim, (Term(eye, eye, segs),))


def modified_expression(base_label: str, lefts: Sequence[np.ndarray],
                        labels: Sequence[str], rights: Sequence[np.ndarray],
                        dim: int) -> UnitExpression:
    """``y_t = xi^0_t + sum_l a_l xi^l_t b_l``; needs ``sum a_l b_l = 0`` for a unit section."""
    if not (len(lefts) == len(labels) == len(rights)):
        raise ValueError("lefts, labels and rights must have equal lengths")
    eye = unit_element(dim)
    terms = [Term(eye, eye, (Segment(base_label, 1.0),))]
    for a, label, b in zip(lefts, labels, rights):
        terms.append(Term(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex),
                          (Segment(label, 1.0),)))
    return UnitExpression(dim, tuple(terms))


def _merged_segments(t1: Term, t2: Term):
    """Yield (width, label1, label2) over the union of both segment grids."""
    cuts = sorted(set(t1.cut_fractions()) | set(t2.cut_fractions()))
    grid = [0.0, *cuts, 1.0]
    for lo, hi in zip(grid[:-1], grid[1:]):
        if hi - lo <= 1e-15:
            continue
        mid = (lo + hi) / 2.0
        yield hi - lo, t1.label_at(mid), t2.label_at(mid)


def pair_derivative(e1: UnitExpression, e2: UnitExpression,
                    generator: OperatorKernel) -> Superoperator:
    """Derivative at ``t = 0`` of the pairing map ``t -> <e1_t, . e2_t>``."""
    if e1.dim != e2.dim or e1.dim != generator.dim:
        raise ValueError("expression and generator dimensions disagree")
    e1.require_labels(generator.labels)
    e2.require_labels(generator.labels)
    d = generator.dim
    eye = np.eye(d)
    total = np.zeros((d * d, d * d), dtype=complex)
    for t1 in e1.terms:
        for t2 in e2.terms:
            inner = np.zeros_like(total)
            for width, s, t in _merged_segments(t1, t2):
                inner += width * generator[(s, t)].rep
            if t1.twist is not None:
                inner += np.kron(eye, dagger(t1.twist))
            if t2.twist is not None:
                inner += np.kron(t2.twist.T, eye)
            outer_rep = np.kron(t2.right.T, dagger(t1.right))
            deep_rep = np.kron(t2.left.T, dagger(t1.left))
            total += outer_rep @ inner @ deep_rep
    return Superoperator(d, total)


class ExtensionPositivityError(ValueError):
    """The extended kernel failed conditional positivity.

    Either the section violates the first-order hypotheses, or the check
    broke down numerically; the witness magnitude distinguishes the two.
    """

    def __init__(self, message, report: ConditionallyCpdReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ExtendedGenerator:
    """Generator kernel extended by a new label for the limit unit of a section."""

    base: OperatorKernel
    zeta: str
    diagonal: Superoperator
    cross: Mapping[str, Superoperator]
    kernel: OperatorKernel
    report: ConditionallyCpdReport

    def semigroup(self) -> CpdSemigroup:
        return CpdSemigroup(self.kernel)

    def max_difference(self, other: "ExtendedGenerator") -> float:
        """Largest entrywise representation difference between two extensions."""
        if self.kernel.labels != other.kernel.labels:
            raise ValueError("extensions have different label sets")
        worst = 0.0
        for pair, op in self.kernel.entries.items():
            worst = max(worst, float(np.max(np.abs(op.rep - other.kernel[pair].rep))))
        return worst


def _fresh_label(taken: Sequence[str], stem: str = "zeta") -> str:
    if stem not in taken:
        return stem
    k = 1
    while f"{stem}_{k}" in taken:
        k += 1
    return f"{stem}_{k}"


def extend_generator(section: UnitExpression, generator: OperatorKernel, *,
                     zeta_label: str | None = None, unit_tol: float = 1e-9,
                     positivity_tol: float = 1e-8, seed: int = 7,
                     samples: int = 500) -> ExtendedGenerator:
    """Adjoin the limit-unit label of ``section`` to ``generator``.

    The diagonal entry of the new row is the derivative of the section's
    own pairing, the cross entries pair the section against each existing
    unit, and the mirror column is fixed by hermitian symmetry.  The
    extension must pass the conditional positivity test; failure raises
    with the witness attached.
    """
    defect = section.unit_section_defect()
    if defect > unit_tol:
        raise ValueError(
            f"section value at t=0 differs from the unit by {defect:.3e}; "
            "the term multipliers must sum to the identity")
    zeta = zeta_label or _fresh_label(generator.labels)
    if zeta in generator.labels:
        raise ValueError(f"label {zeta!r} already present")

    diagonal = pair_derivative(section, section, generator)
    cross = {s: pair_derivative(section, unit_expression(s, generator.dim), generator)
             for s in generator.labels}

    entries = dict(generator.entries)
    entries[(zeta, zeta)] = diagonal
    for s in generator.labels:
        entries[(zeta, s)] = cross[s]
        entries[(s, zeta)] = cross[s].star_conjugate()
    kernel = OperatorKernel(generator.labels + (zeta,), generator.dim, entries)

    report = is_conditionally_cpd(kernel, tol=positivity_tol, seed=seed, samples=samples)
    if not report.ok:
        magnitude = abs(report.min_scaled_eigenvalue)
        kind = ("hypothesis violation" if magnitude > 1e-3
                else "numerical breakdown near tolerance")
        raise ExtensionPositivityError(
            f"extended kernel is not conditionally positive definite "
            f"(worst scaled eigenvalue {report.min_scaled_eigenvalue:.3e}; "
            f"likely {kind})", report)
    return ExtendedGenerator(generator, zeta, diagonal, cross, kernel, report)


@dataclass(frozen=True)
class NormalizedUnit:
    expression: UnitExpression
    extension: ExtendedGenerator
    beta: np.ndarray


def normalize_unit(label: str, generator: OperatorKernel,
                   h: np.ndarray | None = None, *, side: str = "right",
                   check_times: Sequence[float] = (0.25, 0.5, 1.0),
                   tol: float = 1e-10) -> NormalizedUnit:
    """Twist a unit so that the limit unit generates a unital CP semigroup.

    With ``q = generator[label, label](1)`` (which must be selfadjoint),
    the twist is ``beta = -q/2 + i h`` for an arbitrary selfadjoint ``h``.
    Unitality of the extended diagonal, ``K(1) = 0`` and hence
    ``exp(tK)(1) = 1``, is asserted on ``check_times``.
    """
    if label not in generator.labels:
        raise KeyError(f"unknown unit label {label!r}")
    d = generator.dim
    eye = unit_element(d)
    q_one = generator[(label, label)].apply(eye)
    scale = max(1.0, float(np.linalg.norm(q_one, 2)))
    if float(np.linalg.norm(q_one - dagger(q_one), 2)) > tol * scale:
        raise ValueError("malformed generator: diagonal value at the unit is not selfadjoint")
    if h is None:
        h = np.zeros((d, d))
    h = np.asarray(h, dtype=complex)
    if float(np.linalg.norm(h - dagger(h), 2)) > tol * max(1.0, float(np.linalg.norm(h, 2))):
        raise ValueError("h must be selfadjoint")

    beta = -q_one / 2.0 + 1j * h
    expression = twisted_expression(label, beta, d, side=side)
    extension = extend_generator(expression, generator)

    k_at_one = extension.diagonal.apply(eye)
    if float(np.linalg.norm(k_at_one, 2)) > tol * scale:
        raise ArithmeticError(
            f"normalization failed: K(1) has norm {np.linalg.norm(k_at_one, 2):.3e}")
    for t in check_times:
        drift = extension.diagonal.expm(t).apply(eye) - eye
        if float(np.linalg.norm(drift, 2)) > 10 * tol * max(1.0, scale):
            raise ArithmeticError(f"normalized semigroup is not unital at t={t}")
    return NormalizedUnit(expression, extension, beta)
