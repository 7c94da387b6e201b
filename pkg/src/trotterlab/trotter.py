"""Interval partitions, pairings of sectioned products, and convergence verdicts.

A partition of ``[0, t]`` is stored as the tuple of its interval widths in
the customary reversed order (latest interval first); ``parts[-1]`` covers
``[0, parts[-1])``.  Partitions of equal length form a lattice under
common refinement of their cut-point sets.

Pairing convention.  For elements composed over consecutive intervals,
the inner-product map of a composition factorizes into the entry maps of
the two sides' labels on each interval of the common refinement.  The
factor belonging to the *latest* interval acts first on the operand, so
representation matrices multiply in time order, earliest leftmost:

    rep(<x, . y>) = piece(I_1) @ piece(I_2) @ ... @ piece(I_N)

with ``I_1`` the earliest interval.  A term's right multiplier (and a
right-side twist, whose exponent scales with the interval width) enters
at its interval's earliest position, the left multiplier (and left-side
twist) at the latest position.

Multi-term expressions are handled by a transfer-matrix walk: between
interval boundaries the active term of each side is part of the state,
and at a boundary the corresponding sum is folded.  This keeps the cost
linear in the refinement size for arbitrary partition pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .algebra import Superoperator, dagger, superop_norm, unit_element
from .kernels import CpdSemigroup, OperatorKernel
from .units import ExtendedGenerator, UnitExpression, extend_generator, unit_expression

__all__ = [
    "Partition",
    "refine",
    "dyadic_schedule",
    "random_schedule",
    "eval_pairing",
    "VerdictThresholds",
    "ConvergenceReport",
    "assemble_report",
    "convergence_verdict",
    "Prop33Report",
    "prop33_bound_check",
    "fit_rate",
]

_LENGTH_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """An interval partition, widths stored latest-first."""

    parts: tuple[float, ...]

    def __post_init__(self):
        parts = tuple(float(p) for p in self.parts)
        if not parts:
            raise ValueError("a partition needs at least one part")
        if any(p <= 0 for p in parts):
            raise ValueError("all parts must be positive")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def uniform(cls, length: float, n: int) -> "Partition":
        if n < 1:
            raise ValueError("need at least one part")
        return cls((float(length) / n,) * n)

    @classmethod
    def from_time_widths(cls, widths: Sequence[float]) -> "Partition":
        return cls(tuple(widths)[::-1])

    @property
    def length(self) -> float:
        return float(sum(self.parts))

    @property
    def norm(self) -> float:
        return float(max(self.parts))

    @property
    def size(self) -> int:
        return len(self.parts)

    @property
    def time_widths(self) -> tuple[float, ...]:
        """Widths in time order, earliest first."""
        return self.parts[::-1]

    def cuts(self) -> tuple[float, ...]:
        """Interior cut points in increasing order."""
        return tuple(float(c) for c in np.cumsum(self.time_widths)[:-1])

    def scaled(self, factor: float) -> "Partition":
        return Partition(tuple(p * factor for p in self.parts))

    def refine(self, other: "Partition") -> "Partition":
        """Common refinement via the union of cut points."""
        length = self.length
        if abs(length - other.length) > _LENGTH_TOL * max(1.0, length):
            raise ValueError(
                f"cannot refine partitions of different lengths "
                f"({length} vs {other.length})")
        tol = _LENGTH_TOL * max(1.0, length)
        merged = _merge_cuts((*self.cuts(), *other.cuts()), tol)
        # When one side already contains every cut, return it unchanged so
        # that idempotence and absorption hold exactly.
        for side in (self, other):
            own = side.cuts()
            if len(own) == len(merged) and all(
                    abs(a - b) <= tol for a, b in zip(own, merged)):
                return side
        grid = [0.0, *merged, length]
        widths = [hi - lo for lo, hi in zip(grid[:-1], grid[1:]) if hi - lo > tol]
        return Partition.from_time_widths(widths)


def _merge_cuts(cuts: Sequence[float], tol: float) -> list[float]:
    out: list[float] = []
    for c in sorted(cuts):
        if not out or c - out[-1] > tol:
            out.append(c)
    return out


def refine(p: Partition, q: Partition) -> Partition:
    """Lattice join: the common refinement of two partitions."""
    return p.refine(q)


def dyadic_schedule(length: float, k_min: int = 3, k_max: int = 12) -> list[Partition]:
    """Uniform partitions with 2^k parts, k = k_min..k_max."""
    return [Partition.uniform(length, 2 ** k) for k in range(k_min, k_max + 1)]


def random_schedule(length: float, count: int, seed: int = 0) -> list[Partition]:
    """Random partitions with shrinking norms, exercising the net claim."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(round(8 * 2 ** (i * 9.0 / max(count - 1, 1))))
        while True:
            cuts = np.sort(rng.uniform(0.0, length, size=n - 1)) if n > 1 else np.array([])
            grid = np.concatenate([[0.0], cuts, [length]])
            widths = np.diff(grid)
            if widths.min(initial=length) > 1e-6 * length / n:
                break
        out.append(Partition.from_time_widths([float(w) for w in widths]))
    return out


# -- pairing evaluation -------------------------------------------------------


class _Side:
    """Per-side bookkeeping for the transfer walk."""

    def __init__(self, expr: UnitExpression, partition: Partition):
        self.expr = expr
        widths = partition.time_widths
        self.bounds = [0.0, *np.cumsum(widths)]
        self.widths = widths

    def segment_cuts(self, index: int) -> list[float]:
        lo, hi = self.bounds[index], self.bounds[index + 1]
        span = hi - lo
        cuts = []
        for term in self.expr.terms:
            cuts.extend(lo + f * span for f in term.cut_fractions())
        return cuts

    def label_at(self, term_index: int, interval_index: int, position: float) -> str:
        lo, hi = self.bounds[interval_index], self.bounds[interval_index + 1]
        return self.expr.terms[term_index].label_at((position - lo) / (hi - lo))

    def open_mult(self, term_index: int, interval_index: int) -> np.ndarray:
        """Multiplier entering at the interval's earliest end (right factor)."""
        term = self.expr.terms[term_index]
        m = term.right
        if term.twist_side == "right":
            m = scipy.linalg.expm(self.widths[interval_index] * term.twist) @ m
        return m

    def close_mult(self, term_index: int, interval_index: int) -> np.ndarray:
        """Multiplier entering at the interval's latest end (left factor)."""
        term = self.expr.terms[term_index]
        m = term.left
        if term.twist_side == "left":
            m = m @ scipy.linalg.expm(self.widths[interval_index] * term.twist)
        return m


def eval_pairing(e1: UnitExpression, p1: Partition, e2: UnitExpression, p2: Partition,
                 semigroup: CpdSemigroup, *, _power_fast_path: bool = True) -> Superoperator:
    """The map ``b -> <x composed over p1, b * (y composed over p2)>``.

    Exact up to matrix-exponential accuracy: every interval of the common
    refinement contributes the entry exponential for the two sides' active
    labels, with multipliers and twists inserted at the proper boundaries.
    """
    length = p1.length
    if abs(length - p2.length) > _LENGTH_TOL * max(1.0, length):
        raise ValueError(f"partition lengths differ: {length} vs {p2.length}")
    if e1.dim != semigroup.dim or e2.dim != semigroup.dim:
        raise ValueError("expression and semigroup dimensions disagree")
    e1.require_labels(semigroup.labels)
    e2.require_labels(semigroup.labels)
    d = semigroup.dim
    eye = np.eye(d)

    # Same uniform partition on both sides: one interval block, then a power.
    if (_power_fast_path and p1.size == p2.size and p1.size > 8
            and max(p1.parts) - min(p1.parts) <= _LENGTH_TOL
            and max(p2.parts) - min(p2.parts) <= _LENGTH_TOL):
        w = length / p1.size
        block = eval_pairing(e1, Partition((w,)), e2, Partition((w,)),
                             semigroup, _power_fast_path=False)
        return Superoperator(d, np.linalg.matrix_power(block.rep, p1.size))

    side1 = _Side(e1, p1)
    side2 = _Side(e2, p2)
    tol = _LENGTH_TOL * max(1.0, length)

    events = list(side1.bounds) + list(side2.bounds)
    for i in range(p1.size):
        events.extend(side1.segment_cuts(i))
    for i in range(p2.size):
        events.extend(side2.segment_cuts(i))
    events = _merge_cuts(events, tol)
    if abs(events[0]) > tol or abs(events[-1] - length) > tol:
        raise AssertionError("event grid must span the full horizon")

    def is_boundary(bounds: list[float], value: float) -> bool:
        idx = int(np.searchsorted(bounds, value))
        for j in (idx - 1, idx, idx + 1):
            if 0 <= j < len(bounds) and abs(bounds[j] - value) <= tol:
                return True
        return False

    n1, n2 = len(e1.terms), len(e2.terms)
    total = np.eye(d * d, dtype=complex)
    states: dict[tuple[int, int], np.ndarray] | None = None
    i1 = i2 = 0  # current interval index on each side

    for lo, hi in zip(events[:-1], events[1:]):
        if states is None:
            states = {}
            for m1 in range(n1):
                op1 = side1.open_mult(m1, i1)
                for m2 in range(n2):
                    op2 = side2.open_mult(m2, i2)
                    states[(m1, m2)] = total @ np.kron(op2.T, dagger(op1))
        width = hi - lo
        mid = (lo + hi) / 2.0
        for (m1, m2), acc in states.items():
            s = side1.label_at(m1, i1, mid)
            t = side2.label_at(m2, i2, mid)
            states[(m1, m2)] = acc @ semigroup.entry_rep(s, t, width)

        b1 = is_boundary(side1.bounds, hi)
        b2 = is_boundary(side2.bounds, hi)
        if b1 and b2:
            total = np.zeros((d * d, d * d), dtype=complex)
            for (m1, m2), acc in states.items():
                cl1 = side1.close_mult(m1, i1)
                cl2 = side2.close_mult(m2, i2)
                total += acc @ np.kron(cl2.T, dagger(cl1))
            states = None
            i1 += 1
            i2 += 1
        elif b1:
            collapsed = {}
            for m2 in range(n2):
                acc = sum(states[(m1, m2)] @ np.kron(eye, dagger(side1.close_mult(m1, i1)))
                          for m1 in range(n1))
                collapsed[m2] = acc
            i1 += 1
            states = {(m1, m2): collapsed[m2] @ np.kron(eye, dagger(side1.open_mult(m1, i1)))
                      for m1 in range(n1) for m2 in range(n2)}
        elif b2:
            collapsed = {}
            for m1 in range(n1):
                acc = sum(states[(m1, m2)] @ np.kron(side2.close_mult(m2, i2).T, eye)
                          for m2 in range(n2))
                collapsed[m1] = acc
            i2 += 1
            states = {(m1, m2): collapsed[m1] @ np.kron(side2.open_mult(m2, i2).T, eye)
                      for m1 in range(n1) for m2 in range(n2)}
    if states is not None:
        raise AssertionError("walk ended inside an interval")
    return Superoperator(d, total)


# -- reports ------------------------------------------------------------------


def fit_rate(norms: Sequence[float], defects: Sequence[float],
             floor: float = 1e-13) -> float | None:
    """Log-log slope of defect against partition norm, ignoring noise-floor points."""
    xs, ys = [], []
    for nrm, dft in zip(norms, defects):
        if dft > floor:
            xs.append(np.log(nrm))
            ys.append(np.log(dft))
    if len(xs) < 3:
        return None
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)


@dataclass(frozen=True)
class VerdictThresholds:
    """Floating-point realization of the convergent / weak-only / divergent split."""

    convergent_defect: float = 1e-6
    convergent_rate: float = 0.5
    plateau_defect: float = 1e-3
    plateau_rate: float = 0.1
    ambient_defect: float = 1e-6
    obs35_rate: float = 0.9


@dataclass(frozen=True)
class ConvergenceReport:
    """Defect series of a sectioned product against a target unit.

    ``gram_defect`` measures the pairing of the section with itself against
    the limit gram predicted by the extension; ``criterion_defect`` the
    pairing of the target unit with the section against that same limit
    gram, both evaluated at the algebra unit for the element form; and
    ``norm_defect`` is the squared distance assembled from the three
    pairings, reported as the top eigenvalue of the (ideally positive)
    difference element.
    """

    horizon: float
    target: str
    target_kind: str  # "adjoined" or "ambient"
    sizes: tuple[int, ...]
    norms: tuple[float, ...]
    gram_defects: tuple[float, ...]
    criterion_defects: tuple[float, ...]
    norm_defects: tuple[float, ...]
    ambient_defects: Mapping[str, tuple[float, ...]]
    criterion_rate: float | None
    gram_rate: float | None
    verdict: str
    obs35_sequences_suffice: bool
    thresholds: VerdictThresholds
    notes: tuple[str, ...] = ()
    seed: int | None = None

    def csv_rows(self) -> list[str]:
        rows = ["n,norm,gram_defect,criterion_defect,norm_defect"]
        for n, nrm, g, c, m in zip(self.sizes, self.norms, self.gram_defects,
                                   self.criterion_defects, self.norm_defects):
            rows.append(f"{n},{nrm!r},{g!r},{c!r},{m!r}")
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w") as handle:
            handle.write("\n".join(self.csv_rows()) + "\n")

    def to_json_dict(self) -> dict:
        data = asdict(self)
        data["ambient_defects"] = {k: list(v) for k, v in self.ambient_defects.items()}
        data["thresholds"] = asdict(self.thresholds)
        return data

    def write_json(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_json_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _decide_verdict(criterion: Sequence[float], rate: float | None,
                    ambient_final: float, thr: VerdictThresholds) -> str:
    finest = criterion[-1]
    if finest <= thr.convergent_defect and (rate is None or rate >= thr.convergent_rate):
        return "norm-convergent"
    plateau = rate is not None and rate < thr.plateau_rate
    if finest > thr.plateau_defect and plateau and ambient_final <= thr.ambient_defect:
        return "weak-only"
    return "divergent"


def assemble_report(*, horizon: float, target: str, target_kind: str,
                    partitions: Sequence[Partition],
                    gram_defects: Sequence[float],
                    criterion_defects: Sequence[float],
                    norm_defects: Sequence[float],
                    ambient_defects: Mapping[str, Sequence[float]],
                    thresholds: VerdictThresholds | None = None,
                    notes: Sequence[str] = (), seed: int | None = None) -> ConvergenceReport:
    """Fit rates and apply the verdict rules to precomputed defect series."""
    thr = thresholds or VerdictThresholds()
    norms = tuple(p.norm for p in partitions)
    sizes = tuple(p.size for p in partitions)
    crit_rate = fit_rate(norms, criterion_defects)
    gram_rate = fit_rate(norms, gram_defects)
    ambient_final = max((series[-1] for series in ambient_defects.values()), default=0.0)
    verdict = _decide_verdict(tuple(criterion_defects), crit_rate, ambient_final, thr)
    obs35 = verdict == "norm-convergent" and (crit_rate is None or crit_rate >= thr.obs35_rate)
    all_notes = list(notes)
    if obs35:
        all_notes.append(
            "criterion defect decays at first order in the partition norm "
            "(second order per interval); uniform dyadic sequences suffice")
    return ConvergenceReport(
        horizon=horizon, target=target, target_kind=target_kind,
        sizes=sizes, norms=norms,
        gram_defects=tuple(float(g) for g in gram_defects),
        criterion_defects=tuple(float(c) for c in criterion_defects),
        norm_defects=tuple(float(m) for m in norm_defects),
        ambient_defects={k: tuple(float(x) for x in v) for k, v in ambient_defects.items()},
        criterion_rate=crit_rate, gram_rate=gram_rate, verdict=verdict,
        obs35_sequences_suffice=obs35, thresholds=thr,
        notes=tuple(all_notes), seed=seed)


def _hermitian_top_eigenvalue(matrix: np.ndarray) -> float:
    herm = (matrix + dagger(matrix)) / 2.0
    return float(np.linalg.eigvalsh(herm)[-1])


def convergence_verdict(section: UnitExpression, generator: OperatorKernel,
                        horizon: float, schedule: Sequence[Partition], *,
                        candidate: str | None = None,
                        extension: ExtendedGenerator | None = None,
                        thresholds: VerdictThresholds | None = None,
                        threads: int = 1, seed: int | None = None) -> ConvergenceReport:
    """Run the full convergence analysis of a section over a schedule.

    The limit data comes from the adjoined label of the section's
    extension.  With ``candidate`` set, the criterion pairing is taken
    against that ambient unit instead, which tests whether the section
    converges to it; the limit gram stays the one the extension predicts.
    """
    ext = extension or extend_generator(section, generator, seed=seed or 7)
    semigroup = ext.semigroup()
    d = generator.dim
    eye = unit_element(d)

    target = candidate if candidate is not None else ext.zeta
    if target not in semigroup.labels:
        raise KeyError(f"unknown target label {target!r}")
    target_kind = "ambient" if candidate is not None else "adjoined"
    target_expr = unit_expression(target, d)

    limit_gram = ext.diagonal.expm(horizon)          # pairing of the limit with itself
    limit_gram_one = limit_gram.apply(eye)
    target_gram_one = semigroup.entry(target, target, horizon).apply(eye)
    ambient_limits = {s: semigroup.entry(s, ext.zeta, horizon).apply(eye)
                      for s in generator.labels}

    schedule = sorted(schedule, key=lambda p: p.norm, reverse=True)

    def defects_for(partition: Partition):
        gram_map = eval_pairing(section, partition, section, partition, semigroup)
        gram_defect = superop_norm(gram_map - limit_gram)
        criterion_map = eval_pairing(target_expr, partition, section, partition, semigroup)
        criterion_one = criterion_map.apply(eye)
        criterion_defect = float(np.linalg.norm(criterion_one - limit_gram_one, 2))
        difference = (gram_map.apply(eye) - criterion_one - dagger(criterion_one)
                      + target_gram_one)
        norm_defect = _hermitian_top_eigenvalue(difference)
        ambient = {}
        for s in generator.labels:
            pairing = eval_pairing(unit_expression(s, d), partition, section, partition,
                                   semigroup).apply(eye)
            ambient[s] = float(np.linalg.norm(pairing - ambient_limits[s], 2))
        return gram_defect, criterion_defect, norm_defect, ambient

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(defects_for, schedule))
    else:
        results = [defects_for(p) for p in schedule]

    gram = [r[0] for r in results]
    crit = [r[1] for r in results]
    norm_d = [r[2] for r in results]
    ambient = {s: [r[3][s] for r in results] for s in generator.labels}

    notes = []
    if candidate is not None:
        gap = float(np.linalg.norm(target_gram_one - limit_gram_one, 2))
        if gap > 1e-12:
            notes.append(
                f"candidate gram differs from the predicted limit gram by {gap:.6e}; "
                "the limit unit lies outside the span of the candidate")
    return assemble_report(
        horizon=horizon, target=target, target_kind=target_kind,
        partitions=schedule, gram_defects=gram, criterion_defects=crit,
        norm_defects=norm_d, ambient_defects=ambient,
        thresholds=thresholds, notes=notes, seed=seed)


# -- second-order estimates and the product bound ----------------------------


@dataclass(frozen=True)
class Prop33Report:
    """Empirical constants and the partition-norm bound on the gram defect.

    ``second_order`` bounds the remainder of the section's pairing after
    removing identity and first-order parts; ``assembled_constant`` covers
    the per-interval distance between the section pairing and the limit
    semigroup.  The defect of every scheduled partition is compared with
    ``norm * horizon * exp(horizon * max(k_norm, second_order)) * assembled_constant``
    at the requested horizons (uniformity check).
    """

    k_norm: float
    second_order: float
    assembled_constant: float
    horizons: tuple[float, ...]
    rows: Mapping[float, tuple[dict, ...]]
    gram_rate: float | None
    bounds_hold: bool
    eventually_bounded: bool

    def __bool__(self) -> bool:
        return self.bounds_hold and self.eventually_bounded


def estimate_second_order(section: UnitExpression, extension: ExtendedGenerator,
                          times: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)) -> float:
    """Max of ``|<y_t, . y_t> - id - t K| / t^2`` over a small-time grid."""
    semigroup = extension.semigroup()
    d = semigroup.dim
    ident = Superoperator.identity(d)
    worst = 0.0
    for t in times:
        part = Partition((float(t),))
        pairing = eval_pairing(section, part, section, part, semigroup)
        remainder = pairing - ident - float(t) * extension.diagonal
        worst = max(worst, superop_norm(remainder) / float(t) ** 2)
    return worst


def prop33_bound_check(section: UnitExpression, extension: ExtendedGenerator,
                       horizon: float, schedule: Sequence[Partition], *,
                       horizon_fractions: Sequence[float] = (0.25, 0.5, 0.75, 1.0)
                       ) -> Prop33Report:
    """Check the first-order-in-norm bound on the gram defect, report only."""
    semigroup = extension.semigroup()
    k_norm = superop_norm(extension.diagonal)
    second = estimate_second_order(section, extension)
    growth = max(k_norm, second)
    assembled = second + k_norm ** 2 * float(np.exp(horizon * k_norm))

    schedule = sorted(schedule, key=lambda p: p.norm, reverse=True)
    rows: dict[float, tuple[dict, ...]] = {}
    bounds_hold = True
    eventually_bounded = True
    gram_series: list[float] = []
    norm_series: list[float] = []
    for fraction in horizon_fractions:
        t = horizon * fraction
        t_rows = []
        for base in schedule:
            part = base.scaled(t / base.length)
            pairing = eval_pairing(section, part, section, part, semigroup)
            defect = superop_norm(pairing - extension.diagonal.expm(t))
            bound = part.norm * t * float(np.exp(t * growth)) * assembled
            size_bound = float(np.exp(part.length * growth))
            size = superop_norm(pairing)
            ok = defect <= bound + 1e-12
            bounded = size <= size_bound + 1e-9
            bounds_hold = bounds_hold and ok
            eventually_bounded = eventually_bounded and bounded
            t_rows.append({
                "n": part.size, "norm": part.norm, "gram_defect": defect,
                "bound": bound, "bound_ok": ok,
                "pairing_norm": size, "pairing_norm_bound": size_bound,
                "bounded_ok": bounded,
            })
            if fraction == horizon_fractions[-1]:
                gram_series.append(defect)
                norm_series.append(part.norm)
        rows[t] = tuple(t_rows)
    gram_rate = fit_rate(norm_series, gram_series)
    return Prop33Report(
        k_norm=k_norm, second_order=second, assembled_constant=assembled,
        horizons=tuple(horizon * f for f in horizon_fractions), rows=rows,
        gram_rate=gram_rate, bounds_hold=bounds_hold,
        eventually_bounded=eventually_bounded)
