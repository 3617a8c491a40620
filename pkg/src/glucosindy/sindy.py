"""Candidate library over (B, C, G, b) and sequential thresholded least squares."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .lstsq import lstsq
from .timeseries import DEFAULT_TIME_UNIT_MINUTES, DaySegment, ShiftConfig, differentiate

# Fixed variable order: absorbed bolus, absorbed carbs, glucose, basal.
VARIABLES = ("B", "C", "G", "b")
TRIG_FUNCS = ("sin", "cos")
_SUPERSCRIPT = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


class EmptyModelError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class TermDescriptor:
    """A monomial ``prod(v**e)`` over :data:`VARIABLES`, or ``func(var)`` for trig terms."""

    exponents: tuple = (0, 0, 0, 0)
    func: Optional[str] = None
    var: Optional[str] = None

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if len(exps) != len(VARIABLES) or min(exps) < 0:
            raise ValueError(f"bad exponents {self.exponents}")
        object.__setattr__(self, "exponents", exps)
        if self.func is not None:
            if self.func not in TRIG_FUNCS or self.var not in VARIABLES or any(exps):
                raise ValueError(f"bad function term {self.func}({self.var})")

    @classmethod
    def from_powers(cls, powers: Mapping[str, int]) -> "TermDescriptor":
        unknown = set(powers) - set(VARIABLES)
        if unknown:
            raise ValueError(f"unknown variables {sorted(unknown)}")
        return cls(tuple(powers.get(v, 0) for v in VARIABLES))

    @classmethod
    def parse(cls, name: str) -> "TermDescriptor":
        """Inverse of :attr:`name`, also accepting ``*`` and ``^``."""
        name = name.strip()
        if name == "1":
            return cls()
        for f in TRIG_FUNCS:
            if name.startswith(f + "(") and name.endswith(")"):
                return cls(func=f, var=name[len(f) + 1:-1])
        powers: dict[str, int] = {}
        sup = {c: str(i) for i, c in enumerate("⁰¹²³⁴⁵⁶⁷⁸⁹")}
        for factor in name.replace("*", "·").split("·"):
            factor = "".join(sup.get(ch, ch) for ch in factor.replace("^", ""))
            var, exp = factor[0], factor[1:] or "1"
            powers[var] = powers.get(var, 0) + int(exp)
        return cls.from_powers(powers)

    @property
    def sort_key(self) -> tuple:
        return (self.func or "", self.var or "", self.exponents)

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def powers(self) -> dict[str, int]:
        return {v: e for v, e in zip(VARIABLES, self.exponents) if e}

    @property
    def name(self) -> str:
        if self.func:
            return f"{self.func}({self.var})"
        if not self.degree:
            return "1"
        parts = [v if e == 1 else v + str(e).translate(_SUPERSCRIPT) for v, e in self.powers.items()]
        return "·".join(parts)

    def __str__(self) -> str:
        return self.name

    def evaluate(self, values: Mapping[str, np.ndarray]):
        if self.func:
            return getattr(np, self.func)(values[self.var])
        out = np.ones(np.shape(values["G"]))
        for v, e in self.powers.items():
            out = out * values[v] ** e
        return out

    def glucose_part(self) -> tuple:
        """Key of the factor that depends on G: ``("pow", e)`` or ``(func,)``."""
        if self.func:
            return (self.func,) if self.var == "G" else ("pow", 0)
        return ("pow", self.exponents[VARIABLES.index("G")])

    def input_part(self, values: Mapping[str, np.ndarray]):
        """The factor that does not depend on G."""
        if self.func:
            return getattr(np, self.func)(values[self.var]) if self.var != "G" else 1.0
        out = 1.0
        for v, e in self.powers.items():
            if v != "G":
                out = out * values[v] ** e
        return out


CONSTANT = TermDescriptor()


def library_terms(max_degree: int = 2, trig: bool = False) -> list[TermDescriptor]:
    """Constant, then monomials by degree in lexicographic variable order, then trig terms."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    terms = [CONSTANT]
    for deg in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(VARIABLES)), deg):
            exps = [0] * len(VARIABLES)
            for i in combo:
                exps[i] += 1
            terms.append(TermDescriptor(tuple(exps)))
    if trig:
        terms += [TermDescriptor(func=f, var=v) for v in VARIABLES for f in TRIG_FUNCS]
    return terms


@dataclass
class LibraryMatrix:
    """Library columns evaluated at every sample, after degenerate-column pruning.

    ``scale`` holds the divisor used for each column when thresholding.
    """

    terms: list[TermDescriptor]
    matrix: np.ndarray
    scale: np.ndarray
    pruned: list[TermDescriptor] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]


def column_scales(theta: np.ndarray, terms: Sequence[TermDescriptor]) -> np.ndarray:
    """Population std for ordinary columns; the constant column is scaled to unit norm."""
    scales = theta.std(axis=0)
    for j, t in enumerate(terms):
        if t == CONSTANT:
            scales[j] = np.linalg.norm(theta[:, j])
    return scales


def glucose_factor(key: tuple, G):
    """Evaluate the G-dependent factor identified by :meth:`TermDescriptor.glucose_part`."""
    if key[0] == "pow":
        e = key[1]
        if e == 0:
            return np.ones(np.shape(G))
        if e == 1:
            return G
        if e == 2:
            return G * G
        return G ** e
    return getattr(np, key[0])(G)


def _interval_means(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of a smooth sampled factor over the interval left and right of each sample.

    Trapezoid with a curvature correction from the local second difference;
    the two halves together give Simpson's rule over ``[i-1, i+1]``.
    """
    curv = np.empty_like(phi)
    curv[1:-1] = phi[:-2] - 2.0 * phi[1:-1] + phi[2:]
    curv[0], curv[-1] = curv[1], curv[-2]
    left = np.empty_like(phi)
    right = np.empty_like(phi)
    left[1:] = 0.5 * (phi[:-1] + phi[1:]) - curv[1:] / 12.0
    right[:-1] = 0.5 * (phi[:-1] + phi[1:]) - curv[:-1] / 12.0
    left[0], right[-1] = np.nan, np.nan
    return left, right


def evaluate_terms(values: Mapping[str, np.ndarray], terms: Sequence[TermDescriptor],
                   alignment: str = "hold") -> np.ndarray:
    """Library columns at every sample.

    With ``alignment="hold"`` each row is the mean of the term over the
    intervals its difference stencil spans (one interval at the two ends, two
    in the interior), with inputs held constant on each interval and the
    glucose factor integrated by quadrature. A central difference of a
    held-input trajectory is exactly the mean of its right-hand side over the
    stencil, so the regression sees no discretisation bias. ``"sample"``
    evaluates everything pointwise.
    """
    if alignment not in ("hold", "sample"):
        raise ValueError(f"unknown alignment {alignment!r}")
    n = len(values["G"])
    if alignment == "sample" or n < 3:
        cols = [np.broadcast_to(np.asarray(t.evaluate(values), dtype=float), (n,)) for t in terms]
        return np.column_stack(cols) if cols else np.zeros((n, 0))
    G = np.asarray(values["G"], dtype=float)
    means: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
    cols = []
    for t in terms:
        key = t.glucose_part()
        if key not in means:
            means[key] = _interval_means(np.asarray(glucose_factor(key, G), dtype=float))
        left, right = means[key]
        u = np.broadcast_to(np.asarray(t.input_part(values), dtype=float), (n,))
        col = np.empty(n)
        col[0] = u[0] * right[0]
        col[1:-1] = 0.5 * (u[:-2] * left[1:-1] + u[1:-1] * right[1:-1])
        col[-1] = u[-2] * left[-1]
        cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def library_from_values(values: Mapping[str, np.ndarray], terms: Sequence[TermDescriptor],
                        prune: bool = True, tol: float = 1e-9, alignment: str = "hold") -> LibraryMatrix:
    """Evaluate ``terms`` and drop columns that are numerically spanned by earlier ones.

    Constant-valued columns duplicate the constant term and go first; e.g. a
    flat basal day removes ``b`` and makes ``b·C`` a copy of ``C``.
    """
    theta = evaluate_terms(values, terms, alignment)
    if not prune:
        return LibraryMatrix(list(terms), theta, column_scales(theta, terms))
    keep, dropped, basis = [], [], []
    for j, t in enumerate(terms):
        col = theta[:, j]
        norm = np.linalg.norm(col)
        if norm == 0.0 or not np.all(np.isfinite(col)):
            dropped.append(t)
            continue
        r = col / norm
        for q in basis:
            r = r - q * (q @ r)
        for q in basis:  # second pass for stability
            r = r - q * (q @ r)
        rn = np.linalg.norm(r)
        if rn < tol:
            dropped.append(t)
            continue
        basis.append(r / rn)
        keep.append(j)
    kept = [terms[j] for j in keep]
    theta = theta[:, keep]
    return LibraryMatrix(kept, theta, column_scales(theta, kept), dropped)


def build_library(day: DaySegment, max_degree: int = 2, trig: bool = False,
                  prune: bool = True, alignment: str = "hold") -> LibraryMatrix:
    day.require_preprocessed()
    return library_from_values(day.inputs(), library_terms(max_degree, trig), prune=prune,
                               alignment=alignment)


@dataclass(frozen=True)
class SindyHyper:
    threshold: float = 0.1
    ridge: float = 1e-6
    max_degree: int = 2
    max_iter: int = 20
    trig: bool = False
    alignment: str = "hold"

    def as_dict(self) -> dict:
        return {"threshold": self.threshold, "ridge": self.ridge, "max_degree": self.max_degree,
                "max_iter": self.max_iter, "trig": self.trig, "alignment": self.alignment}


@dataclass(eq=False)
class SparseModel:
    """Right-hand side of dG/dt as a sparse combination of library terms.

    Only retained (nonzero) terms are stored; coefficients are in original units.
    """

    terms: list[TermDescriptor]
    coefficients: np.ndarray
    hyper: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.terms = list(self.terms)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(self.terms) != len(self.coefficients):
            raise ValueError("terms and coefficients differ in length")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("duplicate terms")

    @classmethod
    def from_dict(cls, coefs: Mapping[str, float], **kw) -> "SparseModel":
        """Build from ``{"G": -0.05, "B·G": -0.3, ...}`` (zero entries dropped)."""
        items = [(TermDescriptor.parse(k), float(v)) for k, v in coefs.items() if v != 0]
        return cls([t for t, _ in items], [v for _, v in items], **kw)

    @property
    def support(self) -> set[str]:
        return {t.name for t in self.terms}

    def as_dict(self) -> dict[str, float]:
        return {t.name: float(c) for t, c in zip(self.terms, self.coefficients)}

    def coefficient(self, term) -> float:
        if isinstance(term, str):
            term = TermDescriptor.parse(term)
        for t, c in zip(self.terms, self.coefficients):
            if t == term:
                return float(c)
        return 0.0

    def dense(self, terms: Sequence[TermDescriptor]) -> np.ndarray:
        """Coefficient vector aligned to ``terms``; raises if a retained term is missing."""
        index = {t: i for i, t in enumerate(terms)}
        out = np.zeros(len(terms))
        for t, c in zip(self.terms, self.coefficients):
            if t not in index:
                raise KeyError(f"term {t} not in target term list")
            out[index[t]] = c
        return out

    def same_as(self, other: "SparseModel") -> bool:
        return (self.terms == other.terms and np.array_equal(self.coefficients, other.coefficients)
                and self.hyper == other.hyper and self.provenance == other.provenance)

    def __str__(self) -> str:
        if not self.terms:
            return "dG/dt = 0"
        parts = [f"{c:+.6g}" + ("" if t == CONSTANT else f"·{t.name}")
                 for t, c in zip(self.terms, self.coefficients)]
        return "dG/dt = " + " ".join(parts)

    def to_json(self) -> str:
        doc = {
            "variables": list(VARIABLES),
            "terms": [
                {"exponents": t.powers, **({"function": t.func, "variable": t.var} if t.func else {}),
                 "name": t.name, "coefficient": float(c)}
                for t, c in zip(self.terms, self.coefficients)
            ],
            "hyper": self.hyper,
            "provenance": self.provenance,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SparseModel":
        doc = json.loads(text)
        if list(doc.get("variables", VARIABLES)) != list(VARIABLES):
            raise ValueError(f"unsupported variable set {doc.get('variables')}")
        terms, coefs = [], []
        for entry in doc["terms"]:
            if entry.get("function"):
                terms.append(TermDescriptor(func=entry["function"], var=entry["variable"]))
            else:
                terms.append(TermDescriptor.from_powers(entry["exponents"]))
            coefs.append(entry["coefficient"])
        return cls(terms, coefs, doc.get("hyper", {}), doc.get("provenance", {}))


def stlsq_path(lib: LibraryMatrix, y: np.ndarray, threshold: float = 0.1, ridge: float = 1e-6,
               max_iter: int = 20, normalize: bool = True):
    """Run sequential thresholded least squares.

    Returns ``(coefficients, active_sets)``: coefficients in original units for
    every library column, and the active mask at the start of each iteration.
    """
    theta = lib.matrix
    y = np.asarray(y, dtype=float)
    n_rows, n_cols = theta.shape
    if n_rows != len(y):
        raise ValueError(f"library has {n_rows} rows but target has {len(y)}")
    if n_rows < n_cols:
        raise ValueError(f"underdetermined: {n_rows} rows < {n_cols} columns")
    if threshold < 0 or ridge < 0:
        raise ValueError("threshold and ridge must be >= 0")
    scale = lib.scale.copy() if normalize else np.ones(n_cols)
    scale[scale == 0] = 1.0
    scaled = theta / scale

    active = np.ones(n_cols, dtype=bool)
    path = []
    coef = np.zeros(n_cols)
    converged = False
    for _ in range(max_iter):
        path.append(active.copy())
        coef = np.zeros(n_cols)
        coef[active] = lstsq(scaled[:, active], y, ridge=ridge)
        survivors = active & (np.abs(coef) >= threshold)
        if not survivors.any():
            raise EmptyModelError(f"empty model at threshold {threshold}: every term fell below it")
        if np.array_equal(survivors, active):
            converged = True
            break
        active = survivors
    if not converged:
        warnings.warn(f"STLSQ did not settle within {max_iter} iterations", stacklevel=2)
        coef[~active] = 0.0
        coef[np.abs(coef) < threshold] = 0.0
    return coef / scale, path


def stlsq(lib: LibraryMatrix, y: np.ndarray, threshold: float = 0.1, ridge: float = 1e-6,
          max_iter: int = 20, normalize: bool = True) -> SparseModel:
    coef, path = stlsq_path(lib, y, threshold, ridge, max_iter, normalize)
    keep = np.flatnonzero(coef)
    hyper = {"threshold": threshold, "ridge": ridge, "max_iter": max_iter, "iterations": len(path)}
    return SparseModel([lib.terms[j] for j in keep], coef[keep], hyper)


def fit_day(day: DaySegment, shifts: ShiftConfig, hyper: SindyHyper = SindyHyper(),
            time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES) -> SparseModel:
    """Shift the day's absorbed inputs, differentiate glucose and run STLSQ."""
    if day.shifts != shifts:
        day = day.with_shifts(shifts)
    try:
        lib = build_library(day, hyper.max_degree, hyper.trig, alignment=hyper.alignment)
        y = differentiate(day.glucose, time_unit_minutes).values
        model = stlsq(lib, y, hyper.threshold, hyper.ridge, hyper.max_iter)
    except ValueError as exc:
        raise FitError(f"fit failed for day {day.date} with shifts {shifts}: {exc}") from exc
    model.hyper = {**hyper.as_dict(), "iterations": model.hyper["iterations"],
                   "time_unit_minutes": time_unit_minutes}
    model.provenance = {"train_day": day.date.isoformat(), "bolus_shift": shifts.bolus_steps,
                        "carb_shift": shifts.carb_steps}
    return model
