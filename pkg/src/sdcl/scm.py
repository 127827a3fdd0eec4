"""Exact oracle for a four-variable discrete structural causal model.

The graph is B -> S -> X -> Y with the extra edge S -> Y, so S confounds
X and Y through the back door. Everything here is small enough for exact
enumeration; the sampler and the plug-in estimator exist to validate the
stratified adjustment against ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

ROW_TOL = 1e-12


def _validate_dist(name: str, arr: np.ndarray, axis: int) -> None:
    if np.any(arr < 0) or np.any(arr > 1):
        raise ConfigError(name, "probabilities must lie in [0, 1]")
    sums = arr.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        raise ConfigError(name, f"rows must sum to 1 within {ROW_TOL}")


@dataclass(frozen=True)
class SCMSpec:
    """Value sets and conditional tables of the model.

    Tables are indexed by the positions of values in the corresponding
    value tuples: p_b[i] = P(B = b_vals[i]), p_s_given_b[i, j] =
    P(S = s_vals[j] | B = b_vals[i]), and so on; p_y_given_xs is indexed
    (x, s, y).
    """

    b_vals: tuple
    s_vals: tuple
    x_vals: tuple
    y_vals: tuple
    p_b: np.ndarray
    p_s_given_b: np.ndarray
    p_x_given_s: np.ndarray
    p_y_given_xs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b_vals", tuple(self.b_vals))
        object.__setattr__(self, "s_vals", tuple(self.s_vals))
        object.__setattr__(self, "x_vals", tuple(self.x_vals))
        object.__setattr__(self, "y_vals", tuple(self.y_vals))
        for name in ("p_b", "p_s_given_b", "p_x_given_s", "p_y_given_xs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        nb, ns, nx, ny = (len(self.b_vals), len(self.s_vals),
                          len(self.x_vals), len(self.y_vals))
        if min(nb, ns, nx, ny) < 1:
            raise ConfigError("scm", "every variable needs at least one value")
        if self.p_b.shape != (nb,):
            raise ShapeError(f"p_b shape {self.p_b.shape} != ({nb},)")
        if self.p_s_given_b.shape != (nb, ns):
            raise ShapeError(f"p_s_given_b shape {self.p_s_given_b.shape} != ({nb}, {ns})")
        if self.p_x_given_s.shape != (ns, nx):
            raise ShapeError(f"p_x_given_s shape {self.p_x_given_s.shape} != ({ns}, {nx})")
        if self.p_y_given_xs.shape != (nx, ns, ny):
            raise ShapeError(
                f"p_y_given_xs shape {self.p_y_given_xs.shape} != ({nx}, {ns}, {ny})"
            )
        _validate_dist("scm.p_b", self.p_b, 0)
        _validate_dist("scm.p_s_given_b", self.p_s_given_b, 1)
        _validate_dist("scm.p_x_given_s", self.p_x_given_s, 1)
        _validate_dist("scm.p_y_given_xs", self.p_y_given_xs, 2)

    def style_prior(self) -> np.ndarray:
        """Marginal P(S), the stratum weights of the adjustment formula."""
        return self.p_b @ self.p_s_given_b

    def to_dict(self) -> dict:
        return {
            "b_vals": list(self.b_vals),
            "s_vals": list(self.s_vals),
            "x_vals": list(self.x_vals),
            "y_vals": list(self.y_vals),
            "p_b": self.p_b.tolist(),
            "p_s_given_b": self.p_s_given_b.tolist(),
            "p_x_given_s": self.p_x_given_s.tolist(),
            "p_y_given_xs": self.p_y_given_xs.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "SCMSpec":
        required = ("b_vals", "s_vals", "x_vals", "y_vals",
                    "p_b", "p_s_given_b", "p_x_given_s", "p_y_given_xs")
        for key in required:
            if key not in d:
                raise ConfigError(f"scm.{key}", "missing field")
        for key in d:
            if key not in required:
                raise ConfigError(f"scm.{key}", "unknown field")
        return SCMSpec(**{k: d[k] for k in required})

    @staticmethod
    def from_json(path: str) -> "SCMSpec":
        with open(path) as fh:
            return SCMSpec.from_dict(json.load(fh))


@dataclass(frozen=True)
class DistTable:
    """A table of P(Y = y | condition x), one row per x value.

    ``missing`` lists (x, s) strata an estimator never observed; rows whose
    strata are incomplete do not have to sum to one and are left partial.
    """

    x_vals: tuple
    y_vals: tuple
    probs: np.ndarray
    missing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "x_vals", tuple(self.x_vals))
        object.__setattr__(self, "y_vals", tuple(self.y_vals))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))
        if self.probs.shape != (len(self.x_vals), len(self.y_vals)):
            raise ShapeError(
                f"DistTable probs {self.probs.shape} != "
                f"({len(self.x_vals)}, {len(self.y_vals)})"
            )
        incomplete = {x for (x, _) in self.missing}
        for i, x in enumerate(self.x_vals):
            if x in incomplete:
                continue
            row = self.probs[i]
            if np.any(row < -1e-12) or abs(row.sum() - 1.0) > 1e-9:
                raise ShapeError(f"DistTable row for x={x!r} is not a distribution")

    def prob(self, x, y) -> float:
        return float(self.probs[self.x_vals.index(x), self.y_vals.index(y)])

    def row(self, x) -> np.ndarray:
        return self.probs[self.x_vals.index(x)].copy()


def observational_conditional(spec: SCMSpec) -> DistTable:
    """P(Y | X) by exact enumeration and Bayes inversion.

    Conditioning on an x with zero marginal probability is a domain error.
    """
    p_s = spec.style_prior()
    p_sx = p_s[:, None] * spec.p_x_given_s  # (ns, nx), joint over S and X
    p_x = p_sx.sum(axis=0)
    rows = np.zeros((len(spec.x_vals), len(spec.y_vals)))
    for i, x in enumerate(spec.x_vals):
        if p_x[i] <= 0.0:
            raise DomainError(f"P(X = {x!r}) = 0; conditional undefined")
        s_given_x = p_sx[:, i] / p_x[i]
        rows[i] = s_given_x @ spec.p_y_given_xs[i]
    return DistTable(spec.x_vals, spec.y_vals, rows)


def interventional_distribution(spec: SCMSpec) -> DistTable:
    """P(Y | do(X)) by back-door adjustment over S.

    Graph surgery removes the S -> X edge, so P(X | S) never enters; the
    result is invariant to any perturbation of that table.
    """
    p_s = spec.style_prior()
    rows = np.einsum("s,xsy->xy", p_s, spec.p_y_given_xs)
    return DistTable(spec.x_vals, spec.y_vals, rows)


@dataclass
class SampleBatch:
    """Ancestral samples as parallel columns; iterates as (b, s, x, y) tuples."""

    b: np.ndarray
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.b)

    def __iter__(self):
        return zip(self.b.tolist(), self.s.tolist(), self.x.tolist(), self.y.tolist())


def _draw_rows(table: np.ndarray, cond_idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized categorical draw, one row of ``table`` per condition index."""
    u = rng.random(len(cond_idx))
    cdf = np.cumsum(table, axis=1)
    idx = (u[:, None] > cdf[cond_idx]).sum(axis=1)
    return np.minimum(idx, table.shape[1] - 1)


def sample_observational(spec: SCMSpec, count: int, seed: int) -> SampleBatch:
    """Draw ``count`` ancestral samples B -> S -> X -> Y, seed-deterministic."""
    if count < 0:
        raise ConfigError("count", f"negative sample count {count}")
    rng = np.random.default_rng(seed)
    nb = len(spec.b_vals)
    b_idx = _draw_rows(spec.p_b[None, :], np.zeros(count, dtype=np.int64), rng)
    s_idx = _draw_rows(spec.p_s_given_b, b_idx, rng)
    x_idx = _draw_rows(spec.p_x_given_s, s_idx, rng)
    ns = len(spec.s_vals)
    flat_y = spec.p_y_given_xs.reshape(-1, len(spec.y_vals))
    y_idx = _draw_rows(flat_y, x_idx * ns + s_idx, rng)
    take = lambda vals, idx: np.asarray(vals)[idx]
    return SampleBatch(
        b=take(spec.b_vals, b_idx),
        s=take(spec.s_vals, s_idx),
        x=take(spec.x_vals, x_idx),
        y=take(spec.y_vals, y_idx),
    )


def _coerce_sxy(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(samples, SampleBatch):
        return samples.s, samples.x, samples.y
    rows = list(samples)
    if not rows:
        raise DomainError("estimator needs at least one sample")
    cols = list(zip(*rows))
    if len(cols) == 4:  # full (b, s, x, y) tuples are accepted; b is dropped
        cols = cols[1:]
    if len(cols) != 3:
        raise ShapeError("samples must be (s, x, y) or (b, s, x, y) tuples")
    return tuple(np.asarray(c) for c in cols)


def plugin_backdoor_estimator(samples) -> DistTable:
    """Stratified plug-in estimate of P(Y | do(X)) from (s, x, y) samples.

    Uses empirical P(y | x, s) and P(s) over the observed value sets. Any
    (x, s) cell with no observations is flagged in ``missing`` and its
    stratum is left out of that row's sum.
    """
    s, x, y = _coerce_sxy(samples)
    s_vals, s_idx = np.unique(s, return_inverse=True)
    x_vals, x_idx = np.unique(x, return_inverse=True)
    y_vals, y_idx = np.unique(y, return_inverse=True)
    nx, ns, ny = len(x_vals), len(s_vals), len(y_vals)

    counts = np.zeros((nx, ns, ny))
    np.add.at(counts, (x_idx, s_idx, y_idx), 1.0)
    n_xs = counts.sum(axis=2)
    p_s = np.bincount(s_idx, minlength=ns) / len(s)

    probs = np.zeros((nx, ny))
    missing = set()
    for i in range(nx):
        for j in range(ns):
            if n_xs[i, j] == 0:
                missing.add((x_vals[i], s_vals[j]))
                continue
            probs[i] += p_s[j] * counts[i, j] / n_xs[i, j]
    return DistTable(tuple(x_vals), tuple(y_vals), probs, frozenset(missing))


def naive_conditional_estimator(samples) -> DistTable:
    """Empirical P(Y | X), ignoring strata entirely."""
    _, x, y = _coerce_sxy(samples)
    x_vals, x_idx = np.unique(x, return_inverse=True)
    y_vals, y_idx = np.unique(y, return_inverse=True)
    counts = np.zeros((len(x_vals), len(y_vals)))
    np.add.at(counts, (x_idx, y_idx), 1.0)
    n_x = counts.sum(axis=1, keepdims=True)
    return DistTable(tuple(x_vals), tuple(y_vals), counts / n_x)


def tv_gap(a: DistTable, b: DistTable) -> dict:
    """Per-x total-variation distance between two tables on the same domain."""
    if a.x_vals != b.x_vals or a.y_vals != b.y_vals:
        raise DomainError("tv_gap requires matching value domains")
    gaps = 0.5 * np.abs(a.probs - b.probs).sum(axis=1)
    return {x: float(g) for x, g in zip(a.x_vals, gaps)}


def random_spec(seed: int, max_card: int = 3) -> SCMSpec:
    """A random dense SCM with small value sets, for protocol tests."""
    rng = np.random.default_rng(seed)
    nb, ns, nx, ny = rng.integers(2, max_card + 1, size=4)
    dirichlet = lambda shape: rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    return SCMSpec(
        b_vals=tuple(range(nb)),
        s_vals=tuple(range(ns)),
        x_vals=tuple(range(nx)),
        y_vals=tuple(range(ny)),
        p_b=rng.dirichlet(np.ones(nb)),
        p_s_given_b=dirichlet((nb, ns)),
        p_x_given_s=dirichlet((ns, nx)),
        p_y_given_xs=dirichlet((nx, ns, ny)),
    )
