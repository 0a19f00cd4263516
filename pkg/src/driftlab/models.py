"""Regression families with fixed hyperparameters and normalized importances.

Ridge is solved in closed form on mean-centered columns so the intercept is
unpenalized. The random forest and the gradient-boosted ensemble are grown
from scratch on numpy so that seeding, split tie-breaking, and importance
accounting follow one documented convention end to end:

* forest trees split on exact thresholds (midpoints between distinct sorted
  values) by maximal variance reduction over all features; ties resolve to
  the lowest feature index, then the lowest threshold;
* boosted trees split on quantile-binned histograms with the second-order
  squared-error gain S_L^2/(n_L + lambda) + S_R^2/(n_R + lambda) - S^2/(n + lambda)
  and leaf weights S/(n + lambda), shrunk by the learning rate;
* importances are per-feature totals (variance reduction for the forest,
  split gain for boosting, absolute coefficients for ridge), normalized to
  sum to one. A model whose totals are all zero reports the uniform vector
  and sets the degenerate flag.

Every stochastic component draws from a generator derived deterministically
from (seed, tree index) or (seed, stage index), so fits are bit-reproducible
and independent of execution order.
"""

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._version import MODEL_SCHEMA
from .errors import DomainError, ParameterError, SchemaError, SolverError
from .fileio import atomic_write_text
from .rng import derive_rng


class ModelFamily(str, Enum):
    RIDGE = "ridge"
    FOREST = "forest"
    GBT = "gbt"


@dataclass(frozen=True)
class RidgeSpec:
    alpha: float = 1.0


@dataclass(frozen=True)
class ForestSpec:
    n_trees: int = 200
    max_depth: int = 10
    seed: int = 0
    min_samples_split: int = 2
    bootstrap: bool = True


@dataclass(frozen=True)
class GbtSpec:
    learning_rate: float = 0.05
    max_depth: int = 6
    n_estimators: int = 800
    subsample_rows: float = 0.8
    subsample_cols: float = 0.8
    l2_lambda: float = 1.0
    n_bins: int = 256
    seed: int = 0


@dataclass
class Tree:
    """Flat binary regression tree; feature < 0 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                break
            node = idx[active]
            go_left = X[active, feat[active]] <= self.threshold[node]
            idx[active] = np.where(go_left, self.left[node], self.right[node])
        return self.value[idx]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
        )


@dataclass
class TrainedModel:
    """A fitted regressor plus its normalized feature-importance vector."""

    family: ModelFamily
    spec: object
    feature_names: List[str]
    importance: np.ndarray
    params: Dict[str, object]
    degenerate: bool = False
    extras: Dict[str, object] = field(default_factory=dict)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DomainError("design matrix must be 2-dimensional")
    if y.ndim != 1 or y.size != X.shape[0]:
        raise DomainError(f"target shape {y.shape} does not match {X.shape[0]} rows")
    if X.shape[0] < 2:
        raise DomainError("need at least 2 training rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DomainError("training data must be finite")
    return X, y


def _names_for(X: np.ndarray, feature_names: Optional[Sequence[str]]) -> List[str]:
    if feature_names is None:
        return [f"f{j}" for j in range(X.shape[1])]
    names = list(feature_names)
    if len(names) != X.shape[1]:
        raise SchemaError(f"{len(names)} feature names for {X.shape[1]} columns")
    return names


def _normalize_importance(totals: np.ndarray):
    totals = np.asarray(totals, dtype=float)
    d = totals.size
    s = totals.sum()
    if d == 0:
        return totals, True
    if s <= 0:
        return np.full(d, 1.0 / d), True
    return totals / s, False


# ---------------------------------------------------------------------------
# ridge


def fit_ridge(X, y, spec: RidgeSpec = RidgeSpec(), feature_names=None) -> TrainedModel:
    """Closed-form ridge with an unpenalized intercept via column centering."""
    X, y = _check_xy(X, y)
    if spec.alpha < 0:
        raise ParameterError("alpha must be non-negative")
    names = _names_for(X, feature_names)
    d = X.shape[1]
    y_mean = float(y.mean())
    if d == 0:
        return TrainedModel(
            family=ModelFamily.RIDGE,
            spec=spec,
            feature_names=names,
            importance=np.zeros(0),
            params={"coef": np.zeros(0), "intercept": y_mean},
            degenerate=True,
        )
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    yc = y - y_mean
    system = Xc.T @ Xc + spec.alpha * np.eye(d)
    rhs = Xc.T @ yc
    try:
        coef = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular ridge system (alpha={spec.alpha}): {exc}") from None
    intercept = y_mean - float(x_mean @ coef)
    importance, degenerate = _normalize_importance(np.abs(coef))
    return TrainedModel(
        family=ModelFamily.RIDGE,
        spec=spec,
        feature_names=names,
        importance=importance,
        params={"coef": coef, "intercept": intercept},
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# exact-split regression trees (random forest)


def _best_exact_split(Xs: np.ndarray, ys: np.ndarray):
    """Exhaustive variance-reduction split over all features of one node.

    Returns (feature, threshold, gain) or (None, 0.0, 0.0) when every feature
    is constant. Ties resolve to the lowest feature index, then the lowest
    threshold, matching np.argmin over the feature-major score layout.
    """
    m = ys.size
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ysrt = ys[order]
    csum = np.cumsum(ysrt, axis=0)
    csq = np.cumsum(ysrt * ysrt, axis=0)
    total = csum[-1, 0]
    total_sq = csq[-1, 0]
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    sum_left = csum[:-1]
    sq_left = csq[:-1]
    sse = (sq_left - sum_left * sum_left / n_left) + (
        (total_sq - sq_left) - (total - sum_left) ** 2 / n_right
    )
    scores = np.where(xs[1:] != xs[:-1], sse, np.inf).T  # (d, m-1), feature-major
    flat = int(np.argmin(scores))
    best = scores.flat[flat]
    if not np.isfinite(best):
        return None, 0.0, 0.0
    feat, pos = divmod(flat, m - 1)
    threshold = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    parent_sse = total_sq - total * total / m
    return int(feat), float(threshold), float(parent_sse - best)


def _grow_exact_tree(X, y, max_depth, min_samples_split, gain_totals):
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(np.arange(y.size), 0, root)]
    while stack:
        rows, depth, slot = stack.pop()
        ysub = y[rows]
        value[slot] = float(ysub.mean())
        if depth >= max_depth or rows.size < min_samples_split:
            continue
        total = ysub.sum()
        sq_total = (ysub * ysub).sum()
        # relative guard: a constant target can leave O(ulp) residual variance
        if sq_total - total * total / rows.size <= 1e-14 * max(sq_total, 1e-300):
            continue
        feat, thr, gain = _best_exact_split(X[rows], ysub)
        if feat is None or gain <= 0.0:
            continue
        go_left = X[rows, feat] <= thr
        feature[slot] = feat
        threshold[slot] = thr
        gain_totals[feat] += gain
        left_slot = new_node()
        right_slot = new_node()
        left[slot] = left_slot
        right[slot] = right_slot
        stack.append((rows[go_left], depth + 1, left_slot))
        stack.append((rows[~go_left], depth + 1, right_slot))
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
    )


def fit_forest(X, y, spec: ForestSpec = ForestSpec(), feature_names=None) -> TrainedModel:
    """Bagged exact-split trees; tree t draws from a generator keyed (seed, t)."""
    X, y = _check_xy(X, y)
    if X.shape[1] == 0:
        raise DomainError("forest needs at least one feature")
    if spec.n_trees < 1 or spec.max_depth < 1 or spec.min_samples_split < 2:
        raise ParameterError("forest spec out of range")
    names = _names_for(X, feature_names)
    n, d = X.shape
    gain_totals = np.zeros(d)
    trees = []
    for t in range(spec.n_trees):
        if spec.bootstrap:
            rows = derive_rng(spec.seed, t).integers(0, n, size=n)
            trees.append(
                _grow_exact_tree(X[rows], y[rows], spec.max_depth, spec.min_samples_split, gain_totals)
            )
        else:
            trees.append(_grow_exact_tree(X, y, spec.max_depth, spec.min_samples_split, gain_totals))
    importance, degenerate = _normalize_importance(gain_totals)
    return TrainedModel(
        family=ModelFamily.FOREST,
        spec=spec,
        feature_names=names,
        importance=importance,
        params={"trees": trees},
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# histogram gradient boosting


def _quantile_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    return np.unique(np.quantile(column, qs))


def _bin_codes(X: np.ndarray, edges: List[np.ndarray]) -> np.ndarray:
    codes = np.empty(X.shape, dtype=np.int64)
    for j in range(X.shape[1]):
        codes[:, j] = np.searchsorted(edges[j], X[:, j], side="left")
    return codes


def _grow_hist_tree(codes, residuals, rows, cols, edges, max_depth, lam, gain_totals):
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(rows, 0, root)]
    while stack:
        node_rows, depth, slot = stack.pop()
        r_node = residuals[node_rows]
        count = node_rows.size
        total = r_node.sum()
        value[slot] = total / (count + lam)
        if depth >= max_depth or count < 2:
            continue
        parent_score = total * total / (count + lam)
        best_gain = 0.0
        best_feat = -1
        best_bin = -1
        for f in cols:
            node_codes = codes[node_rows, f]
            n_edges = edges[f].size
            if n_edges == 0:
                continue
            sums = np.bincount(node_codes, weights=r_node, minlength=n_edges + 1)
            counts = np.bincount(node_codes, minlength=n_edges + 1)
            cum_sum = np.cumsum(sums)[:-1]
            cum_cnt = np.cumsum(counts)[:-1]
            valid = (cum_cnt > 0) & (cum_cnt < count)
            if not valid.any():
                continue
            gains = (
                cum_sum**2 / (cum_cnt + lam)
                + (total - cum_sum) ** 2 / (count - cum_cnt + lam)
                - parent_score
            )
            gains = np.where(valid, gains, -np.inf)
            b = int(np.argmax(gains))
            if gains[b] > best_gain:
                best_gain = float(gains[b])
                best_feat = int(f)
                best_bin = b
        if best_feat < 0 or best_gain <= 0.0:
            continue
        thr = float(edges[best_feat][best_bin])
        go_left = codes[node_rows, best_feat] <= best_bin
        feature[slot] = best_feat
        threshold[slot] = thr
        gain_totals[best_feat] += best_gain
        left_slot = new_node()
        right_slot = new_node()
        left[slot] = left_slot
        right[slot] = right_slot
        stack.append((node_rows[go_left], depth + 1, left_slot))
        stack.append((node_rows[~go_left], depth + 1, right_slot))
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
    )


def fit_gbt(X, y, spec: GbtSpec = GbtSpec(), feature_names=None) -> TrainedModel:
    """Stagewise squared-error boosting over quantile-binned histogram trees."""
    X, y = _check_xy(X, y)
    if X.shape[1] == 0:
        raise DomainError("boosting needs at least one feature")
    if spec.n_bins < 2:
        raise ParameterError("n_bins must be >= 2")
    if spec.learning_rate <= 0:
        raise ParameterError("learning_rate must be positive")
    if not (0 < spec.subsample_rows <= 1) or not (0 < spec.subsample_cols <= 1):
        raise ParameterError("subsample fractions must lie in (0, 1]")
    if spec.l2_lambda < 0 or spec.max_depth < 1 or spec.n_estimators < 0:
        raise ParameterError("gbt spec out of range")
    names = _names_for(X, feature_names)
    n, d = X.shape
    base = float(y.mean())
    edges = [_quantile_edges(X[:, j], spec.n_bins) for j in range(d)]
    codes = _bin_codes(X, edges)
    pred = np.full(n, base)
    gain_totals = np.zeros(d)
    trees: List[Tree] = []
    train_mse = []
    n_rows = max(1, int(spec.subsample_rows * n))
    n_cols = max(1, int(spec.subsample_cols * d))
    for stage in range(spec.n_estimators):
        rng = derive_rng(spec.seed, stage)
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else np.arange(n)
        cols = np.sort(rng.choice(d, size=n_cols, replace=False)) if n_cols < d else np.arange(d)
        residuals = y - pred
        tree = _grow_hist_tree(
            codes, residuals, rows, cols, edges, spec.max_depth, spec.l2_lambda, gain_totals
        )
        tree.value = tree.value * spec.learning_rate
        trees.append(tree)
        pred = pred + tree.predict(X)
        train_mse.append(float(np.mean((y - pred) ** 2)))
    importance, degenerate = _normalize_importance(gain_totals)
    return TrainedModel(
        family=ModelFamily.GBT,
        spec=spec,
        feature_names=names,
        importance=importance,
        params={"base": base, "trees": trees},
        degenerate=degenerate,
        extras={"train_mse": train_mse},
    )


# ---------------------------------------------------------------------------
# shared surface


def fit_model(spec, X, y, feature_names=None) -> TrainedModel:
    """Dispatch a fit by spec type."""
    if isinstance(spec, RidgeSpec):
        return fit_ridge(X, y, spec, feature_names)
    if isinstance(spec, ForestSpec):
        return fit_forest(X, y, spec, feature_names)
    if isinstance(spec, GbtSpec):
        return fit_gbt(X, y, spec, feature_names)
    raise ParameterError(f"unknown model spec {type(spec).__name__}")


def family_of(spec) -> ModelFamily:
    if isinstance(spec, RidgeSpec):
        return ModelFamily.RIDGE
    if isinstance(spec, ForestSpec):
        return ModelFamily.FOREST
    if isinstance(spec, GbtSpec):
        return ModelFamily.GBT
    raise ParameterError(f"unknown model spec {type(spec).__name__}")


def predict(model: TrainedModel, X, feature_names=None) -> np.ndarray:
    """Deterministic predictions from stored state."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("design matrix must be 2-dimensional")
    if X.shape[1] != len(model.feature_names):
        raise SchemaError(
            f"model expects {len(model.feature_names)} columns, got {X.shape[1]}"
        )
    if feature_names is not None and list(feature_names) != list(model.feature_names):
        raise SchemaError(
            f"column names {list(feature_names)} do not match model "
            f"features {list(model.feature_names)}"
        )
    if model.family is ModelFamily.RIDGE:
        coef = model.params["coef"]
        if len(coef) == 0:
            return np.full(X.shape[0], model.params["intercept"], dtype=float)
        return X @ coef + model.params["intercept"]
    if model.family is ModelFamily.FOREST:
        trees = model.params["trees"]
        total = np.zeros(X.shape[0])
        for tree in trees:
            total += tree.predict(X)
        return total / len(trees)
    if model.family is ModelFamily.GBT:
        out = np.full(X.shape[0], model.params["base"], dtype=float)
        for tree in model.params["trees"]:
            out += tree.predict(X)
        return out
    raise ParameterError(f"unknown family {model.family}")


_SPEC_TYPES = {
    ModelFamily.RIDGE: RidgeSpec,
    ModelFamily.FOREST: ForestSpec,
    ModelFamily.GBT: GbtSpec,
}


def render_model(model: TrainedModel) -> str:
    """Self-describing JSON dump sufficient for bit-exact reload."""
    if model.family is ModelFamily.RIDGE:
        params = {
            "coef": np.asarray(model.params["coef"]).tolist(),
            "intercept": model.params["intercept"],
        }
    elif model.family is ModelFamily.FOREST:
        params = {"trees": [t.to_dict() for t in model.params["trees"]]}
    else:
        params = {
            "base": model.params["base"],
            "trees": [t.to_dict() for t in model.params["trees"]],
        }
    doc = {
        "schema": MODEL_SCHEMA,
        "family": model.family.value,
        "spec": asdict(model.spec),
        "feature_names": list(model.feature_names),
        "degenerate": model.degenerate,
        "importance": np.asarray(model.importance).tolist(),
        "params": params,
    }
    return json.dumps(doc, indent=2) + "\n"


def dump_model(model: TrainedModel, path) -> None:
    atomic_write_text(path, render_model(model))


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != MODEL_SCHEMA:
        raise SchemaError(f"unexpected model schema {doc.get('schema')!r}")
    family = ModelFamily(doc["family"])
    spec = _SPEC_TYPES[family](**doc["spec"])
    raw = doc["params"]
    if family is ModelFamily.RIDGE:
        params = {
            "coef": np.asarray(raw["coef"], dtype=float),
            "intercept": float(raw["intercept"]),
        }
    elif family is ModelFamily.FOREST:
        params = {"trees": [Tree.from_dict(t) for t in raw["trees"]]}
    else:
        params = {
            "base": float(raw["base"]),
            "trees": [Tree.from_dict(t) for t in raw["trees"]],
        }
    return TrainedModel(
        family=family,
        spec=spec,
        feature_names=list(doc["feature_names"]),
        importance=np.asarray(doc["importance"], dtype=float),
        params=params,
        degenerate=bool(doc["degenerate"]),
    )
