"""Regression trees, bagged ensembles, and gradient-boosted chains.

All three share one node type and one candidate rule: split points are the
midpoints of consecutive distinct sorted feature values, boundary ties route
left (`x[f] <= threshold`), and equal-gain ties resolve to the lowest feature
index, then the lowest threshold. Categorical codes are treated as ordinal
numerics; that is a documented consequence of the integer label encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import Rng, matrix

# relative floor: a split must beat float noise on the parent's SSE scale
_GAIN_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class TreeNode:
    """Split node (feature, threshold, children) or leaf (value only)."""

    feature: Optional[int] = None
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.feature is None:
            if self.value is None or self.left is not None or self.right is not None:
                raise ValueError("leaf nodes carry a value and no children")
            v = np.asarray(self.value, dtype=np.float64)
            if v.ndim != 1 or not np.isfinite(v).all():
                raise ValueError("leaf value must be a finite 1-D vector")
            object.__setattr__(self, "value", v)
        else:
            if self.left is None or self.right is None or self.value is not None:
                raise ValueError("split nodes carry two children and no value")
            if not np.isfinite(self.threshold):
                raise ValueError("split threshold must be finite")

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def _node_sse(y: np.ndarray) -> float:
    centered = y - y.mean(axis=0)
    return float((centered * centered).sum())


def _variance_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (feature, threshold) by summed per-target SSE reduction, or None."""
    m = x.shape[0]
    sse_parent = _node_sse(y)
    if sse_parent == 0.0:
        return None
    floor = _GAIN_EPS * (1.0 + sse_parent)
    best_gain = floor
    best = None
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        v = x[order, f]
        ys = y[order]
        cut = np.nonzero(v[1:] > v[:-1])[0] + 1  # left block sizes
        cut = cut[(cut >= min_leaf) & (cut <= m - min_leaf)]
        if cut.size == 0:
            continue
        cy = np.cumsum(ys, axis=0)
        cy2 = np.cumsum(ys * ys, axis=0)
        nl = cut.astype(np.float64)[:, None]
        syl, sy2l = cy[cut - 1], cy2[cut - 1]
        syr, sy2r = cy[-1] - syl, cy2[-1] - sy2l
        sse = (sy2l - syl * syl / nl).sum(axis=1)
        sse += (sy2r - syr * syr / (m - nl)).sum(axis=1)
        gains = sse_parent - sse
        j = int(np.argmax(gains))  # first max: lowest threshold in-feature
        if gains[j] > best_gain:
            best_gain = float(gains[j])
            best = (f, (v[cut[j] - 1] + v[cut[j]]) / 2.0)
    return best


def _grow(x: np.ndarray, y: np.ndarray, depth_left: int, min_leaf: int) -> TreeNode:
    if depth_left == 0 or x.shape[0] < 2 * min_leaf:
        return TreeNode(value=y.mean(axis=0))
    found = _variance_split(x, y, min_leaf)
    if found is None:
        return TreeNode(value=y.mean(axis=0))
    f, threshold = found
    mask = x[:, f] <= threshold
    return TreeNode(
        feature=f, threshold=float(threshold),
        left=_grow(x[mask], y[mask], depth_left - 1, min_leaf),
        right=_grow(x[~mask], y[~mask], depth_left - 1, min_leaf),
    )


def _check_xy(x, y):
    x = matrix(x)
    y = matrix(y)
    if x.shape[0] == 0:
        raise ValueError("empty input")
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
    return x, y


def tree_fit(x, y, max_depth: int = 10, min_samples_leaf: int = 5) -> TreeNode:
    """Greedy variance-reduction tree; leaves hold per-target means."""
    x, y = _check_xy(x, y)
    if max_depth < 0 or min_samples_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")
    if x.shape[0] < 2 * min_samples_leaf:
        raise ValueError(
            f"need at least {2 * min_samples_leaf} rows, got {x.shape[0]}")
    return _grow(x, y, max_depth, min_samples_leaf)


def tree_predict(node: TreeNode, x) -> np.ndarray:
    x = matrix(x)
    k = _leaf_width(node)
    out = np.empty((x.shape[0], k))
    _route(node, x, np.arange(x.shape[0]), out)
    return out


def _leaf_width(node: TreeNode) -> int:
    while not node.is_leaf:
        node = node.left
    return node.value.shape[0]


def _route(node: TreeNode, x: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.value
        return
    if node.feature >= x.shape[1]:
        raise ValueError(
            f"tree splits on feature {node.feature} but input has {x.shape[1]} columns")
    go_left = x[idx, node.feature] <= node.threshold
    _route(node.left, x, idx[go_left], out)
    _route(node.right, x, idx[~go_left], out)


# --- bagged ensemble ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    seed: int
    bootstrap_indices: tuple  # one (n,) int array per tree, kept for audit

    def __post_init__(self):
        if len(self.trees) != len(self.bootstrap_indices):
            raise ValueError("one bootstrap index array per tree required")
        if not self.trees:
            raise ValueError("forest needs at least one tree")


def forest_fit(x, y, n_estimators: int = 100, max_depth: int = 20,
               min_samples_leaf: int = 1, seed: int = 0,
               bootstrap: bool = True) -> ForestModel:
    """Bagged trees on seeded bootstrap resamples (n draws with replacement).

    Each tree owns an independent substream, so the forest is reproducible
    from `seed` alone and trees could be grown in any order or in parallel.
    """
    x, y = _check_xy(x, y)
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    n = x.shape[0]
    root = Rng(seed)
    trees = []
    picks = []
    for t in range(n_estimators):
        if bootstrap:
            idx = root.spawn(t).integers(0, n, n)
        else:
            idx = np.arange(n, dtype=np.int64)
        trees.append(tree_fit(x[idx], y[idx], max_depth=max_depth,
                              min_samples_leaf=min_samples_leaf))
        picks.append(idx)
    return ForestModel(trees=tuple(trees), seed=seed,
                       bootstrap_indices=tuple(picks))


def forest_predict(model: ForestModel, x) -> np.ndarray:
    preds = [tree_predict(t, x) for t in model.trees]
    return np.mean(preds, axis=0)


# --- gradient-boosted trees --------------------------------------------------


def gbt_leaf_weight(grad_sum: float, hess_sum: float, reg_lambda: float) -> float:
    """Optimal leaf output for the regularized quadratic objective: -G/(H+lambda)."""
    denom = hess_sum + reg_lambda
    if denom <= 0.0:
        raise ValueError(f"hessian sum plus lambda must be positive, got {denom}")
    return -grad_sum / denom


def gbt_split_gain(grad_left: float, hess_left: float, grad_right: float,
                   hess_right: float, reg_lambda: float, gamma: float) -> float:
    """Half the regularized score improvement of a split, minus the gamma toll."""
    dl = hess_left + reg_lambda
    dr = hess_right + reg_lambda
    dp = hess_left + hess_right + reg_lambda
    if dl <= 0.0 or dr <= 0.0 or dp <= 0.0:
        raise ValueError("all regularized hessian sums must be positive")
    score = grad_left ** 2 / dl + grad_right ** 2 / dr
    score -= (grad_left + grad_right) ** 2 / dp
    return 0.5 * score - gamma


@dataclass(frozen=True, eq=False)
class GbtModel:
    """One boosting chain per target over a shared base score."""

    base_score: np.ndarray  # (k,) train target means
    learning_rate: float
    reg_lambda: float
    gamma: float
    chains: tuple  # k tuples of TreeNode, one tree per round

    def __post_init__(self):
        base = np.asarray(self.base_score, dtype=np.float64)
        if base.ndim != 1 or not np.isfinite(base).all():
            raise ValueError("base_score must be a finite 1-D vector")
        object.__setattr__(self, "base_score", base)
        if len(self.chains) != base.shape[0]:
            raise ValueError("one chain per target required")
        if not (0.0 <= self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in [0, 1]")

    @property
    def rounds(self) -> int:
        return len(self.chains[0]) if self.chains else 0


def _gbt_grow(x: np.ndarray, g: np.ndarray, depth_left: int,
              reg_lambda: float, gamma: float) -> TreeNode:
    grad_sum = float(g.sum())
    hess_sum = float(g.shape[0])  # squared error: h = 1 per sample
    weight = gbt_leaf_weight(grad_sum, hess_sum, reg_lambda)
    if depth_left == 0 or g.shape[0] < 2:
        return TreeNode(value=np.array([weight]))
    m = g.shape[0]
    best_gain = 0.0  # split accepted only on strictly positive gain
    best = None
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        v = x[order, f]
        cut = np.nonzero(v[1:] > v[:-1])[0] + 1
        if cut.size == 0:
            continue
        cg = np.cumsum(g[order])
        gl = cg[cut - 1]
        hl = cut.astype(np.float64)
        gr = grad_sum - gl
        gains = 0.5 * (gl * gl / (hl + reg_lambda)
                       + gr * gr / (m - hl + reg_lambda)
                       - grad_sum ** 2 / (hess_sum + reg_lambda)) - gamma
        j = int(np.argmax(gains))
        if gains[j] > best_gain:
            best_gain = float(gains[j])
            best = (f, (v[cut[j] - 1] + v[cut[j]]) / 2.0)
    if best is None:
        return TreeNode(value=np.array([weight]))
    f, threshold = best
    mask = x[:, f] <= threshold
    return TreeNode(
        feature=f, threshold=float(threshold),
        left=_gbt_grow(x[mask], g[mask], depth_left - 1, reg_lambda, gamma),
        right=_gbt_grow(x[~mask], g[~mask], depth_left - 1, reg_lambda, gamma),
    )


def gbt_fit(x, y, rounds: int = 100, learning_rate: float = 0.3,
            max_depth: int = 6, reg_lambda: float = 1.0,
            gamma: float = 0.0) -> GbtModel:
    """Boosted squared-error chains: g = prediction - y, h = 1, per target."""
    x, y = _check_xy(x, y)
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 rows, got {x.shape[0]}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if reg_lambda < 0.0 or gamma < 0.0:
        raise ValueError("reg_lambda and gamma must be >= 0")
    base = y.mean(axis=0)
    chains = []
    for j in range(y.shape[1]):
        pred = np.full(x.shape[0], base[j])
        target = y[:, j]
        chain = []
        for _ in range(rounds):
            tree = _gbt_grow(x, pred - target, max_depth, reg_lambda, gamma)
            pred += learning_rate * tree_predict(tree, x)[:, 0]
            chain.append(tree)
        chains.append(tuple(chain))
    return GbtModel(base_score=base, learning_rate=learning_rate,
                    reg_lambda=reg_lambda, gamma=gamma, chains=tuple(chains))


def gbt_predict(model: GbtModel, x) -> np.ndarray:
    x = matrix(x)
    out = np.tile(model.base_score, (x.shape[0], 1))
    for j, chain in enumerate(model.chains):
        for tree in chain:
            out[:, j] += model.learning_rate * tree_predict(tree, x)[:, 0]
    return out
