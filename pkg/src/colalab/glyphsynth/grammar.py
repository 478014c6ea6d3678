"""Composition trees over primitives and the synthetic charset built from them."""

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..exceptions import CapacityExceededError, InvalidArgumentError

LEFT_RIGHT = "lr"
TOP_BOTTOM = "tb"
ENCLOSURE = "enc"
OVERLAY = "ovl"
OPERATORS = (LEFT_RIGHT, TOP_BOTTOM, ENCLOSURE, OVERLAY)

MAX_DEPTH = 3
MAX_LEAVES = 4
SPLIT_RATIOS = (0.35, 0.5, 0.65)
ENCLOSURE_RATIOS = (0.45, 0.55)

_OP_WEIGHTS = {LEFT_RIGHT: 0.35, TOP_BOTTOM: 0.35, ENCLOSURE: 0.15, OVERLAY: 0.15}
_LEAF_COUNT_WEIGHTS = {1: 0.05, 2: 0.4, 3: 0.35, 4: 0.2}


@dataclass(frozen=True)
class Node:
    """Internal tree node. Leaves are plain ``int`` primitive ids."""

    op: str
    ratio: float
    children: tuple

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise InvalidArgumentError(f"unknown layout operator {self.op!r}")
        if not 0.25 <= self.ratio <= 0.75:
            raise InvalidArgumentError(f"split ratio {self.ratio} outside [0.25, 0.75]")
        if len(self.children) != 2:
            raise InvalidArgumentError("layout nodes take exactly two children")


def tree_leaves(tree):
    if isinstance(tree, Node):
        return tree_leaves(tree.children[0]) + tree_leaves(tree.children[1])
    return [int(tree)]


def tree_depth(tree):
    if isinstance(tree, Node):
        return 1 + max(tree_depth(c) for c in tree.children)
    return 0


def serialize(tree, ratios=True):
    """Compact string form; lexicographic order over it is the canonical class order."""
    if isinstance(tree, Node):
        head = f"{tree.op}[{tree.ratio:.2f}]" if ratios else tree.op
        return f"{head}({serialize(tree.children[0], ratios)},{serialize(tree.children[1], ratios)})"
    return f"p{int(tree):03d}"


def tree_to_json(tree):
    if isinstance(tree, Node):
        return {"op": tree.op, "ratio": tree.ratio, "children": [tree_to_json(c) for c in tree.children]}
    return {"primitive": int(tree)}


def tree_from_json(record):
    if "primitive" in record:
        return int(record["primitive"])
    return Node(record["op"], float(record["ratio"]), tuple(tree_from_json(c) for c in record["children"]))


@dataclass(frozen=True)
class GlyphSpec:
    class_id: int
    tree: object

    @property
    def component_multiset(self):
        return tuple(sorted(tree_leaves(self.tree)))

    @property
    def key(self):
        return serialize(self.tree)

    def to_json(self):
        return {
            "class_id": self.class_id,
            "tree": tree_to_json(self.tree),
            "component_multiset": list(self.component_multiset),
        }

    @classmethod
    def from_json(cls, record):
        return cls(int(record["class_id"]), tree_from_json(record["tree"]))


@lru_cache(maxsize=None)
def _count(n_prims, depth, leaves):
    if leaves == 1:
        return n_prims
    if depth == 0:
        return 0
    total = 0
    for n1 in range(1, leaves):
        a = _count(n_prims, depth - 1, n1)
        b = _count(n_prims, depth - 1, leaves - n1)
        # lr, tb and enc are ordered
        total += 3 * a * b
        # overlay is unordered with distinct children
        if n1 < leaves - n1:
            total += a * b
        elif n1 == leaves - n1:
            total += a * (a - 1) // 2
    return total


def tree_capacity(n_prims):
    """Number of distinct trees (ignoring split ratios) the grammar can build."""
    return sum(_count(n_prims, MAX_DEPTH, n) for n in range(1, MAX_LEAVES + 1))


def _canonical(op, ratio, left, right):
    if op == OVERLAY:
        # overlay is symmetric; order the children so it has a single spelling
        if serialize(left, False) > serialize(right, False):
            left, right = right, left
    return Node(op, ratio, (left, right))


def _random_ratio(op, rng):
    if op in (LEFT_RIGHT, TOP_BOTTOM):
        return float(rng.choice(SPLIT_RATIOS))
    if op == ENCLOSURE:
        return float(rng.choice(ENCLOSURE_RATIOS))
    return 0.5


def _random_tree(n_leaves, depth, leaf_sampler, rng):
    if n_leaves == 1:
        return leaf_sampler()
    options = [n1 for n1 in range(1, n_leaves)
               if n1 <= 2 ** (depth - 1) and n_leaves - n1 <= 2 ** (depth - 1)]
    n1 = int(rng.choice(options))
    ops = list(_OP_WEIGHTS)
    op = ops[rng.choice(len(ops), p=np.array(list(_OP_WEIGHTS.values())))]
    left = _random_tree(n1, depth - 1, leaf_sampler, rng)
    right = _random_tree(n_leaves - n1, depth - 1, leaf_sampler, rng)
    if op == OVERLAY and serialize(left, False) == serialize(right, False):
        op = LEFT_RIGHT
    return _canonical(op, _random_ratio(op, rng), left, right)


def _enumerate(n_prims, depth, leaves):
    if leaves == 1:
        yield from range(n_prims)
        return
    if depth == 0:
        return
    for n1 in range(1, leaves):
        lefts = list(_enumerate(n_prims, depth - 1, n1))
        rights = list(_enumerate(n_prims, depth - 1, leaves - n1))
        for op in (LEFT_RIGHT, TOP_BOTTOM, ENCLOSURE):
            ratio = 0.5
            for a in lefts:
                for b in rights:
                    yield Node(op, ratio, (a, b))
        for ia, a in enumerate(lefts):
            for ib, b in enumerate(rights):
                if n1 < leaves - n1 or (n1 == leaves - n1 and ia < ib):
                    yield _canonical(OVERLAY, 0.5, a, b)


def primitive_weights(n_prims, seed, exponent):
    """Seeded permutation of a Zipf profile over ``n_prims`` primitives."""
    ranks = np.random.default_rng([seed, 7]).permutation(n_prims)
    w = (ranks + 1.0) ** (-exponent)
    return w / w.sum()


def rare_primitives(n_prims, seed, rare_fraction):
    n_rare = int(round(rare_fraction * n_prims))
    n_rare = min(n_rare, n_prims - 1)
    perm = np.random.default_rng([seed, 11]).permutation(n_prims)
    return tuple(sorted(int(p) for p in perm[:n_rare]))


def build_charset(bank, num_classes, seed, rare_fraction=0.6, rare_uses=2,
                  zipf_exponent=1.0):
    """Build ``num_classes`` distinct glyph classes over ``bank``.

    The lexicon is long-tailed like a radical inventory: a seeded
    ``rare_fraction`` of the primitives are each placed into exactly
    ``rare_uses`` classes and never drawn otherwise, while the remaining
    common primitives are drawn with Zipf weights. Each common primitive is
    also forced into one class so every primitive is used. Trees are unique
    ignoring split ratios. The result is sorted by serialized tree and
    ``class_id`` is the index in that order.
    """
    n_prims = len(bank)
    capacity = tree_capacity(n_prims)
    if num_classes > capacity:
        raise CapacityExceededError(num_classes, capacity)
    rng = np.random.default_rng(seed)
    rare = rare_primitives(n_prims, seed, rare_fraction)
    common = [p for p in range(n_prims) if p not in rare]
    forced_queue = list(common) + [p for p in rare for _ in range(rare_uses)]
    if num_classes < len(forced_queue):
        raise InvalidArgumentError(
            f"num_classes={num_classes} cannot place all {n_prims} primitives"
        )
    weights = primitive_weights(len(common), seed, zipf_exponent)
    sizes = np.array(list(_LEAF_COUNT_WEIGHTS))
    size_p = np.array(list(_LEAF_COUNT_WEIGHTS.values()))

    trees = {}
    attempts = 0
    limit = 50 * num_classes + 10_000
    while len(trees) < num_classes and attempts < limit:
        attempts += 1
        forced = forced_queue[len(trees)] if len(trees) < len(forced_queue) else None
        n_leaves = int(rng.choice(sizes, p=size_p))
        slot = int(rng.integers(n_leaves)) if forced is not None else -1
        counter = iter(range(n_leaves))

        def leaf():
            if next(counter) == slot:
                return forced
            return int(common[rng.choice(len(common), p=weights)])

        tree = _random_tree(n_leaves, MAX_DEPTH, leaf, rng)
        key = serialize(tree, ratios=False)
        if key not in trees:
            trees[key] = tree

    if len(trees) < num_classes:
        # near capacity random draws stall; top up by exhaustive enumeration,
        # which ignores the rare tier
        if capacity > 500_000:
            raise CapacityExceededError(num_classes, len(trees))
        pool = [t for n in range(1, MAX_LEAVES + 1) for t in _enumerate(n_prims, MAX_DEPTH, n)]
        pool = [t for t in pool if serialize(t, False) not in trees]
        order = rng.permutation(len(pool))
        for idx in order[: num_classes - len(trees)]:
            trees[serialize(pool[idx], False)] = pool[idx]

    ordered = sorted(trees.values(), key=serialize)
    return [GlyphSpec(i, t) for i, t in enumerate(ordered)]


def document_frequency(charset):
    """Number of classes each primitive occurs in."""
    freq = Counter()
    for spec in charset:
        freq.update(set(spec.component_multiset))
    return freq
