"""Expression-tree genotypes and the genetic operators that act on them.

A gene is an arithmetic expression tree over one feature view: binary
function nodes (+, -, *, protected /) over feature and constant terminals.
An individual carries a fixed number of genes plus, once evaluated, a
trained softmax head and its fitness values. Trees are treated as immutable:
operators build new trees that share untouched branches.

Depth is counted in nodes: a lone terminal has depth 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .rng import GpRng

FUNCTIONS = ("+", "-", "*", "/")

DIV_EPS = 1e-9        # |denominator| below this takes the protected branch
DIV_FALLBACK = 1.0
EVAL_CLAMP = 1e12     # every node output is clipped to +/- this bound
P_CONST = 0.2         # probability a fresh terminal is a constant
P_GROW_FUNC = 0.5     # probability "grow" places a function node


class Func:
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right


class Feature:
    __slots__ = ("index",)

    def __init__(self, index):
        self.index = index


class Const:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


ExprTree = Func | Feature | Const


@dataclass
class Individual:
    """A fixed-length list of genes plus evaluation state.

    ``head``, ``ft_iso``, ``ft_en`` and the cached probability matrices are
    set by evaluation; offspring are created with them unset.
    """

    genes: list
    head: object = None
    ft_iso: float | None = None
    ft_en: float | None = None
    train_probs: np.ndarray | None = None

    def unevaluated_copy(self) -> "Individual":
        return Individual(genes=list(self.genes))


@dataclass
class Population:
    """Fixed-size collection of individuals bound to one feature view."""

    individuals: list
    view_id: int = 0
    n_view_features: int = 0

    def __len__(self) -> int:
        return len(self.individuals)


def tree_depth(tree: ExprTree) -> int:
    if isinstance(tree, Func):
        return 1 + max(tree_depth(tree.left), tree_depth(tree.right))
    return 1


def tree_size(tree: ExprTree) -> int:
    if isinstance(tree, Func):
        return 1 + tree_size(tree.left) + tree_size(tree.right)
    return 1


def tree_to_infix(tree: ExprTree) -> str:
    """Render a gene as an infix expression string (one-way, for reports)."""
    if isinstance(tree, Func):
        return f"({tree_to_infix(tree.left)} {tree.op} {tree_to_infix(tree.right)})"
    if isinstance(tree, Feature):
        return f"x{tree.index}"
    return repr(tree.value)


def max_feature_index(tree: ExprTree) -> int:
    """Largest feature index referenced, or -1 for constant-only trees."""
    if isinstance(tree, Func):
        return max(max_feature_index(tree.left), max_feature_index(tree.right))
    if isinstance(tree, Feature):
        return tree.index
    return -1


def structurally_equal(a: ExprTree, b: ExprTree) -> bool:
    if isinstance(a, Func) and isinstance(b, Func):
        return (a.op == b.op and structurally_equal(a.left, b.left)
                and structurally_equal(a.right, b.right))
    if isinstance(a, Feature) and isinstance(b, Feature):
        return a.index == b.index
    if isinstance(a, Const) and isinstance(b, Const):
        return a.value == b.value
    return False


# ---------------------------------------------------------------------------
# initialization


def _random_terminal(n_features: int, const_range, rng: GpRng) -> ExprTree:
    if rng.random() < P_CONST:
        return Const(float(rng.uniform(const_range[0], const_range[1])))
    return Feature(int(rng.integers(n_features)))


def grow_tree(depth_budget: int, n_features: int, const_range, rng: GpRng) -> ExprTree:
    """Grow a tree of depth <= depth_budget; branches may stop early."""
    if depth_budget <= 1 or rng.random() >= P_GROW_FUNC:
        return _random_terminal(n_features, const_range, rng)
    op = FUNCTIONS[rng.integers(len(FUNCTIONS))]
    left = grow_tree(depth_budget - 1, n_features, const_range, rng)
    right = grow_tree(depth_budget - 1, n_features, const_range, rng)
    return Func(op, left, right)


def full_tree(depth: int, n_features: int, const_range, rng: GpRng) -> ExprTree:
    """Build a tree whose every branch reaches exactly ``depth``."""
    if depth <= 1:
        return _random_terminal(n_features, const_range, rng)
    op = FUNCTIONS[rng.integers(len(FUNCTIONS))]
    left = full_tree(depth - 1, n_features, const_range, rng)
    right = full_tree(depth - 1, n_features, const_range, rng)
    return Func(op, left, right)


def init_half_and_half(pop_size: int, k_genes: int, max_depth: int,
                       n_view_features: int, const_range,
                       rng: GpRng, view_id: int = 0) -> Population:
    """Ramped half-and-half initialization.

    Even-indexed individuals use "full" trees, odd-indexed use "grow";
    ramped depths cycle from 2 up to max_depth (a depth cap of 1 forces
    single-terminal genes).
    """
    if n_view_features <= 0:
        raise ConfigError("n_view_features must be >= 1")
    if pop_size < 2:
        raise ConfigError("pop_size must be >= 2")
    if max_depth < 1:
        raise ConfigError("max_tree_depth must be >= 1")
    ramp = list(range(2, max_depth + 1)) or [1]
    individuals = []
    for i in range(pop_size):
        depth = ramp[i % len(ramp)]
        build = full_tree if i % 2 == 0 else grow_tree
        genes = [build(depth, n_view_features, const_range, rng)
                 for _ in range(k_genes)]
        individuals.append(Individual(genes=genes))
    return Population(individuals=individuals, view_id=view_id,
                      n_view_features=n_view_features)


# ---------------------------------------------------------------------------
# evaluation

def _eval_node(tree: ExprTree, data: np.ndarray) -> np.ndarray:
    """Evaluate one node over all rows at once; output always finite."""
    if isinstance(tree, Feature):
        return np.clip(data[:, tree.index], -EVAL_CLAMP, EVAL_CLAMP)
    if isinstance(tree, Const):
        return np.full(data.shape[0], min(max(tree.value, -EVAL_CLAMP), EVAL_CLAMP))
    left = _eval_node(tree.left, data)
    right = _eval_node(tree.right, data)
    if tree.op == "+":
        out = left + right
    elif tree.op == "-":
        out = left - right
    elif tree.op == "*":
        out = left * right
    else:
        out = np.where(np.abs(right) < DIV_EPS, DIV_FALLBACK,
                       left / np.where(np.abs(right) < DIV_EPS, 1.0, right))
    return np.clip(out, -EVAL_CLAMP, EVAL_CLAMP)


def eval_tree(tree: ExprTree, row) -> float:
    """Total evaluation of one gene on one feature row."""
    data = np.asarray(row, dtype=float).reshape(1, -1)
    return float(_eval_node(tree, data)[0])


def eval_gene_matrix(ind: Individual, data: np.ndarray) -> np.ndarray:
    """N x K matrix of gene outputs; column k is gene k over all rows."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ContractError("view data must be a 2-D matrix")
    for gene in ind.genes:
        if max_feature_index(gene) >= data.shape[1]:
            raise ContractError(
                f"gene references feature {max_feature_index(gene)} but the "
                f"view has {data.shape[1]} columns")
    if data.shape[0] == 0:
        return np.zeros((0, len(ind.genes)))
    cols = [_eval_node(gene, data) for gene in ind.genes]
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# genetic operators

def _common_region(a: ExprTree, b: ExprTree, path, out) -> None:
    # positions where both tree shapes align from the root; descent stops
    # at the first non-function node on either side
    out.append(path)
    if isinstance(a, Func) and isinstance(b, Func):
        _common_region(a.left, b.left, path + (0,), out)
        _common_region(a.right, b.right, path + (1,), out)


def _subtree_at(tree: ExprTree, path) -> ExprTree:
    for step in path:
        tree = tree.left if step == 0 else tree.right
    return tree


def _replace_at(tree: ExprTree, path, replacement: ExprTree) -> ExprTree:
    if not path:
        return replacement
    if path[0] == 0:
        return Func(tree.op, _replace_at(tree.left, path[1:], replacement), tree.right)
    return Func(tree.op, tree.left, _replace_at(tree.right, path[1:], replacement))


def _all_paths(tree: ExprTree, path=(), out=None) -> list:
    if out is None:
        out = []
    out.append(path)
    if isinstance(tree, Func):
        _all_paths(tree.left, path + (0,), out)
        _all_paths(tree.right, path + (1,), out)
    return out


CROSSOVER_RETRIES = 10


def subtree_crossover(a: Individual, b: Individual, max_depth: int,
                      rng: GpRng) -> tuple[Individual, Individual]:
    """Swap aligned subtrees within one uniformly chosen gene pair.

    The swap point is drawn uniformly from the structural common region of
    the two genes, so crossing identical parents reproduces them. A swap
    whose children breach max_depth is redrawn up to CROSSOVER_RETRIES
    times; on exhaustion the parent genes pass through unchanged.
    """
    if len(a.genes) != len(b.genes):
        raise ContractError("parents must have equal gene counts")
    child_a = a.unevaluated_copy()
    child_b = b.unevaluated_copy()
    g = int(rng.integers(len(a.genes)))
    gene_a, gene_b = a.genes[g], b.genes[g]
    region = []
    _common_region(gene_a, gene_b, (), region)
    for _ in range(CROSSOVER_RETRIES):
        path = region[rng.integers(len(region))]
        sub_a = _subtree_at(gene_a, path)
        sub_b = _subtree_at(gene_b, path)
        new_a = _replace_at(gene_a, path, sub_b)
        new_b = _replace_at(gene_b, path, sub_a)
        if tree_depth(new_a) <= max_depth and tree_depth(new_b) <= max_depth:
            child_a.genes[g] = new_a
            child_b.genes[g] = new_b
            break
    return child_a, child_b


def subtree_mutation(a: Individual, max_depth: int, const_range,
                     n_view_features: int, rng: GpRng) -> Individual:
    """Replace one uniformly chosen subtree with a freshly grown one.

    The replacement's depth budget is whatever keeps the gene within
    max_depth at the chosen position; terminals draw from the owning
    view's full feature range.
    """
    child = a.unevaluated_copy()
    g = int(rng.integers(len(a.genes)))
    gene = a.genes[g]
    paths = _all_paths(gene)
    path = paths[rng.integers(len(paths))]
    budget = max(max_depth - len(path), 1)
    replacement = grow_tree(budget, n_view_features, const_range, rng)
    child.genes[g] = _replace_at(gene, path, replacement)
    return child


def tournament_select(pop: Population, key: str, tournament_size: int,
                      rng: GpRng) -> int:
    """Index of the minimum-fitness member among uniform draws.

    ``key`` is "iso" or "en"; draws are with replacement and ties go to the
    lowest individual index.
    """
    if key not in ("iso", "en"):
        raise ContractError(f"unknown fitness key {key!r}")
    draws = rng.integers(len(pop.individuals), size=tournament_size)
    best = None
    best_fit = None
    for idx in sorted(set(int(d) for d in draws)):
        fit = pop.individuals[idx].ft_iso if key == "iso" else pop.individuals[idx].ft_en
        if fit is None:
            raise ContractError(f"individual {idx} has unset ft_{key}")
        if best_fit is None or fit < best_fit:
            best, best_fit = idx, fit
    return best
