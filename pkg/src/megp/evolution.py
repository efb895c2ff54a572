"""Evolutionary loops: the multi-population ensemble model and its
single-population baseline.

Each population evolves on a fixed disjoint feature view. A generation
evaluates individuals (gene matrix -> trained softmax head -> isolated
fitness), forms one rank-aligned ensemble candidate per population slot,
records trajectory data, then breeds the next generation under dual
elitism: the best isolated performers and the members of the best
ensembles both survive. Crossover parent selection flips a coin with
probability p_en to use ensemble fitness instead of isolated fitness.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .config import MegpConfig
from .ensembles import (EnsembleCandidate, ensemble_fitness,
                        ensemble_probs, optimize_ensemble_weights)
from .errors import ConfigError, ContractError
from .head import isolated_fitness, logits, softmax_probs, train_head
from .metrics import ClassificationMetrics, classification_metrics
from .rng import GpRng, make_rng
from .trees import (Individual, Population, eval_gene_matrix,
                    init_half_and_half, subtree_crossover, subtree_mutation,
                    tournament_select, tree_to_infix)


def partition_features(n_features: int, n_views: int, rng: GpRng) -> list:
    """Disjoint covering views whose sizes differ by at most one."""
    if n_views < 1:
        raise ConfigError("n_views must be >= 1")
    if n_features < n_views:
        raise ConfigError(f"cannot split {n_features} features into {n_views} views")
    order = rng.permutation(n_features)
    base, extra = divmod(n_features, n_views)
    views, start = [], 0
    for v in range(n_views):
        size = base + (1 if v < extra else 0)
        views.append(sorted(int(i) for i in order[start:start + size]))
        start += size
    return views


def predict_probs(ind: Individual, view_data: np.ndarray) -> np.ndarray:
    """Class probabilities of an evaluated individual on a view matrix."""
    if ind.head is None:
        raise ContractError("individual has no trained head")
    return softmax_probs(logits(eval_gene_matrix(ind, view_data), ind.head))


def evaluate_population(pop: Population, view_data: np.ndarray, Y: np.ndarray,
                        cfg: MegpConfig, rng: GpRng) -> Population:
    """Train a head and set ft_iso for every individual lacking one.

    Already-evaluated individuals (elites carried over) keep their cached
    head, fitness and training probabilities.
    """
    batch = max(1, view_data.shape[0] // cfg.batch_divisor)
    for ind in pop.individuals:
        if ind.ft_iso is not None:
            continue
        G = eval_gene_matrix(ind, view_data)
        head, ft = train_head(G, Y, cfg.epochs, batch, cfg.learning_rate, rng)
        ind.head = head
        ind.ft_iso = ft
        ind.train_probs = softmax_probs(logits(G, head))
    return pop


def _iso_order(pop: Population) -> list:
    return sorted(range(len(pop.individuals)),
                  key=lambda i: (pop.individuals[i].ft_iso, i))


def form_ensembles(pops: list, Y: np.ndarray, cfg: MegpConfig,
                   pairing: str | None = None,
                   rng: GpRng | None = None) -> list:
    """One ensemble candidate per population slot, sorted by ensemble fitness.

    The default pairing sorts each population by isolated fitness and joins
    same-rank individuals; "random" pairing (ablation) joins uniformly
    permuted individuals. Every individual lands in exactly one candidate
    and receives that candidate's fitness as its ft_en.
    """
    pairing = pairing or cfg.pairing
    n = len(pops[0].individuals)
    for pop in pops:
        if len(pop.individuals) != n:
            raise ContractError("populations must share pop_size")
        for ind in pop.individuals:
            if ind.ft_iso is None:
                raise ContractError("form_ensembles needs evaluated populations")
    iso_orders = [_iso_order(pop) for pop in pops]
    if pairing == "rank":
        pair_orders = iso_orders
    elif pairing == "random":
        if rng is None:
            raise ContractError("random pairing needs an RNG")
        pair_orders = [[int(i) for i in rng.permutation(n)] for _ in pops]
    else:
        raise ConfigError(f"unknown pairing strategy {pairing!r}")
    iso_rank = []
    for order in iso_orders:
        ranks = [0] * n
        for r, idx in enumerate(order):
            ranks[idx] = r + 1
        iso_rank.append(ranks)

    candidates = []
    for slot in range(n):
        members = tuple(pair_orders[p][slot] for p in range(len(pops)))
        probs = [pops[p].individuals[members[p]].train_probs
                 for p in range(len(pops))]
        weights = optimize_ensemble_weights(probs, Y, cfg.ensemble_max_evals)
        ft_en = ensemble_fitness(probs, weights, Y)
        for p, m in enumerate(members):
            pops[p].individuals[m].ft_en = ft_en
        candidates.append(EnsembleCandidate(
            members=members, weights=weights, ft_en=ft_en,
            member_ranks=tuple(iso_rank[p][members[p]]
                               for p in range(len(pops)))))
    return sorted(candidates, key=lambda c: c.ft_en)


def select_elites(pop: Population, candidates: list, ef_iso: float,
                  ef_en: float) -> list:
    """Indices surviving verbatim: isolated elites plus ensemble elites.

    The isolated set is the ceil(ef_iso * n) lowest-ft_iso individuals; the
    ensemble set holds this population's members of the ceil(ef_en * n)
    best candidates. When the union overruns the combined budget the
    isolated set wins slots first; slack from overlap refills with the
    next-best isolated performers.
    """
    n = len(pop.individuals)
    budget = min(n, math.ceil((ef_iso + ef_en) * n))
    if budget == 0:
        return []
    order_iso = _iso_order(pop)
    a_list = order_iso[:math.ceil(ef_iso * n)]
    n_b = math.ceil(ef_en * n)
    b_list = [cand.members[pop.view_id]
              for cand in sorted(candidates, key=lambda c: c.ft_en)[:n_b]]
    elites = []
    for idx in a_list + b_list:
        if idx not in elites:
            elites.append(idx)
        if len(elites) == budget:
            return elites
    for idx in order_iso:
        if idx not in elites:
            elites.append(idx)
            if len(elites) == budget:
                break
    return elites


def breed_generation(pops: list, candidates: list, cfg: MegpConfig,
                     rng: GpRng) -> tuple[list, list]:
    """Next generation per population, plus pending crossover records.

    Elites pass through with their evaluation intact; remaining slots draw
    crossover/mutation/reproduction at (p_c, p_m, p_r). Each crossover
    event flips the p_en coin once and applies the chosen fitness key to
    both tournament selections; mutation and reproduction always select by
    isolated fitness. Pending records are (offspring, mean parent ft_iso)
    pairs resolved once the offspring is evaluated.
    """
    new_pops = []
    pending = []
    for pop in pops:
        elites = select_elites(pop, candidates, cfg.ef_iso, cfg.ef_en)
        members = [pop.individuals[i] for i in elites]
        while len(members) < cfg.pop_size:
            draw = rng.random()
            if draw < cfg.p_c:
                use_en = len(pops) > 1 and rng.random() < cfg.p_en
                key = "en" if use_en else "iso"
                i = tournament_select(pop, key, cfg.tournament_size, rng)
                j = tournament_select(pop, key, cfg.tournament_size, rng)
                pa, pb = pop.individuals[i], pop.individuals[j]
                child_a, child_b = subtree_crossover(pa, pb, cfg.max_tree_depth, rng)
                parent_mean = (pa.ft_iso + pb.ft_iso) / 2.0
                members.append(child_a)
                pending.append((child_a, parent_mean))
                if len(members) < cfg.pop_size:
                    members.append(child_b)
                    pending.append((child_b, parent_mean))
            elif draw < cfg.p_c + cfg.p_m:
                i = tournament_select(pop, "iso", cfg.tournament_size, rng)
                members.append(subtree_mutation(
                    pop.individuals[i], cfg.max_tree_depth, cfg.const_range,
                    pop.n_view_features, rng))
            else:
                i = tournament_select(pop, "iso", cfg.tournament_size, rng)
                members.append(pop.individuals[i].unevaluated_copy())
        new_pops.append(Population(members, view_id=pop.view_id,
                                   n_view_features=pop.n_view_features))
    return new_pops, pending


@dataclass
class GenerationRecord:
    generation: int
    best_ft_iso: list
    best_ft_iso_so_far: list
    best_ft_en: float | None
    best_ft_en_so_far: float | None
    val_best: float
    val_best_so_far: float
    best_member_ranks: list
    population_sizes: list
    n_crossover_events: int
    n_crossover_improved: int
    crossover_events: list
    wall_seconds: float


@dataclass
class RunResult:
    model: str
    seed: int
    config: dict
    views: list
    trajectory: list
    final_model: dict
    test_metrics: ClassificationMetrics
    final_population_ft_iso: list
    total_runtime_seconds: float
    final_populations: list | None = None  # in-memory only, not serialized

    @property
    def fitness_series(self) -> list:
        """Best-so-far primary-fitness trajectory (metrics input)."""
        if self.trajectory and self.trajectory[0].best_ft_en_so_far is not None:
            return [rec.best_ft_en_so_far for rec in self.trajectory]
        return [min(rec.best_ft_iso_so_far) for rec in self.trajectory]

    @property
    def crossover_log(self) -> list:
        return [rec.crossover_events for rec in self.trajectory]


def _serialize_individual(ind: Individual) -> dict:
    return {
        "genes": [tree_to_infix(g) for g in ind.genes],
        "head_W": ind.head.W.tolist(),
        "head_b": ind.head.b.tolist(),
        "ft_iso": ind.ft_iso,
    }


def run_megp(cfg: MegpConfig, data, model_name: str = "MEGP") -> RunResult:
    """Full evolutionary run; deterministic given cfg.seed and the data."""
    cfg.validate()
    if data.n_classes < 2:
        raise ConfigError("dataset must have at least 2 classes")
    rng = make_rng(cfg.seed)
    t_start = time.perf_counter()

    views = partition_features(data.n_features, cfg.n_populations, rng)
    view_train = [data.X_train[:, v] for v in views]
    view_val = [data.X_val[:, v] for v in views]
    view_test = [data.X_test[:, v] for v in views]
    pops = [init_half_and_half(cfg.pop_size, cfg.genes_per_individual,
                               cfg.max_tree_depth, len(views[p]),
                               cfg.const_range, rng, view_id=p)
            for p in range(cfg.n_populations)]
    multi = cfg.n_populations > 1

    trajectory = []
    pending = []
    best_iso_so_far = [math.inf] * cfg.n_populations
    best_en_so_far = math.inf
    best_val = math.inf
    stall = 0
    snapshot = None
    generation = 0
    while True:
        t_gen = time.perf_counter()
        for p, pop in enumerate(pops):
            evaluate_population(pop, view_train[p], data.Y_train, cfg, rng)
        events = [(parent_mean, child.ft_iso) for child, parent_mean in pending]
        pending = []

        best_iso = [min(ind.ft_iso for ind in pop.individuals) for pop in pops]
        best_iso_so_far = [min(a, b) for a, b in zip(best_iso_so_far, best_iso)]

        if multi:
            candidates = form_ensembles(pops, data.Y_train, cfg, rng=rng)
            best = candidates[0]
            best_en_so_far = min(best_en_so_far, best.ft_en)
            val_member_probs = {}
            val_value = math.inf
            val_pick = None
            for cand in candidates:
                probs = []
                for p, m in enumerate(cand.members):
                    if (p, m) not in val_member_probs:
                        val_member_probs[(p, m)] = predict_probs(
                            pops[p].individuals[m], view_val[p])
                    probs.append(val_member_probs[(p, m)])
                v = ensemble_fitness(probs, cand.weights, data.Y_val)
                if v < val_value:
                    val_value, val_pick = v, cand
            if val_value < best_val:
                best_val = val_value
                stall = 0
                snapshot = {
                    "members": [pops[p].individuals[m]
                                for p, m in enumerate(val_pick.members)],
                    "weights": val_pick.weights,
                    "val_ft_en": val_value,
                    "member_ranks": list(val_pick.member_ranks),
                }
            else:
                stall += 1
            record_en = best.ft_en
            record_en_sofar = best_en_so_far
            ranks = list(best.member_ranks)
        else:
            candidates = []
            val_value = math.inf
            val_pick = None
            for ind in pops[0].individuals:
                v = isolated_fitness(predict_probs(ind, view_val[0]), data.Y_val)
                if v < val_value:
                    val_value, val_pick = v, ind
            if val_value < best_val:
                best_val = val_value
                stall = 0
                snapshot = {"individual": val_pick, "val_ft_iso": val_value}
            else:
                stall += 1
            record_en = None
            record_en_sofar = None
            ranks = [1]

        trajectory.append(GenerationRecord(
            generation=generation,
            best_ft_iso=best_iso,
            best_ft_iso_so_far=list(best_iso_so_far),
            best_ft_en=record_en,
            best_ft_en_so_far=record_en_sofar,
            val_best=val_value,
            val_best_so_far=best_val,
            best_member_ranks=ranks,
            population_sizes=[len(pop.individuals) for pop in pops],
            n_crossover_events=len(events),
            n_crossover_improved=sum(1 for pm, off in events if off < pm),
            crossover_events=events,
            wall_seconds=time.perf_counter() - t_gen,
        ))

        if generation >= cfg.max_generations or stall >= cfg.stall_generations:
            break
        pops, pending = breed_generation(pops, candidates, cfg, rng)
        generation += 1

    if multi:
        test_member_probs = [predict_probs(ind, view_test[p])
                             for p, ind in enumerate(snapshot["members"])]
        test_probs = ensemble_probs(test_member_probs, snapshot["weights"])
        final_model = {
            "kind": "ensemble",
            "members": [_serialize_individual(ind) for ind in snapshot["members"]],
            "weights": snapshot["weights"].w.tolist(),
            "val_ft_en": snapshot["val_ft_en"],
            "member_ranks": snapshot["member_ranks"],
        }
    else:
        test_probs = predict_probs(snapshot["individual"], view_test[0])
        final_model = {
            "kind": "individual",
            "members": [_serialize_individual(snapshot["individual"])],
            "val_ft_iso": snapshot["val_ft_iso"],
        }
    test_metrics = classification_metrics(test_probs, data.Y_test)

    return RunResult(
        model=model_name,
        seed=cfg.seed,
        config=cfg.to_dict(),
        views=views,
        trajectory=trajectory,
        final_model=final_model,
        test_metrics=test_metrics,
        final_population_ft_iso=[[ind.ft_iso for ind in pop.individuals]
                                 for pop in pops],
        total_runtime_seconds=time.perf_counter() - t_start,
        final_populations=pops,
    )


def run_bgp(cfg: MegpConfig, data, model_name: str = "BGP") -> RunResult:
    """Single-population baseline: one view, isolated fitness only."""
    if cfg.n_populations != 1:
        raise ConfigError("the baseline runs with n_populations=1")
    return run_megp(cfg, data, model_name=model_name)
