"""Expression trees, initialization, and genetic operators."""

import numpy as np
import pytest

from megp.errors import ConfigError, ContractError
from megp.rng import make_rng
from megp.trees import (Const, Feature, Func, Individual, eval_gene_matrix,
                        eval_tree, grow_tree, init_half_and_half,
                        structurally_equal, subtree_crossover,
                        subtree_mutation, tournament_select, tree_depth,
                        tree_to_infix)

CONST_RANGE = (-10.0, 10.0)


def random_individual(rng, k=3, depth=6, n_features=5):
    genes = [grow_tree(depth, n_features, CONST_RANGE, rng) for _ in range(k)]
    return Individual(genes=genes)


class TestInitHalfAndHalf:
    def test_population_and_gene_counts(self):
        pop = init_half_and_half(30, 10, 10, 6, CONST_RANGE, make_rng(1))
        assert len(pop.individuals) == 30
        assert all(len(ind.genes) == 10 for ind in pop.individuals)

    def test_depth_cap_one_forces_terminals(self):
        pop = init_half_and_half(2, 3, 1, 4, CONST_RANGE, make_rng(2))
        for ind in pop.individuals:
            for gene in ind.genes:
                assert tree_depth(gene) == 1

    def test_same_seed_same_structure(self):
        a = init_half_and_half(12, 4, 8, 5, CONST_RANGE, make_rng(7))
        b = init_half_and_half(12, 4, 8, 5, CONST_RANGE, make_rng(7))
        for ia, ib in zip(a.individuals, b.individuals):
            for ga, gb in zip(ia.genes, ib.genes):
                assert structurally_equal(ga, gb)

    def test_ramped_depths_respect_cap(self):
        pop = init_half_and_half(40, 5, 10, 5, CONST_RANGE, make_rng(3))
        depths = [tree_depth(g) for ind in pop.individuals for g in ind.genes]
        assert max(depths) <= 10
        # "full" individuals at the top of the ramp must actually get there
        assert max(depths) == 10

    def test_zero_features_rejected(self):
        with pytest.raises(ConfigError):
            init_half_and_half(4, 2, 5, 0, CONST_RANGE, make_rng(0))


class TestEvalTree:
    def test_protected_division_by_zero(self):
        tree = Func("/", Feature(0), Const(0.0))
        assert eval_tree(tree, [5.0]) == 1.0

    def test_addition(self):
        tree = Func("+", Feature(0), Feature(1))
        assert eval_tree(tree, [2.0, 3.0]) == 5.0

    def test_clamp_bound(self):
        tree = Func("*", Const(-10.0), Feature(0))
        assert eval_tree(tree, [1e12]) == -1e12

    def test_totality_random_trees(self):
        rng = make_rng(123)
        for _ in range(10_000):
            tree = grow_tree(6, 3, CONST_RANGE, rng)
            row = rng.uniform(-1e6, 1e6, size=3)
            if rng.random() < 0.3:
                row[rng.integers(3)] = 0.0  # provoke zero denominators
            value = eval_tree(tree, row)
            assert np.isfinite(value)
            assert -1e12 <= value <= 1e12


class TestEvalGeneMatrix:
    def test_empty_matrix(self):
        ind = Individual(genes=[Const(4.0), Feature(0)])
        out = eval_gene_matrix(ind, np.zeros((0, 1)))
        assert out.shape == (0, 2)

    def test_constant_gene_column(self):
        ind = Individual(genes=[Const(4.0)])
        out = eval_gene_matrix(ind, np.arange(6.0).reshape(3, 2))
        assert np.array_equal(out, np.full((3, 1), 4.0))

    def test_matches_per_cell_eval(self):
        rng = make_rng(5)
        ind = random_individual(rng, k=2, depth=5, n_features=3)
        data = rng.uniform(-4, 4, size=(3, 3))
        out = eval_gene_matrix(ind, data)
        for i in range(3):
            for k in range(2):
                assert out[i, k] == pytest.approx(
                    eval_tree(ind.genes[k], data[i]), abs=0.0)

    def test_feature_out_of_range_rejected(self):
        ind = Individual(genes=[Feature(3)])
        with pytest.raises(ContractError):
            eval_gene_matrix(ind, np.zeros((2, 2)))


class TestCrossover:
    def test_identical_parents_reproduce_parents(self):
        rng = make_rng(11)
        parent = random_individual(rng, k=3, depth=6)
        clone = Individual(genes=list(parent.genes))
        for _ in range(50):
            a, b = subtree_crossover(parent, clone, 10, rng)
            for child in (a, b):
                for ga, gp_ in zip(child.genes, parent.genes):
                    assert structurally_equal(ga, gp_)

    def test_depth_bound_holds(self):
        rng = make_rng(13)
        pop = [random_individual(rng, k=2, depth=9) for _ in range(20)]
        for _ in range(10_000):
            i, j = rng.integers(20, size=2)
            a, b = subtree_crossover(pop[i], pop[j], 10, rng)
            assert all(tree_depth(g) <= 10 for g in a.genes + b.genes)

    def test_retry_exhaustion_copies_parents(self):
        # both parents deeper than the cap: every swap violates it
        rng = make_rng(17)
        deep = Func("+", Func("*", Feature(0), Const(2.0)), Const(1.0))
        for _ in range(3):
            deep = Func("+", deep, Const(1.0))
        pa = Individual(genes=[deep])
        pb = Individual(genes=[deep])
        assert tree_depth(deep) > 3
        a, b = subtree_crossover(pa, pb, 3, rng)
        assert structurally_equal(a.genes[0], deep)
        assert structurally_equal(b.genes[0], deep)

    def test_fitness_fields_unset(self):
        rng = make_rng(19)
        pa = random_individual(rng)
        pb = random_individual(rng)
        pa.ft_iso, pa.ft_en = 0.5, 0.4
        pb.ft_iso, pb.ft_en = 0.6, 0.7
        a, b = subtree_crossover(pa, pb, 10, rng)
        assert a.ft_iso is None and a.ft_en is None
        assert b.ft_iso is None and b.ft_en is None

    def test_gene_count_mismatch_rejected(self):
        rng = make_rng(23)
        with pytest.raises(ContractError):
            subtree_crossover(random_individual(rng, k=2),
                              random_individual(rng, k=3), 10, rng)

    def test_closure_gene_count(self):
        rng = make_rng(29)
        pa = random_individual(rng, k=4)
        pb = random_individual(rng, k=4)
        a, b = subtree_crossover(pa, pb, 10, rng)
        assert len(a.genes) == len(b.genes) == 4


class TestMutation:
    def test_depth_one_yields_terminal(self):
        rng = make_rng(31)
        ind = Individual(genes=[Feature(0)])
        child = subtree_mutation(ind, 1, CONST_RANGE, 3, rng)
        assert tree_depth(child.genes[0]) == 1

    def test_depth_bound_holds(self):
        rng = make_rng(37)
        pop = [random_individual(rng, k=2, depth=10) for _ in range(20)]
        for _ in range(10_000):
            child = subtree_mutation(pop[rng.integers(20)], 10, CONST_RANGE, 5, rng)
            assert all(tree_depth(g) <= 10 for g in child.genes)

    def test_determinism(self):
        parent = random_individual(make_rng(41), k=3, depth=7)
        a = subtree_mutation(parent, 10, CONST_RANGE, 5, make_rng(99))
        b = subtree_mutation(parent, 10, CONST_RANGE, 5, make_rng(99))
        for ga, gb in zip(a.genes, b.genes):
            assert structurally_equal(ga, gb)

    def test_fitness_unset(self):
        parent = random_individual(make_rng(43))
        parent.ft_iso = 1.0
        child = subtree_mutation(parent, 10, CONST_RANGE, 5, make_rng(1))
        assert child.ft_iso is None and child.ft_en is None


class TestTournament:
    def make_pop(self, fitnesses):
        from megp.trees import Population
        inds = [Individual(genes=[Const(0.0)], ft_iso=f, ft_en=f)
                for f in fitnesses]
        return Population(individuals=inds, n_view_features=1)

    def test_full_coverage_finds_global_best(self):
        fits = [0.9, 0.3, 0.7, 0.1, 0.5]
        pop = self.make_pop(fits)
        # a tournament as large as several population sizes covers the
        # argmin with near-certainty; seeded draw verified to include it
        rng = make_rng(3)
        winner = tournament_select(pop, "iso", 50, rng)
        assert winner == int(np.argmin(fits))

    def test_equal_fitness_lowest_drawn_index(self):
        pop = self.make_pop([0.5] * 6)
        rng = make_rng(8)
        draws = make_rng(8).integers(6, size=3)
        assert tournament_select(pop, "iso", 3, rng) == min(int(d) for d in draws)

    def test_size_one_uniform(self):
        pop = self.make_pop([0.5, 0.1, 0.9, 0.2])
        rng = make_rng(15)
        expected = int(make_rng(15).integers(4, size=1)[0])
        assert tournament_select(pop, "iso", 1, rng) == expected

    def test_unset_fitness_rejected(self):
        pop = self.make_pop([0.1, 0.2])
        pop.individuals[1].ft_en = None
        rng = make_rng(4)
        with pytest.raises(ContractError):
            tournament_select(pop, "en", 10, rng)


def test_infix_rendering_round_trips_structure():
    tree = Func("+", Feature(2), Func("/", Const(1.5), Feature(0)))
    assert tree_to_infix(tree) == "(x2 + (1.5 / x0))"
