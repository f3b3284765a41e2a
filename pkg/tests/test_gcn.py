import numpy as np
import pytest
from hypothesis import given, strategies as st

from vtmig import oracles
from vtmig._rng import derive_rng
from vtmig.gcn import (GcnLayer, NetworkGraph, RunningNorm, backward, build_graph, forward,
                       gcn_gradients, graph_from_coverage, init_layers, normalized_adjacency,
                       propagate, ring_neighbor_pairs)
from vtmig.scenario import build_world

from conftest import small_config


def random_graph(rng, n, p=0.4):
    A = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return A + A.T


def plain(A):
    return NetworkGraph(A.shape[0], 0, 0, A)


class TestBuildGraph:
    def test_one_vehicle_one_edge_one_cloud(self):
        g = graph_from_coverage(np.array([[True]]), 1)
        assert g.links() == [(0, 1), (1, 2)]
        assert np.array_equal(g.adjacency, g.adjacency.T)
        assert int(g.adjacency.sum()) == 4

    def test_uncovered_vehicle_row_is_zero(self):
        g = graph_from_coverage(np.array([[False, False]]), 1)
        assert not g.adjacency[0].any()

    def test_three_edges_form_a_ring(self):
        g = graph_from_coverage(np.zeros((0, 3), bool), 1)
        ee = [(a, b) for a, b in g.links() if a < 3 and b < 3]
        assert ee == oracles.ring_pairs_by_distance(3) == [(0, 1), (0, 2), (1, 2)]

    @pytest.mark.parametrize("n", [0, 1, 2, 4, 7])
    def test_ring_pairs_match_oracle(self, n):
        assert sorted(ring_neighbor_pairs(n)) == oracles.ring_pairs_by_distance(n)

    def test_from_world(self):
        world = build_world(small_config(), derive_rng(0, "world"))
        g = build_graph(world)
        A = g.adjacency
        assert g.n_nodes == world.n_nodes
        assert np.array_equal(A, A.T) and not np.diag(A).any()
        V, J = len(world.vehicles), len(world.edges)
        for v in world.vehicles:
            for j in range(J):
                assert A[v.id, V + j] == (j in world.associations[v.id])
        assert A[V:V + J, V + J:].all()


class TestPropagate:
    def test_isolated_node(self):
        out = propagate(np.array([[0.7]]), plain(np.zeros((1, 1))), [GcnLayer(np.eye(1), "relu")])
        assert out.tolist() == [[0.7]]

    def test_two_nodes(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = propagate(np.array([[1.0], [3.0]]), plain(A), [GcnLayer(np.array([[1.0]]), "identity")])
        assert out.tolist() == [[2.0], [2.0]]

    def test_relu_clamps_negative(self):
        rng = derive_rng(0, "relu")
        A = random_graph(rng, 5)
        H = np.abs(rng.normal(size=(5, 3)))
        out = propagate(H, plain(A), [GcnLayer(-np.abs(rng.normal(size=(3, 2))), "relu")])
        assert np.array_equal(out, np.zeros((5, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            propagate(np.ones((3, 2)), plain(np.zeros((3, 3))), [GcnLayer(np.ones((4, 1)))])
        with pytest.raises(ValueError):
            propagate(np.ones((2, 2)), plain(np.zeros((3, 3))), [GcnLayer(np.ones((2, 1)))])

    def test_matches_dense_oracle(self):
        rng = derive_rng(1, "dense")
        for n in range(1, 9):
            A = random_graph(rng, n)
            H = rng.normal(size=(n, 4))
            layers = init_layers([4, 6, 3], rng)
            ref = oracles.dense_gcn(H, A, [l.weight for l in layers], [l.activation for l in layers])
            assert np.allclose(propagate(H, plain(A), layers), ref, rtol=1e-12, atol=1e-13)

    def test_batch_equals_loop(self):
        rng = derive_rng(2, "batch")
        As = np.stack([random_graph(rng, 6) for _ in range(4)])
        Hs = rng.normal(size=(4, 6, 3))
        layers = init_layers([3, 5, 2], rng)
        batch, _ = forward(Hs, normalized_adjacency(As), layers)
        for k in range(4):
            assert np.array_equal(batch[k], propagate(Hs[k], plain(As[k]), layers))

    def test_permutation_equivariance(self):
        rng = derive_rng(3, "perm")
        for _ in range(20):
            n = int(rng.integers(2, 9))
            A = random_graph(rng, n)
            H = rng.normal(size=(n, 3))
            layers = init_layers([3, 4, 2], rng)
            P = np.eye(n)[rng.permutation(n)]
            lhs = propagate(P @ H, plain(P @ A @ P.T), layers)
            assert np.allclose(lhs, P @ propagate(H, plain(A), layers), rtol=1e-12, atol=1e-13)

    def test_operator_symmetric_with_unit_spectral_radius(self):
        rng = derive_rng(4, "spec")
        for _ in range(20):
            n = int(rng.integers(1, 12))
            op = normalized_adjacency(random_graph(rng, n))
            assert np.allclose(op, op.T, rtol=0, atol=1e-15)
            assert np.max(np.abs(np.linalg.eigvalsh(op))) <= 1.0 + 1e-12


class TestGradients:
    def test_zero_upstream(self):
        rng = derive_rng(5, "zero")
        A = random_graph(rng, 4)
        layers = init_layers([3, 4, 2], rng)
        grads = gcn_gradients(rng.normal(size=(4, 3)), plain(A), layers, np.zeros((4, 2)))
        assert all(not g.any() for g in grads)

    def test_single_linear_node(self):
        H, U = np.array([[0.3, -1.2]]), np.array([[2.0, 0.5, -1.0]])
        layer = GcnLayer(np.ones((2, 3)), "identity")
        (g,) = gcn_gradients(H, plain(np.zeros((1, 1))), [layer], U)
        assert np.array_equal(g, H.T @ U)

    def test_missing_cache(self):
        with pytest.raises(ValueError, match="missing forward cache"):
            backward(None, [GcnLayer(np.ones((1, 1)))], np.ones((1, 1)))

    def test_finite_differences(self):
        rng = derive_rng(6, "fd")
        for _ in range(12):
            n = int(rng.integers(2, 7))
            A = random_graph(rng, n, 0.5)
            H = rng.normal(size=(n, 3))
            layers = init_layers([3, 5, 2], rng)
            U = rng.normal(size=(n, 2))
            out, cache = forward(H, plain(A), layers)
            grads, dH = backward(cache, layers, U)

            def loss():
                return float(np.sum(propagate(H, plain(A), layers) * U))
            for k, layer in enumerate(layers):
                num = oracles.central_difference(loss, layer.weight)
                assert oracles.relative_error(grads[k], num, floor=1e-6) < 1e-4
            assert oracles.relative_error(dH, oracles.central_difference(loss, H), floor=1e-6) < 1e-4


class TestRunningNorm:
    @given(st.integers(1, 5), st.integers(2, 40), st.integers(0, 2 ** 31 - 1))
    def test_merged_moments_equal_direct(self, chunks, size, seed):
        rng = np.random.default_rng(seed)
        data = rng.normal(3.0, 2.0, size=(chunks * size, 4))
        norm = RunningNorm(4)
        for part in np.array_split(data, chunks):
            norm.update(part)
        st_ = norm.state()
        assert np.allclose(st_["mean"], data.mean(axis=0), rtol=1e-10, atol=1e-10)
        assert np.allclose(st_["var"], data.var(axis=0), rtol=1e-9, atol=1e-10)

    def test_state_round_trip(self):
        a = RunningNorm(2)
        a.update(np.array([[1.0, 2.0], [3.0, 5.0]]))
        b = RunningNorm(2)
        b.load(a.state())
        x = np.array([[0.5, 0.5]])
        assert np.array_equal(a(x), b(x))
