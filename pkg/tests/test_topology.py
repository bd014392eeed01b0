import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from satdelay.errors import InvalidTopology, ZeroRowSum
from satdelay.topology import Topology, classify, graph_from_dict, load_graph, normalize, ring, spectrum


def char_poly(m):
    """Faddeev-LeVerrier coefficients of det(lambda I - M), leading 1 first."""
    n = len(m)
    coeffs = [1.0]
    mk = np.zeros_like(m)
    for k in range(1, n + 1):
        mk = m @ mk + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(m @ mk) / k)
    return np.array(coeffs)


def durand_kerner(coeffs, iters=2000):
    n = len(coeffs) - 1
    z = (0.4 + 0.9j) ** np.arange(n)
    for _ in range(iters):
        prev = z.copy()
        for i in range(n):
            others = np.prod([z[i] - z[j] for j in range(n) if j != i])
            z[i] -= np.polyval(coeffs, z[i]) / others
        if np.max(np.abs(z - prev)) < 1e-15:
            break
    return z


def match_multisets(a, b):
    a, b = list(a), list(b)
    worst = 0.0
    for x in a:
        k = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b.pop(k)))
    return worst


def random_adjacency(n, rng, p=0.5):
    a = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(a, 0)
    return a


class TestValidation:
    @pytest.mark.parametrize(
        "matrix",
        [
            [[0, 1, 0], [1, 0, 1]],
            [[0, -1], [1, 0]],
            [[1, 1], [1, 0]],
            [[0, np.nan], [1, 0]],
        ],
        ids=["non-square", "negative", "self-loop", "nan"],
    )
    def test_rejects_invalid(self, matrix):
        with pytest.raises(InvalidTopology):
            Topology(np.array(matrix, dtype=float))

    def test_adjacency_is_read_only(self, graph1):
        with pytest.raises(ValueError):
            graph1.adjacency[0, 1] = 5.0

    def test_degrees_and_neighbors(self, graph2):
        assert graph2.in_degree.tolist() == [2, 2, 3, 1, 1]
        assert graph2.out_degree.tolist() == [1, 2, 1, 3, 2]
        assert graph2.in_neighbors(2) == [1, 3, 4]
        assert graph2.out_neighbors(3) == [0, 2, 4]


class TestClassify:
    def test_graph1_is_two_regular(self, graph1):
        c = classify(graph1)
        assert c.has_spanning_tree and c.balanced and c.k_regular == 2

    def test_graph2_spanning_tree_unbalanced(self, graph2):
        c = classify(graph2)
        assert c.has_spanning_tree and not c.balanced and c.k_regular is None

    def test_chain(self):
        a = np.zeros((3, 3))
        a[1, 0] = a[2, 1] = 1.0
        c = classify(Topology(a))
        assert c.has_spanning_tree and not c.balanced

    def test_disconnected_has_no_tree(self):
        a = np.zeros((4, 4))
        a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = 1.0
        assert not classify(Topology(a)).has_spanning_tree

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 2**31 - 1))
    def test_invariant_under_relabeling(self, n, seed):
        rng = np.random.default_rng(seed)
        topo = Topology(random_adjacency(n, rng))
        perm = rng.permutation(n)
        assert classify(topo) == classify(topo.permuted(perm))


class TestNormalize:
    def test_zero_row_sum(self):
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 0] = 1.0
        with pytest.raises(ZeroRowSum) as info:
            normalize(Topology(a))
        assert info.value.agent == 2

    def test_graph1_spectrum(self, graph1):
        lam = normalize(graph1).eigenvalues
        assert np.allclose(sorted(lam.real), [-1, 0, 0, 1], atol=1e-12)
        assert np.all(lam.imag == 0)

    def test_graph2_eigenvector(self, graph2):
        at = normalize(graph2).normalized
        v = np.array([5, -3, 1, -7, 7], dtype=float)
        assert np.allclose(at @ v, -v)
        assert np.min(np.abs(normalize(graph2).eigenvalues + 1)) < 1e-10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31 - 1))
    def test_row_stochastic_spectrum_in_unit_disc(self, n, seed):
        rng = np.random.default_rng(seed)
        a = random_adjacency(n, rng) * rng.uniform(0.1, 3.0, (n, n))
        a[np.arange(n), (np.arange(n) + 1) % n] = 1.0
        lam = normalize(Topology(a)).eigenvalues
        assert np.max(np.abs(lam)) <= 1 + 1e-9


class TestSpectrum:
    def test_identity(self):
        assert np.allclose(spectrum(np.eye(3)), [1, 1, 1])

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (5, 5), elements=st.floats(-3, 3, allow_nan=False)))
    def test_residual(self, m):
        for lam in spectrum(m):
            assert abs(np.linalg.det(m - lam * np.eye(5))) < 1e-8 * max(1.0, np.abs(m).max() ** 5)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_polynomial_roots(self, n, seed):
        rng = np.random.default_rng(100 * n + seed)
        m = rng.uniform(-2, 2, (n, n))
        oracle = durand_kerner(char_poly(m))
        assert match_multisets(spectrum(m), oracle) < 1e-6

    def test_snaps_tiny_imaginary_parts(self):
        lam = spectrum(np.array([[1.0, 1e-12], [-1e-12, 1.0]]))
        assert np.all(lam.imag == 0)


class TestGraphIo:
    def test_edge_list_form(self, tmp_path, graph1):
        edges = [[i, j] for i in range(4) for j in range(4) if graph1.adjacency[i, j]]
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"n": 4, "edges": edges}))
        assert np.array_equal(load_graph(path).adjacency, graph1.adjacency)

    def test_weighted_edge(self):
        topo = graph_from_dict({"n": 2, "edges": [[0, 1, 2.5], [1, 0]]})
        assert topo.adjacency[0, 1] == 2.5

    @pytest.mark.parametrize(
        "data",
        [{"n": 2, "edges": [[0, 5]]}, {"edges": []}, {"n": 2, "edges": [[0]]}],
        ids=["out-of-range", "missing-n", "short-edge"],
    )
    def test_malformed(self, data):
        with pytest.raises(InvalidTopology):
            graph_from_dict(data)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(InvalidTopology):
            load_graph(path)

    def test_ring_matches_graph1(self, graph1):
        assert np.array_equal(ring(4).adjacency, graph1.adjacency)
