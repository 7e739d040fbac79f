"""Multigraphs, the graph families used by the experiments, and the spectral radius."""
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .distributions import Deterministic
from .errors import ConfigError, ConvergenceError, InvalidParameterError

logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-10
EIGEN_MAX_ITERS = 100_000
MAX_RESAMPLES = 10_000


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable multigraph in compressed adjacency form.

    ``indices[indptr[v]:indptr[v + 1]]`` lists the neighbors of v with
    parallel edges repeated; a self-loop is listed once at its endpoint but
    adds 2 to ``degrees[v]``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray

    @classmethod
    def from_edges(cls, n_vertices, edges):
        if n_vertices < 0:
            raise InvalidParameterError(f"Vertex count must be non-negative, got {n_vertices}")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n_vertices):
            raise InvalidParameterError(f"Edge endpoint outside 0..{n_vertices - 1}")
        u, v = edges[:, 0], edges[:, 1]
        loop = u == v
        src = np.concatenate([u[~loop], v[~loop], u[loop]])
        dst = np.concatenate([v[~loop], u[~loop], u[loop]])
        order = np.argsort(src, kind="stable")
        indptr = np.zeros(n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n_vertices), out=indptr[1:])
        degrees = (np.bincount(u, minlength=n_vertices) + np.bincount(v, minlength=n_vertices)).astype(np.int64)
        indices = dst[order].astype(np.int64)
        for array in (indptr, indices, degrees):
            array.setflags(write=False)
        return cls(indptr=indptr, indices=indices, degrees=degrees)

    @property
    def n_vertices(self):
        return len(self.indptr) - 1

    @property
    def n_edges(self):
        return int(self.degrees.sum()) // 2

    @property
    def max_degree(self):
        return int(self.degrees.max()) if self.n_vertices else 0

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self):
        return [self.neighbors(v).tolist() for v in range(self.n_vertices)]

    def self_loops(self):
        """Number of self-loops at each vertex."""
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        return np.bincount(src[src == self.indices], minlength=self.n_vertices)

    def edges(self):
        """Edge array with one row per edge, ``u <= v``."""
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        keep = src <= self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    def to_sparse(self):
        """Adjacency matrix; a self-loop puts 2 on the diagonal so row sums are degrees."""
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        data = np.where(src == self.indices, 2.0, 1.0)
        return sparse.csr_matrix((data, (src, self.indices)), shape=(self.n_vertices, self.n_vertices))

    def check(self):
        """Assert the degree-sum, degree-count and symmetry invariants."""
        if int(self.degrees.sum()) % 2:
            raise AssertionError("Odd degree sum")
        expected = np.diff(self.indptr) + self.self_loops()
        if not np.array_equal(expected, self.degrees):
            raise AssertionError("Degrees disagree with adjacency lists")
        matrix = self.to_sparse()
        if (matrix != matrix.T).nnz:
            raise AssertionError("Adjacency is not symmetric")
        return True


@dataclass(frozen=True, eq=False)
class GWTree:
    """Breadth-first Galton-Watson tree truncated at a vertex budget."""

    graph: Graph
    interior: np.ndarray
    generation: np.ndarray
    budget_exhausted: bool
    root: int = 0

    @property
    def boundary(self):
        return ~self.interior

    def generation_sizes(self):
        return np.bincount(self.generation)


def generate_star(k):
    """Star with center 0 and leaves 1..k."""
    if k < 1:
        raise InvalidParameterError(f"Star needs at least one leaf, got k={k}")
    leaves = np.arange(1, k + 1)
    return Graph.from_edges(k + 1, np.column_stack([np.zeros(k, dtype=np.int64), leaves]))


def generate_star_chain(k, r):
    """Star on 0..k with a chain v_1..v_r (vertices k+1..k+r) hanging off the center."""
    if k < 1 or r < 1:
        raise InvalidParameterError(f"Star chain needs k >= 1 and r >= 1, got k={k}, r={r}")
    chain = np.arange(k + 1, k + r + 1)
    star_edges = np.column_stack([np.zeros(k, dtype=np.int64), np.arange(1, k + 1)])
    chain_edges = np.column_stack([np.concatenate([[0], chain[:-1]]), chain])
    return Graph.from_edges(k + r + 1, np.vstack([star_edges, chain_edges]))


def chain_end(k, r):
    """Index of v_r in ``generate_star_chain(k, r)``."""
    return k + r


def generate_path(r):
    """Path v_0 - v_1 - ... - v_r."""
    if r < 1:
        raise InvalidParameterError(f"Path needs r >= 1, got r={r}")
    return Graph.from_edges(r + 1, np.column_stack([np.arange(r), np.arange(1, r + 1)]))


def sample_gw_tree(offspring, max_vertices, rng, max_generation=None):
    """Grow a Galton-Watson tree generation by generation under a vertex budget.

    A vertex is interior once all of its children are revealed. When the
    budget runs out mid-generation, the vertex being expanded and every vertex
    not yet expanded are boundary.
    """
    if max_vertices < 1:
        raise InvalidParameterError(f"max_vertices must be at least 1, got {max_vertices}")
    parents, children = [], []
    interior = np.zeros(max_vertices, dtype=bool)
    generation = np.zeros(max_vertices, dtype=np.int64)
    frontier = np.array([0], dtype=np.int64)
    count, depth, exhausted = 1, 0, False

    while frontier.size:
        if max_generation is not None and depth >= max_generation:
            break
        counts = np.asarray(offspring.sample(rng, frontier.size), dtype=np.int64)
        room = max_vertices - count
        cumulative = np.cumsum(counts)
        full = cumulative <= room
        interior[frontier[full]] = True
        if not full.all():
            exhausted = True
            counts = np.diff(np.concatenate([[0], np.minimum(cumulative, room)]))
        total = int(counts.sum())
        new = np.arange(count, count + total, dtype=np.int64)
        parents.append(np.repeat(frontier, counts))
        children.append(new)
        generation[new] = depth + 1
        count += total
        depth += 1
        if exhausted:
            break
        frontier = new

    edges = np.column_stack([np.concatenate(parents), np.concatenate(children)]) if parents else np.empty((0, 2))
    tree = Graph.from_edges(count, edges)
    return GWTree(
        graph=tree,
        interior=interior[:count].copy(),
        generation=generation[:count].copy(),
        budget_exhausted=exhausted,
    )


def generate_config_model(n, dist, rng):
    """Configuration model: i.i.d. degrees conditioned on an even sum, uniform half-edge pairing.

    Self-loops and parallel edges are kept. A deterministic law with odd n * d
    never yields an even sum, so it is rejected up front with
    InvalidParameterError instead of resampling forever.
    """
    if n < 2:
        raise InvalidParameterError(f"Configuration model needs n >= 2, got {n}")
    if isinstance(dist, Deterministic) and (n * dist.d) % 2:
        raise InvalidParameterError(f"n * d = {n * dist.d} is odd, no even degree sequence exists")
    for attempt in range(MAX_RESAMPLES):
        degrees = np.asarray(dist.sample(rng, n), dtype=np.int64)
        if int(degrees.sum()) % 2 == 0:
            break
    else:
        raise ConvergenceError(f"No even degree sum after {MAX_RESAMPLES} draws of {dist}", iterations=MAX_RESAMPLES)
    stubs = rng.permutation(np.repeat(np.arange(n, dtype=np.int64), degrees))
    graph = Graph.from_edges(n, stubs.reshape(-1, 2))
    logger.debug(f"Configuration model n={n} {dist}: {graph.n_edges} edges after {attempt + 1} degree draws")
    return graph


def count_stars(g, threshold):
    """Number of vertices with degree at least ``threshold``."""
    return int(np.count_nonzero(g.degrees >= threshold))


def largest_component(g):
    """Vertex indices of the largest connected component."""
    n_components, labels = connected_components(g.to_sparse(), directed=False)
    if n_components == 1:
        return np.arange(g.n_vertices)
    return np.flatnonzero(labels == np.argmax(np.bincount(labels)))


def max_eigenvalue(g, tol=EIGEN_TOL, max_iters=EIGEN_MAX_ITERS):
    """Largest adjacency eigenvalue, by power iteration on the largest component.

    The iteration runs on A + I (so bipartite graphs converge) from the degree
    vector and stops once the Rayleigh quotient mu of the unit iterate v has
    relative residual ||Av - mu v|| / mu <= ``tol``.
    """
    if not tol > 0:
        raise InvalidParameterError(f"tol must be positive, got {tol}")
    if g.n_edges == 0:
        return 0.0
    component = largest_component(g)
    matrix = g.to_sparse()[component][:, component].tocsr()
    x = g.degrees[component].astype(np.float64)
    x /= np.linalg.norm(x)
    rayleigh = 0.0
    for iteration in range(1, max_iters + 1):
        y = matrix @ x
        rayleigh = float(x @ y)
        residual = float(np.linalg.norm(y - rayleigh * x))
        if residual <= tol * abs(rayleigh):
            logger.debug(f"Power iteration converged after {iteration} steps: {rayleigh} (residual {residual:.3g})")
            return rayleigh
        x = y + x
        x /= np.linalg.norm(x)
    raise ConvergenceError(
        f"Power iteration did not reach tol={tol} in {max_iters} iterations", last_estimate=rayleigh, iterations=max_iters
    )


def write_edge_list(g, destination, header=None):
    """Write ``# vertices=N`` then one ``u v`` line per edge; ``-`` means stdout.

    ``header`` (a JSON string) is written as a ``# config:`` line under the vertex count.
    """
    lines = [f"# vertices={g.n_vertices}"]
    if header is not None:
        lines.append(f"# config: {header}")
    lines += [f"{u} {v}" for u, v in g.edges().tolist()]
    text = "\n".join(lines) + "\n"
    if destination == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(destination)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(destination, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info(f"Exported edge list to {destination}")


def read_edge_list(path):
    if not os.path.exists(path):
        raise ConfigError(f"Edge list {path} does not exist")
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("# vertices="):
            raise InvalidParameterError(f"{path}: first line must be '# vertices=N'")
        try:
            n_vertices = int(header.split("=", 1)[1])
            edges = [tuple(int(x) for x in line.split()) for line in f if line.strip() and not line.startswith("#")]
        except ValueError as e:
            raise InvalidParameterError(f"{path}: malformed edge list ({e})") from e
    if any(len(edge) != 2 for edge in edges):
        raise InvalidParameterError(f"{path}: every edge line needs exactly two vertices")
    return Graph.from_edges(n_vertices, edges)


def degree_bounds(g):
    """(sqrt(d_max), d_max) over the largest component, the range max_eigenvalue must fall in."""
    d_max = int(g.degrees[largest_component(g)].max())
    return math.sqrt(d_max), float(d_max)
