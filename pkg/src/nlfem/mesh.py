"""1D partitions for the nonlocal solver: uniform, graded, geometric and Shishkin meshes.

A mesh carries the full ordered node list including both endpoints; the
unknowns of every assembled system live on the interior nodes.  Size
conventions differ per scheme (and are documented on each constructor):
``uniform`` takes the interior-node count, the graded schemes take an even
element count, ``geometric`` takes the per-half subdivision count, and
``shishkin`` takes the boundary/interior element counts separately.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh1D", "MeshSpec", "MeshStats", "generate_mesh", "mesh_stats",
    "uniform_mesh", "graded_boundary_mesh", "graded_center_mesh",
    "geometric_mesh", "shishkin_mesh",
]

_SUM_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Ordered partition a = x_0 < x_1 < ... < x_{last} = b.

    ``nodes`` includes both endpoints; ``elements`` are the consecutive
    differences h_j = x_j - x_{j-1} (length ``len(nodes) - 1``).
    """

    a: float
    b: float
    nodes: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        nodes.setflags(write=False)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a mesh needs at least one interior node")
        if nodes[0] != self.a or nodes[-1] != self.b:
            raise ValueError("mesh nodes must start at a and end at b exactly")
        h = np.diff(nodes)
        if np.any(h <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        if abs(h.sum() - (self.b - self.a)) > _SUM_TOL * (self.b - self.a):
            raise ValueError("element sizes do not sum to b - a")

    @property
    def elements(self):
        """Element sizes h_1..h_{last}."""
        return np.diff(self.nodes)

    @property
    def n_interior(self):
        return self.nodes.size - 2

    @property
    def interior(self):
        return self.nodes[1:-1]

    def is_uniform(self, rtol=1e-12):
        h = self.elements
        return float(h.max() - h.min()) <= rtol * float(h.max())

    def reflected(self):
        """Mesh mirrored about the domain midpoint."""
        nodes = (self.a + self.b) - self.nodes[::-1]
        nodes = nodes.copy()
        nodes[0] = self.a
        nodes[-1] = self.b
        return Mesh1D(self.a, self.b, nodes, family=self.family + "-reflected",
                      params=dict(self.params))

    def to_csv(self, path):
        """Dump nodes as ``index,x`` rows."""
        with open(path, "w", newline="\n") as fh:
            fh.write("index,x\n")
            for j, x in enumerate(self.nodes):
                fh.write(f"{j},{x:.17g}\n")


@dataclass(frozen=True)
class MeshSpec:
    """Declarative mesh request; ``generate_mesh`` dispatches on ``scheme``.

    scheme: one of uniform | graded_boundary | graded_center | geometric | shishkin.
    ``n`` follows the per-scheme size convention, ``gamma``/``q``/``eta``/``m``
    are the scheme parameters.
    """

    scheme: str
    a: float
    b: float
    n: int
    gamma: float = 1.0
    q: float = 0.5
    m: int = 1
    eta: float = 0.25


def uniform_mesh(a, b, n):
    """Uniform mesh with ``n`` interior nodes (n + 1 elements)."""
    if n < 1:
        raise ValueError("need at least one interior node")
    nodes = np.linspace(a, b, n + 2)
    return Mesh1D(a, b, nodes, family="uniform", params={"n": n})


def _graded_half(a, b, n, gamma, toward_boundary):
    # Nodes j = 0..n/2-1 of the left half; the right half is the exact mirror.
    j = np.arange(n // 2)
    t = (2.0 * j / n) ** gamma
    if toward_boundary:
        return a + 0.5 * (b - a) * t
    return 0.5 * (a + b) - 0.5 * (b - a) * (1.0 - 2.0 * j / n) ** gamma


def _mirrored(a, b, left_half):
    mid = 0.5 * (a + b)
    right = (a + b) - left_half[::-1]
    nodes = np.concatenate([left_half, [mid], right])
    nodes[0] = a
    nodes[-1] = b
    return nodes


def graded_boundary_mesh(a, b, n, gamma):
    """Algebraically graded mesh clustering nodes at both endpoints.

    ``n`` is the (even) number of elements; grading exponent gamma >= 1
    (gamma = 1 degenerates to the uniform mesh).
    """
    if n % 2 or n < 2:
        raise ValueError("graded meshes need an even element count n >= 2")
    if gamma < 1:
        raise ValueError("grading exponent gamma must satisfy gamma >= 1")
    nodes = _mirrored(a, b, _graded_half(a, b, n, gamma, toward_boundary=True))
    return Mesh1D(a, b, nodes, family="graded_boundary", params={"n": n, "gamma": gamma})


def graded_center_mesh(a, b, n, gamma):
    """Graded mesh clustering nodes at the domain midpoint (n even elements)."""
    if n % 2 or n < 2:
        raise ValueError("graded meshes need an even element count n >= 2")
    if gamma < 1:
        raise ValueError("grading exponent gamma must satisfy gamma >= 1")
    nodes = _mirrored(a, b, _graded_half(a, b, n, gamma, toward_boundary=False))
    return Mesh1D(a, b, nodes, family="graded_center", params={"n": n, "gamma": gamma})


def geometric_mesh(a, b, n, q):
    """Geometrically stretched mesh, finest next to the endpoints.

    Each half holds nodes a + q^{n-j} (b-a)/2, j = 1..n-1, mirrored about the
    midpoint; the endpoints themselves are prepended/appended since the
    geometric formula never reaches them.  2n + 1 nodes, 2n elements.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("subdivision ratio q must lie in (0, 1)")
    if n < 1:
        raise ValueError("need n >= 1 subdivisions per half")
    j = np.arange(1, n)
    left = a + q ** (n - j) * 0.5 * (b - a)
    nodes = _mirrored(a, b, np.concatenate([[a], left]))
    return Mesh1D(a, b, nodes, family="geometric", params={"n": n, "q": q})


def shishkin_mesh(a, b, m, n, eta):
    """Piecewise-uniform Shishkin mesh: fine strips of relative width eta.

    ``m`` uniform elements of size eta*(b-a)/m on each boundary strip and
    ``n`` uniform elements of size (1-2*eta)*(b-a)/n in between; 2m + n
    elements total.  Requires 0 < eta < 1/2.
    """
    if not 0.0 < eta < 0.5:
        raise ValueError("Shishkin transition parameter eta must lie in (0, 1/2)")
    if m < 1 or n < 1:
        raise ValueError("element counts must be positive")
    length = b - a
    left = np.linspace(a, a + eta * length, m + 1)
    middle = np.linspace(a + eta * length, b - eta * length, n + 1)
    right = np.linspace(b - eta * length, b, m + 1)
    nodes = np.concatenate([left[:-1], middle[:-1], right])
    return Mesh1D(a, b, nodes, family="shishkin", params={"m": m, "n": n, "eta": eta})


_SCHEMES = {
    "uniform": lambda s: uniform_mesh(s.a, s.b, s.n),
    "graded_boundary": lambda s: graded_boundary_mesh(s.a, s.b, s.n, s.gamma),
    "graded_center": lambda s: graded_center_mesh(s.a, s.b, s.n, s.gamma),
    "geometric": lambda s: geometric_mesh(s.a, s.b, s.n, s.q),
    "shishkin": lambda s: shishkin_mesh(s.a, s.b, s.m, s.n, s.eta),
}


def generate_mesh(spec: MeshSpec) -> Mesh1D:
    """Build the mesh described by ``spec`` (see the per-scheme constructors)."""
    try:
        builder = _SCHEMES[spec.scheme]
    except KeyError:
        raise ValueError(f"unknown mesh scheme '{spec.scheme}'") from None
    return builder(spec)


@dataclass(frozen=True)
class MeshStats:
    h_min: float
    h_max: float
    ratio: float
    count: int


def mesh_stats(mesh: Mesh1D) -> MeshStats:
    """Extreme element sizes, their ratio, and the element count."""
    h = mesh.elements
    h_min = float(h.min())
    h_max = float(h.max())
    return MeshStats(h_min=h_min, h_max=h_max, ratio=h_max / h_min, count=h.size)
