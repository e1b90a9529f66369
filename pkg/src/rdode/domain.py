"""Rectangular Neumann domains: grids, cell fields, subdomain masks and the
discrete Laplacian.

Arrays live on a cell-centred grid and are indexed ``[i, j]`` with ``i`` along
x and ``j`` along y (C order, so the flattened index is ``i * ny + j``).
Vector fields carry the component axis first: ``(n, nx, ny)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 1:
            raise InvalidArgumentError(f"need nx >= 2 and ny >= 1 (ny = 1 for 1-D), got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0) or not (math.isfinite(self.lx) and math.isfinite(self.ly)):
            raise InvalidArgumentError(f"side lengths must be positive, got lx={self.lx}, ly={self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def is_1d(self) -> bool:
        return self.ny == 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(nx, ny)`` arrays."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "lx": self.lx, "ly": self.ly}


def build_grid(nx: int, ny: int, lx: float, ly: float) -> Grid:
    """Build a uniform cell-centred grid; ``ny = 1`` selects the 1-D stencil."""
    if int(nx) != nx or int(ny) != ny:
        raise InvalidArgumentError("cell counts must be integers")
    if nx < 2 or ny < 1 or (ny < 2 and ny != 1):
        raise InvalidArgumentError(f"invalid cell counts {nx}x{ny}")
    return Grid(int(nx), int(ny), float(lx), float(ly))


# --------------------------------------------------------------------------
# fields


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError(f"{what} contains non-finite values")


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidArgumentError(f"scalar field shape {self.values.shape} != grid {self.grid.shape}")
        _check_finite(self.values, "scalar field")

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return sup_norm(self.values)

    def lp_norm(self, p: float) -> float:
        return lp_norm(self.values, self.grid, p)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.shape[1:] != self.grid.shape:
            raise InvalidArgumentError(f"vector field shape {self.values.shape} incompatible with grid {self.grid.shape}")
        _check_finite(self.values, "vector field")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, grid, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(grid, np.broadcast_to(c[:, None, None], (c.size, *grid.shape)).copy())

    def __add__(self, other):
        return VectorField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return VectorField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return VectorField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return sup_norm(self.values)

    def lp_norm(self, p: float) -> float:
        return lp_norm(np.sqrt(np.sum(self.values**2, axis=0)), self.grid, p)


def _vals(x):
    return x.values if isinstance(x, (ScalarField, VectorField)) else x


def sup_norm(values) -> float:
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


def lp_norm(values, grid: Grid, p: float) -> float:
    """Cell-volume weighted L^p norm; ``p = inf`` gives the sup norm."""
    if p == math.inf:
        return sup_norm(values)
    if p < 1:
        raise InvalidArgumentError("p must be >= 1")
    return float((np.sum(np.abs(values) ** p) * grid.cell_volume) ** (1.0 / p))


# --------------------------------------------------------------------------
# Laplacian and its spectrum


def laplacian(values: np.ndarray, grid: Grid, out: np.ndarray | None = None) -> np.ndarray:
    """Ghost-cell (mirror) 5-point Neumann Laplacian of a ``(nx, ny)`` array."""
    values = np.ascontiguousarray(values, dtype=float)
    if out is None:
        out = np.empty_like(values)
    return kernels.laplacian(values, grid.hx, grid.hy, out)


def apply_discrete_laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, laplacian(f.values, f.grid))


def _neumann_1d(n, h):
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    if n == 1:
        main[0] = 0.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of the discrete Neumann Laplacian on flattened cells."""
    dx = _neumann_1d(grid.nx, grid.hx)
    dy = _neumann_1d(grid.ny, grid.hy)
    return (sp.kron(dx, sp.identity(grid.ny)) + sp.kron(sp.identity(grid.nx), dy)).tocsr()


def discrete_neumann_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues ``mu_h[k, m]`` of ``-Delta_h``; mode (k, m) is the DCT-II basis vector."""
    k = np.arange(grid.nx)
    m = np.arange(grid.ny)
    mx = 4.0 / grid.hx**2 * np.sin(np.pi * k / (2 * grid.nx)) ** 2
    my = 4.0 / grid.hy**2 * np.sin(np.pi * m / (2 * grid.ny)) ** 2
    return mx[:, None] + my[None, :]


def neumann_eigenvalues(grid: Grid, count: int) -> list[tuple[float, tuple[int, int]]]:
    """The ``count`` smallest continuum Neumann eigenvalues of the rectangle.

    mu = (k pi / lx)^2 + (m pi / ly)^2, sorted ascending with ties broken by
    (k, m).  On 1-D grids only m = 0 appears.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    return neumann_eigenvalues_below(grid, None, count=count)


def neumann_eigenvalues_below(grid: Grid, bound: float | None, count: int | None = None):
    """All continuum eigenvalues ``<= bound`` (or the ``count`` smallest)."""
    cx = (math.pi / grid.lx) ** 2
    cy = 0.0 if grid.is_1d else (math.pi / grid.ly) ** 2
    b = bound if bound is not None else max(cx, cy if cy else cx)
    while True:
        kmax = int(math.sqrt(max(b, 0.0) / cx)) + 1
        mmax = 0 if grid.is_1d else int(math.sqrt(max(b, 0.0) / cy)) + 1
        out = []
        for k in range(kmax + 1):
            for m in range(mmax + 1):
                mu = k * k * cx + m * m * cy
                if mu <= b:
                    out.append((mu, (k, m)))
        out.sort()
        if bound is not None:
            return out
        if len(out) >= count:
            return out[:count]
        b *= 2.0


# --------------------------------------------------------------------------
# masks


@dataclass
class SubdomainMask:
    """Per-cell labels 1..J; label 1 is the bulk region."""

    grid: Grid
    labels: np.ndarray
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.shape != self.grid.shape:
            raise InvalidArgumentError("label array shape does not match grid")
        if self.labels.min() < 1:
            raise InvalidArgumentError("labels must be >= 1")

    @property
    def nlabels(self) -> int:
        return int(self.labels.max())

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))

    def measure(self, label: int) -> float:
        return self.count(label) * self.grid.cell_volume

    def indicator(self, label: int) -> np.ndarray:
        return (self.labels == label).astype(float)


def _box(spec, keys=("x0", "y0", "x1", "y1")):
    try:
        return tuple(float(spec[k]) for k in keys)
    except KeyError as exc:
        raise InvalidArgumentError(f"mask spec missing {exc.args[0]!r}") from None


def _check_box(grid, x0, y0, x1, y1):
    eps = 1e-12 * max(grid.lx, grid.ly)
    if not (-eps <= x0 < x1 <= grid.lx + eps and -eps <= y0 < y1 <= grid.ly + eps):
        raise InvalidArgumentError(f"rectangle ({x0}, {y0}, {x1}, {y1}) not inside [0,{grid.lx}]x[0,{grid.ly}]")


def _inside(x, y, x0, y0, x1, y1):
    return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


def pi_glyph_region(x, y, x0, y0, x1, y1):
    """Boolean membership of a pi-shaped glyph inscribed in a box.

    Top bar: upper quarter of the box.  Legs: x in [0.2, 0.4] and [0.6, 0.8]
    of the width, below the bar.  Area fraction 0.55 of the box.
    """
    w, h = x1 - x0, y1 - y0
    s = (x - x0) / w
    t = (y - y0) / h
    inbox = (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
    bar = t >= 0.75
    legs = ((s >= 0.2) & (s <= 0.4)) | ((s >= 0.6) & (s <= 0.8))
    return inbox & (bar | legs)


PI_GLYPH_FILL = 0.55


def pi_glyph_spec(grid: Grid, fraction: float, center=(0.5, 0.5)) -> dict:
    """Spec of a square-boxed pi glyph whose nominal area is ``fraction * |Omega|``."""
    side = math.sqrt(fraction * grid.area / PI_GLYPH_FILL)
    cx, cy = center[0] * grid.lx, center[1] * grid.ly
    return {"kind": "pi_glyph", "x0": cx - side / 2, "y0": cy - side / 2, "x1": cx + side / 2, "y1": cy + side / 2}


def _region(grid, spec):
    kind = spec.get("kind", "full")
    x, y = grid.centers()
    if kind == "full":
        return np.zeros(grid.shape, dtype=bool)
    if kind in ("rectangle", "pi_glyph"):
        box = _box(spec)
        _check_box(grid, *box)
        return _inside(x, y, *box) if kind == "rectangle" else pi_glyph_region(x, y, *box)
    if kind == "random":
        frac = float(spec.get("fraction", 0.0))
        if not 0.0 <= frac <= 1.0:
            raise InvalidArgumentError(f"fraction must lie in [0, 1], got {frac}")
        seed = int(spec.get("seed", 0))
        k = int(math.floor(frac * grid.ncells + 0.5))
        order = np.random.default_rng(seed).permutation(grid.ncells)
        flat = np.zeros(grid.ncells, dtype=bool)
        flat[order[:k]] = True
        return flat.reshape(grid.shape)
    raise InvalidArgumentError(f"unknown mask kind {kind!r}")


def make_mask(grid: Grid, shape_spec: dict) -> SubdomainMask:
    """Label cells from a shape spec.

    Kinds: ``full`` (everything label 1), ``rectangle`` and ``pi_glyph`` (box
    keys ``x0, y0, x1, y1``; cells whose centres fall inside get label 2),
    ``random`` (``fraction``, ``seed``: exactly round(fraction * ncells) cells,
    chosen by a seeded shuffle) and ``multi`` (``parts``: list of the above,
    part i painted with label i + 2, later parts overwrite earlier ones).
    """
    spec = dict(shape_spec)
    labels = np.ones(grid.shape, dtype=np.int64)
    if spec.get("kind") == "multi":
        for idx, part in enumerate(spec.get("parts", [])):
            if part.get("kind") == "multi":
                raise InvalidArgumentError("nested multi masks are not supported")
            labels[_region(grid, part)] = idx + 2
    else:
        labels[_region(grid, spec)] = 2
    return SubdomainMask(grid, labels, spec)
