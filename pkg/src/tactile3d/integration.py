"""Normal integration: gradients, masked Poisson assembly, prior-augmented
least squares, and a rectangular fast-Poisson reference solver.

Unit convention
---------------
The solver works in grid units throughout: gradients are dimensionless
slopes per pixel step and depths come back in grid units (multiply by
pixel_pitch for mm). Mixing units inside the solver is how scaling bugs
hide, so conversion happens only at the edges (prior extraction, point
cloud export).

Scheme
------
Each valid pixel contributes one row. The left side is the degree-reduced
5-point Laplacian (center -deg, +1 per valid 4-neighbor). The right side
sums, per axis, the flux through each valid pixel edge with the gradient
averaged at the edge midpoint; where both neighbors are valid the two
fluxes telescope to the plain central difference (g_plus - g_minus) / 2,
and where one side is missing the single midpoint flux remains. The
midpoint form is exact for quadratic depth on any mask, which one-sided
boundary differences are not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.fft import dstn, idstn

from .errors import ConvergenceError
from .geometry import SensorSurface
from .raster import NormalMap, RasterGrid, _frozen


@dataclass(frozen=True)
class GradientField:
    """Per-pixel depth slopes (p, q) = (dz/dx, dz/dy), dimensionless."""

    p: np.ndarray
    q: np.ndarray
    mask: np.ndarray
    clamped_pixels: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p, np.float64))
        object.__setattr__(self, "q", _frozen(self.q, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))
        if not (self.p.shape == self.q.shape == self.mask.shape) or self.p.ndim != 2:
            raise ValueError("p, q and mask must be matching 2-d arrays")
        if not (np.all(np.isfinite(self.p[self.mask])) and np.all(np.isfinite(self.q[self.mask]))):
            raise ValueError("gradients must be finite at valid pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class DepthPrior:
    """Known depths at selected pixels, appended as weighted rows.

    values are in the units named by `units`; the solver requires "grid".
    """

    pixels: np.ndarray
    values: np.ndarray
    weight: float = 1.0
    band_width: int = 10
    units: str = "grid"

    def __post_init__(self):
        px = _frozen(self.pixels, np.int64)
        vals = _frozen(self.values, np.float64)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "values", vals)
        if px.ndim != 2 or px.shape[1] != 2 or len(px) != len(vals):
            raise ValueError("pixels must be (K, 2) row/col indices matching values")
        if not np.all(np.isfinite(vals)):
            raise ValueError("prior depths must be finite")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")
        if self.units not in ("grid", "mm"):
            raise ValueError("units must be 'grid' or 'mm'")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PoissonSystem:
    """Sparse rows over the valid-pixel depth vector plus right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    index_map: np.ndarray
    mask: np.ndarray
    n_poisson_rows: int
    pinned: bool = False

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class DepthMap:
    """Reconstructed depth raster; `units` is "grid" or "mm"."""

    z: np.ndarray
    mask: np.ndarray
    units: str = "grid"
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "z", _frozen(self.z, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))
        if self.z.shape != self.mask.shape or self.z.ndim != 2:
            raise ValueError("z and mask must be matching 2-d arrays")
        if not np.all(np.isfinite(self.z[self.mask])):
            raise ValueError("depths must be finite at valid pixels")
        if self.units not in ("grid", "mm"):
            raise ValueError("units must be 'grid' or 'mm'")

    def to_mm(self, pixel_pitch: float) -> "DepthMap":
        if self.units == "mm":
            return self
        return DepthMap(self.z * pixel_pitch, self.mask, "mm", dict(self.diagnostics))


NZ_FLOOR = 1e-3


def normals_to_gradients(normals: NormalMap, nz_floor: float = NZ_FLOOR) -> GradientField:
    """Convert unit normals to depth slopes p = -nx/nz, q = -ny/nz.

    nz is clamped below at nz_floor before dividing; the number of clamped
    valid pixels is recorded on the result for diagnostics.
    """
    nz = np.maximum(normals.nz, nz_floor)
    clamped = int(np.count_nonzero((normals.nz < nz_floor) & normals.mask))
    p = np.where(normals.mask, -normals.nx / nz, 0.0)
    q = np.where(normals.mask, -normals.ny / nz, 0.0)
    return GradientField(p, q, normals.mask, clamped_pixels=clamped)


def _shifted(a: np.ndarray, di: int, dj: int):
    """a sampled at (i + di, j + dj), zero/false padded."""
    H, W = a.shape
    out = np.zeros_like(a)
    si = slice(max(di, 0), H + min(di, 0))
    sj = slice(max(dj, 0), W + min(dj, 0))
    ti = slice(max(-di, 0), H + min(-di, 0))
    tj = slice(max(-dj, 0), W + min(-dj, 0))
    out[ti, tj] = a[si, sj]
    return out


def assemble_poisson(grad: GradientField) -> PoissonSystem:
    """Build the masked Poisson rows for a gradient field.

    One row per valid pixel in row-major order. See the module docstring
    for the stencil and the midpoint flux right-hand side.
    """
    mask = grad.mask
    H, W = mask.shape
    n = int(mask.sum())
    if n == 0:
        raise ValueError("mask has no valid pixels")
    index_map = -np.ones((H, W), dtype=np.int64)
    index_map[mask] = np.arange(n)

    rows, cols, vals = [], [], []
    degree = np.zeros((H, W))
    for di, dj in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        nb = mask & _shifted(mask, di, dj)
        degree += nb
        rows.append(index_map[nb])
        cols.append(_shifted(index_map, di, dj)[nb])
        vals.append(np.ones(int(nb.sum())))
    rows.append(index_map[mask])
    cols.append(index_map[mask])
    vals.append(-degree[mask])

    rhs = np.zeros((H, W))
    for (di, dj), g in (((0, 1), grad.p), ((1, 0), grad.q)):
        # (di, dj) points toward the increasing-coordinate neighbor:
        # +x is the next column, +y the next row (row index grows with y).
        m_plus = mask & _shifted(mask, di, dj)
        m_minus = mask & _shifted(mask, -di, -dj)
        g_plus = _shifted(g, di, dj)
        g_minus = _shifted(g, -di, -dj)
        both = m_plus & m_minus
        only_plus = m_plus & ~m_minus
        only_minus = m_minus & ~m_plus
        rhs[both] += (g_plus[both] - g_minus[both]) / 2.0
        rhs[only_plus] += (g[only_plus] + g_plus[only_plus]) / 2.0
        rhs[only_minus] -= (g[only_minus] + g_minus[only_minus]) / 2.0

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    return PoissonSystem(matrix=matrix, rhs=rhs[mask], index_map=index_map,
                         mask=mask, n_poisson_rows=n, pinned=False)


def border_band_mask(mask: np.ndarray, band_width: int) -> np.ndarray:
    """Valid pixels whose distance to the raster border is < band_width."""
    H, W = mask.shape
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    dist = np.minimum(np.minimum(ii, H - 1 - ii), np.minimum(jj, W - 1 - jj))
    return mask & (dist < band_width)


def extract_boundary_prior(source, band_width: int = 10, weight: float = 1.0,
                           mask: np.ndarray | None = None,
                           pixel_pitch: float | None = None) -> DepthPrior:
    """Pair border-band pixels with the reference depth at each of them.

    `source` may be a SensorSurface (heights in mm, converted to grid
    units through its pixel pitch), a DepthMap, or a RasterGrid already in
    grid units. The band is measured from the raster border, mirroring a
    sensor whose rim is glued to the housing.
    """
    if band_width < 1:
        raise ValueError("band_width must be >= 1")
    if isinstance(source, SensorSurface):
        values = source.height_grid / source.pixel_pitch
        base_mask = source.valid_mask
    elif isinstance(source, DepthMap):
        values = source.z
        base_mask = source.mask
        if source.units == "mm":
            if pixel_pitch is None:
                raise ValueError("mm depth source needs pixel_pitch")
            values = values / pixel_pitch
    elif isinstance(source, RasterGrid):
        values = source.values
        base_mask = source.mask
    else:
        raise TypeError(f"unsupported prior source: {type(source).__name__}")
    if mask is not None:
        base_mask = base_mask & mask
    band = border_band_mask(base_mask, band_width)
    if not band.any():
        raise ValueError("prior band covers no valid pixels")
    pixels = np.argwhere(band)
    return DepthPrior(pixels=pixels, values=values[band], weight=weight,
                      band_width=band_width, units="grid")


def augment_with_prior(system: PoissonSystem, prior: DepthPrior) -> PoissonSystem:
    """Append one sqrt(weight)-scaled row per prior entry."""
    if prior.units != "grid":
        raise ValueError("prior must be in grid units by solve time")
    unknowns = system.index_map[prior.pixels[:, 0], prior.pixels[:, 1]]
    if np.any(unknowns < 0):
        raise ValueError("prior references pixels outside the mask")
    k = len(prior)
    sq = np.sqrt(prior.weight)
    rows = sp.csr_matrix((np.full(k, sq), (np.arange(k), unknowns)),
                         shape=(k, system.n_unknowns))
    matrix = sp.vstack([system.matrix, rows]).tocsr()
    rhs = np.concatenate([system.rhs, sq * prior.values])
    return PoissonSystem(matrix=matrix, rhs=rhs, index_map=system.index_map,
                         mask=system.mask, n_poisson_rows=system.n_poisson_rows,
                         pinned=system.pinned or prior.weight > 0)


def _lsq_direct(matrix: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    normal = (matrix.T @ matrix).tocsc()
    return spla.splu(normal).solve(matrix.T @ rhs)


def _lsq_cg(matrix: sp.csr_matrix, rhs: np.ndarray, tol: float, maxit: int):
    """Jacobi-preconditioned CG on the normal equations."""
    at = matrix.T.tocsr()
    normal = (at @ matrix).tocsr()
    target = at @ rhs
    diag = normal.diagonal()
    diag[diag == 0] = 1.0
    inv_diag = 1.0 / diag
    x = np.zeros(normal.shape[0])
    r = target.copy()
    target_norm = np.linalg.norm(target)
    if target_norm == 0:
        return x, 0.0
    z = inv_diag * r
    direction = z.copy()
    rz = r @ z
    for _ in range(maxit):
        adir = normal @ direction
        alpha = rz / (direction @ adir)
        x += alpha * direction
        r -= alpha * adir
        if np.linalg.norm(r) <= tol * target_norm:
            return x, np.linalg.norm(r) / target_norm
        z = inv_diag * r
        rz_new = r @ z
        direction = z + (rz_new / rz) * direction
        rz = rz_new
    residual = np.linalg.norm(r) / target_norm
    raise ConvergenceError(
        f"CG did not reach {tol:.1e} within {maxit} iterations "
        f"(relative residual {residual:.3e})", residual)


def _pin_rows(system: PoissonSystem):
    """One z_k = 0 row per connected mask component.

    The pure Neumann system is rank-deficient by one constant per
    component; a single-coefficient row per component removes exactly
    that freedom without biasing the least-squares fit (the penalty lives
    in the nullspace direction, so the optimizer zeroes it).
    """
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    labels, n_comp = ndimage.label(system.mask, structure=structure)
    comp_of_unknown = labels[system.mask]
    pins = []
    for comp in range(1, n_comp + 1):
        pins.append(int(np.argmax(comp_of_unknown == comp)))
    rows = sp.csr_matrix((np.ones(len(pins)), (np.arange(len(pins)), pins)),
                         shape=(len(pins), system.n_unknowns))
    return rows, comp_of_unknown


def solve_depth(system: PoissonSystem, method: str = "direct",
                tol: float = 1e-10, max_iterations: int = 10000) -> DepthMap:
    """Least-squares solve of the (possibly augmented) Poisson system.

    method "direct" factorizes the normal equations (deterministic sparse
    LU); "cg" runs Jacobi-preconditioned conjugate gradients to `tol`
    relative residual and raises ConvergenceError on failure. Without any
    pinning prior the solution follows the zero-mean convention, applied
    per connected mask component.
    """
    if method not in ("direct", "cg"):
        raise ValueError(f"unknown solver method: {method}")
    matrix, rhs = system.matrix, system.rhs
    comp_of_unknown = None
    if not system.pinned:
        pin, comp_of_unknown = _pin_rows(system)
        matrix = sp.vstack([matrix, pin]).tocsr()
        rhs = np.concatenate([rhs, np.zeros(pin.shape[0])])

    if method == "direct":
        x = _lsq_direct(matrix, rhs)
        residual = 0.0
    else:
        x, residual = _lsq_cg(matrix, rhs, tol, max_iterations)

    if comp_of_unknown is not None:
        for comp in np.unique(comp_of_unknown):
            sel = comp_of_unknown == comp
            x[sel] -= x[sel].mean()

    z = np.zeros(system.mask.shape)
    z[system.mask] = x
    diagnostics = {"solver": method, "relative_residual": float(residual),
                   "rows": int(matrix.shape[0]), "unknowns": int(matrix.shape[1])}
    return DepthMap(z=z, mask=system.mask, units="grid", diagnostics=diagnostics)


def fast_poisson_solve(grad: GradientField) -> DepthMap:
    """Rectangular zero-boundary reference solver (discrete sine transform).

    Ignores the mask beyond zero-filling: the classic fast Poisson
    integrator assumes a full rectangle with zero depth on the border,
    which is exactly the baseline behavior the boundary prior improves on.
    """
    H, W = grad.shape
    if H < 3 or W < 3:
        raise ValueError("fast Poisson needs at least a 3x3 raster")
    p = np.where(grad.mask, grad.p, 0.0)
    q = np.where(grad.mask, grad.q, 0.0)
    f = np.zeros((H, W))
    f[:, 1:-1] += (p[:, 2:] - p[:, :-2]) / 2.0
    f[1:-1, :] += (q[2:, :] - q[:-2, :]) / 2.0
    interior = f[1:-1, 1:-1]
    spectrum = dstn(interior, type=1)
    ii, jj = np.meshgrid(np.arange(1, H - 1), np.arange(1, W - 1), indexing="ij")
    eigenvalues = 2 * np.cos(np.pi * ii / (H - 1)) + 2 * np.cos(np.pi * jj / (W - 1)) - 4
    z = np.zeros((H, W))
    z[1:-1, 1:-1] = idstn(spectrum / eigenvalues, type=1)
    diagnostics = {"solver": "fast-poisson", "relative_residual": 0.0,
                   "rows": (H - 2) * (W - 2), "unknowns": (H - 2) * (W - 2)}
    return DepthMap(z=z, mask=grad.mask, units="grid", diagnostics=diagnostics)


def integrate_normals(normals: NormalMap, prior: DepthPrior | None = None,
                      method: str = "direct", nz_floor: float = NZ_FLOOR,
                      tol: float = 1e-10, max_iterations: int = 10000) -> DepthMap:
    """Normals to depth: gradients, assembly, optional prior, solve.

    method "fast-poisson" routes to the rectangular reference solver
    (prior must be None there; it has no way to honor one).
    """
    grad = normals_to_gradients(normals, nz_floor=nz_floor)
    if method == "fast-poisson":
        if prior is not None:
            raise ValueError("fast-poisson mode cannot honor a depth prior")
        depth = fast_poisson_solve(grad)
    else:
        system = assemble_poisson(grad)
        if prior is not None:
            system = augment_with_prior(system, prior)
        depth = solve_depth(system, method=method, tol=tol,
                            max_iterations=max_iterations)
    depth.diagnostics["clamped_pixels"] = grad.clamped_pixels
    return depth


def depth_to_pointcloud(depth: DepthMap, pixel_pitch: float) -> np.ndarray:
    """One (x, y, z) mm point per valid pixel; x runs along columns."""
    if pixel_pitch <= 0:
        raise ValueError("pixel_pitch must be positive")
    ii, jj = np.nonzero(depth.mask)
    z = depth.z[ii, jj]
    if depth.units == "grid":
        z = z * pixel_pitch
    return np.column_stack([jj * pixel_pitch, ii * pixel_pitch, z])
