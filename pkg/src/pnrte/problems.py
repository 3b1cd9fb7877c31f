"""Benchmark problem construction and the reference oracles.

Fields are numpy arrays indexed [i, j(, k)] with x first; all parameter
fields live at voxel centers.  Emission is stored per real-SH coefficient
under the names produced by equations.q_name, zonal phase coefficients under
equations.p_name (computed by spherical projection of a Henyey-Greenstein
lobe, not hard-coded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .equations import p_name, q_name
from .sh import zonal_phase_coefficients

SQRT_4PI = math.sqrt(4.0 * math.pi)


class SingularRiskError(RuntimeError):
    """The extinction field contains vacuum: the assembled system is
    singular (infinite condition number) and the solve cannot converge."""


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    origin: tuple            # world coordinates of the domain minimum corner
    extent: tuple            # world size per axis
    res: tuple               # voxels per axis
    fields: dict = field(repr=False)
    bc: str = "dirichlet"
    sigma_t_floor: float = 0.0
    name: str = ""

    def __post_init__(self):
        hs = {self.extent[k] / self.res[k] for k in range(self.dim)}
        if len(hs) != 1:
            raise ValueError("voxels must be cubic: extent/res equal per axis")
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        st, ss = self.fields["sigma_t"], self.fields["sigma_s"]
        if not (np.all(np.isfinite(st)) and np.all(np.isfinite(ss))):
            raise ValueError("non-finite parameter field")
        if np.any(ss > st + 1e-12):
            raise ValueError("sigma_s must not exceed sigma_t")

    @property
    def h(self):
        return self.extent[0] / self.res[0]

    def field_array(self, name):
        """Parameter field at voxel centers; absent phase/emission
        coefficients are identically zero."""
        if name in self.fields:
            arr = self.fields[name]
            if np.ndim(arr) == 0:
                return np.full(self.res, float(arr))
            return arr
        if name.startswith("p_") or name.startswith("Q_"):
            return np.zeros(self.res)
        raise KeyError(f"unknown parameter field {name!r}")

    def centers(self, axis):
        """World coordinates of voxel centers along one axis."""
        h = self.h
        return self.origin[axis] + (np.arange(self.res[axis]) + 0.5) * h


def _phase_fields(g, max_band=8):
    coeffs = zonal_phase_coefficients(g, max_band)
    return {p_name(l): np.float64(c) for l, c in enumerate(coeffs)}


def validate_for_solve(spec):
    """Solver admission: a vacuum voxel makes the system singular."""
    floored = np.asarray(spec.field_array("sigma_t"))
    if float(floored.min()) <= 0.0:
        raise SingularRiskError(
            "sigma_t contains vacuum (min <= 0); raise the floor "
            "(floor_sigma_t) before solving")


def floor_sigma_t(spec, tau):
    """Clamp the extinction field from below: sigma_t' = max(sigma_t, tau).

    sigma_s is unchanged, so sigma_s <= sigma_t' still holds.  Idempotent
    and monotone in tau.
    """
    if tau <= 0:
        raise ValueError("floor must be positive")
    fields = dict(spec.fields)
    fields["sigma_t"] = np.maximum(spec.field_array("sigma_t"), tau)
    return replace(spec, fields=fields, sigma_t_floor=tau)


# ---------------------------------------------------------------------------
# benchmark problems
# ---------------------------------------------------------------------------

def make_checkerboard(res=71):
    """2-D lattice problem: 7x7 domain, unit blocks, absorbing checkerboard.

    Absorbers (sigma_t = 10, sigma_s = 0) sit on the inner-5x5 blocks with
    even i+j; everywhere else is pure scattering (sigma_t = sigma_s = 1).
    The center block carries a unit isotropic emitter: emission density 1
    per unit volume, i.e. Q^{0,0} = 1/sqrt(4 pi).  The layout is symmetric
    under x <-> y.
    """
    n = res
    shape = (n, n)
    xs = (np.arange(n) + 0.5) * (7.0 / n)
    bx = np.floor(xs).astype(int)
    BX, BY = np.meshgrid(bx, bx, indexing="ij")
    absorber = ((BX + BY) % 2 == 0) & (BX >= 1) & (BX <= 5) \
        & (BY >= 1) & (BY <= 5) & ~((BX == 3) & (BY == 3))
    sigma_t = np.where(absorber, 10.0, 1.0)
    sigma_s = np.where(absorber, 0.0, 1.0)
    q00 = np.where((BX == 3) & (BY == 3), 1.0 / SQRT_4PI, 0.0)
    fields = {"sigma_t": sigma_t, "sigma_s": sigma_s, q_name(0, 0): q00}
    fields.update(_phase_fields(0.0))
    return ProblemSpec(dim=2, origin=(0.0, 0.0), extent=(7.0, 7.0),
                       res=shape, fields=fields, bc="dirichlet",
                       sigma_t_floor=1.0, name="checkerboard")


def make_pointsource(res=80, sigma_t=8.0, albedo=0.9, extent=2.0, g=0.0):
    """3-D homogeneous medium with a unit isotropic point emitter.

    The emitter is deposited into the Q^{0,0} of the voxel containing the
    domain center with power-preserving normalization 1/(h^3 sqrt(4 pi)),
    so that int Q dV dw = 1 exactly.  Comparisons exclude the singular
    near field r < 2h.
    """
    if res < 8:
        raise ValueError("resolution too small for the point source problem")
    n = int(res)
    h = extent / n
    shape = (n, n, n)
    q00 = np.zeros(shape)
    c = n // 2
    q00[c, c, c] = 1.0 / (h ** 3 * SQRT_4PI)
    fields = {
        "sigma_t": np.full(shape, float(sigma_t)),
        "sigma_s": np.full(shape, float(albedo * sigma_t)),
        q_name(0, 0): q00,
    }
    fields.update(_phase_fields(g))
    half = extent / 2.0
    return ProblemSpec(dim=3, origin=(-half, -half, -half),
                       extent=(extent,) * 3, res=shape, fields=fields,
                       bc="dirichlet", sigma_t_floor=min(sigma_t, 1.0),
                       name="pointsource")


def source_voxel(spec):
    """Voxel index holding the point emitter (res//2 per axis)."""
    return tuple(r // 2 for r in spec.res)


def make_heterogeneous(seed=0, res=32, extent=2.0, albedo=0.9,
                       sigma_t_max=20.0):
    """Procedural heterogeneous volume with genuine vacuum pockets.

    Value noise (trilinear interpolation of a seeded random lattice, two
    octaves) is thresholded so that a fraction of the voxels has sigma_t
    exactly 0 before flooring, to exercise the conditioning study; the rest
    ramps up to sigma_t_max.  A Gaussian emission blob off the domain center
    is baked into Q^{0,0}.  Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    n = int(res)
    shape = (n, n, n)

    def value_noise(cells):
        lattice = rng.random((cells + 1,) * 3)
        t = np.linspace(0.0, cells, n, endpoint=False)
        i0 = np.floor(t).astype(int)
        frac = t - i0
        i1 = np.minimum(i0 + 1, cells)
        out = np.zeros(shape)
        fx = frac[:, None, None]
        fy = frac[None, :, None]
        fz = frac[None, None, :]
        for dx, wx in ((i0, 1 - fx), (i1, fx)):
            for dy, wy in ((i0, 1 - fy), (i1, fy)):
                for dz, wz in ((i0, 1 - fz), (i1, fz)):
                    out += (wx * wy * wz) * lattice[np.ix_(dx, dy, dz)]
        return out

    noise = 0.65 * value_noise(4) + 0.35 * value_noise(8)
    cut = 0.42  # tuned so the vacuum fraction sits well inside [5%, 40%]
    density = np.clip((noise - cut) / (1.0 - cut), 0.0, 1.0)
    sigma_t = sigma_t_max * density
    sigma_t[density <= 0.0] = 0.0

    xs = np.linspace(-1.0, 1.0, n)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    blob = np.exp(-(((X - 0.45) ** 2 + (Y - 0.45) ** 2 + (Z - 0.45) ** 2)
                    / (2 * 0.12 ** 2)))
    q00 = blob / (blob.sum() * (extent / n) ** 3 * SQRT_4PI)

    fields = {
        "sigma_t": sigma_t,
        "sigma_s": albedo * sigma_t,
        q_name(0, 0): q00,
    }
    fields.update(_phase_fields(0.0))
    half = extent / 2.0
    return ProblemSpec(dim=3, origin=(-half,) * 3, extent=(extent,) * 3,
                       res=shape, fields=fields, bc="dirichlet",
                       sigma_t_floor=0.0, name="heterogeneous")


def vacuum_fraction(spec):
    st = spec.field_array("sigma_t")
    return float(np.mean(st == 0.0))


# ---------------------------------------------------------------------------
# Monte Carlo fluence oracle
# ---------------------------------------------------------------------------

def mc_fluence_oracle(sigma_t, albedo, r_edges, n_paths, seed=0,
                      n_batches=20):
    """Brute-force ground truth: fluence around a unit isotropic point
    source in an infinite homogeneous medium.

    Analog random walk with collision-density estimation binned in
    spherical shells: the fluence in a shell is (collisions in shell) /
    (sigma_t * shell volume * paths).  Returns (fluence, stderr) per shell,
    stderr from batch statistics.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    r_edges = np.asarray(r_edges, dtype=float)
    vol = 4.0 / 3.0 * math.pi * (r_edges[1:] ** 3 - r_edges[:-1] ** 3)
    rng = np.random.default_rng(seed)
    batch_counts = np.zeros((n_batches, len(vol)))
    per_batch = int(math.ceil(n_paths / n_batches))
    for b in range(n_batches):
        pos = np.zeros((per_batch, 3))
        alive = np.ones(per_batch, dtype=bool)
        while np.any(alive):
            n_alive = int(alive.sum())
            # isotropic direction
            mu = rng.uniform(-1.0, 1.0, n_alive)
            phi = rng.uniform(0.0, 2.0 * math.pi, n_alive)
            s = np.sqrt(1.0 - mu * mu)
            d = np.stack([s * np.cos(phi), s * np.sin(phi), mu], axis=1)
            step = rng.exponential(1.0 / sigma_t, n_alive)
            pos[alive] += d * step[:, None]
            r = np.linalg.norm(pos[alive], axis=1)
            batch_counts[b] += np.histogram(r, bins=r_edges)[0]
            # analog absorption
            survive = rng.random(n_alive) < albedo
            idx = np.flatnonzero(alive)
            alive[idx[~survive]] = False
    phi_batch = batch_counts / (sigma_t * vol[None, :] * per_batch)
    fluence = phi_batch.mean(axis=0)
    stderr = phi_batch.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return fluence, stderr


def mc_total_absorbed(sigma_t, albedo, n_paths, seed=0):
    """Conservation check: absorbed power of a unit source is 1."""
    far = 60.0 / sigma_t
    counts, _ = mc_fluence_oracle(sigma_t, albedo, [0.0, far], n_paths, seed)
    vol = 4.0 / 3.0 * math.pi * far ** 3
    collisions_per_path = counts[0] * sigma_t * vol
    return (1.0 - albedo) * collisions_per_path
