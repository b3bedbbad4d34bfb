"""Unit-cell problems and effective parameters.

Two problems live on the periodic unit cell Y = [0, 1)^2 split into the
inclusion D (region 1) and the matrix Y* (region 0):

* the periodic correctors ``w_j`` on Y* (zero mean, natural condition on
  the inclusion boundary), giving the effective matrix ``a_eff``;
* the resonant problem ``-eps_i^{-1} Lap w - k^2 w = 1`` in D with
  ``w = 0`` on its boundary, giving ``mu_eff = 1 + k^2 int_D w``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import NotASquareInclusion
from .mesh import AxisBox, Mesh2D, PeriodicMesh, periodic_wrap, structured_mesh
from .sparse import DirectSolver, augment_with_mean_constraint

log = logging.getLogger(__name__)

UNIT_CELL = AxisBox(0.0, 0.0, 1.0, 1.0)
DEFAULT_INCLUSION = AxisBox(0.25, 0.25, 0.75, 0.75)


@dataclass(frozen=True)
class CellConfig:
    eps_e_inv: float = 10.0
    eps_i_inv: complex = 10.0 - 0.01j
    D: AxisBox | None = DEFAULT_INCLUSION
    n_cell: int = 64

    def __post_init__(self):
        if self.eps_e_inv <= 0:
            raise ValueError("eps_e_inv must be positive")
        eps_i_inv = complex(self.eps_i_inv)
        if eps_i_inv.real <= 0 or eps_i_inv.imag >= 0:
            raise ValueError("eps_i_inv needs a positive real and a negative imaginary part")
        object.__setattr__(self, "eps_i_inv", eps_i_inv)
        if self.D is not None and not UNIT_CELL.contains(self.D, strict=True):
            raise ValueError(f"inclusion {self.D} must lie strictly inside the unit cell")

    @property
    def eps_i(self) -> complex:
        return 1.0 / self.eps_i_inv

    def with_n(self, n_cell: int) -> "CellConfig":
        return CellConfig(self.eps_e_inv, self.eps_i_inv, self.D, n_cell)


@dataclass(frozen=True, eq=False)
class CellSolution:
    w1: fem.FieldP1
    w2: fem.FieldP1
    w: fem.FieldP1
    a_eff: np.ndarray
    mu_eff: complex
    k: float


class CellSolver:
    """Holds the cell mesh and the k-independent factorizations for one configuration.

    With region-wise constant coefficients the macroscopic quadrature
    points all see the same cell, so one instance serves a whole HMM solve.
    """

    def __init__(self, config: CellConfig):
        self.config = config
        self.mesh: Mesh2D = structured_mesh(UNIT_CELL, config.n_cell, config.D)
        self.periodic: PeriodicMesh = periodic_wrap(self.mesh)
        self._correctors: tuple[fem.FieldP1, fem.FieldP1] | None = None
        self.residuals: dict[str, float] = {}

    # -- periodic correctors on Y* -------------------------------------------------

    @cached_property
    def _matrix_mask(self) -> np.ndarray:
        return self.mesh.region == 0

    @cached_property
    def _corrector_system(self):
        mesh, mask = self.mesh, self._matrix_mask
        verts = mesh.vertices_of_region(0)
        vdof = self.periodic.dof_of_vertex[verts]
        dofs, local = np.unique(vdof, return_inverse=True)
        # Prolongation from periodic Y* dofs to mesh vertices.
        P = sp.csr_matrix((np.ones(len(verts)), (verts, local)), shape=(mesh.n_vertices, len(dofs)))
        a = np.broadcast_to(self.config.eps_e_inv * np.eye(2), (mesh.n_triangles, 2, 2))
        K = P.T @ fem.stiffness_matrix(mesh, a, mask) @ P
        weights = (P.T @ fem.load_vector(mesh, mask=mask)).real
        solver = DirectSolver(augment_with_mean_constraint(K, weights))
        return P, weights, solver

    def solve_corrector(self, j: int) -> fem.FieldP1:
        if j not in (1, 2):
            raise ValueError(f"corrector index must be 1 or 2, got {j}")
        P, weights, solver = self._corrector_system
        mesh, mask = self.mesh, self._matrix_mask
        grads = fem.barycentric_gradients(mesh)[mask]
        contrib = -self.config.eps_e_inv * mesh.areas[mask, None] * grads[:, :, j - 1]
        b_vert = np.bincount(mesh.triangles[mask].ravel(), weights=contrib.ravel(),
                             minlength=mesh.n_vertices)
        b = np.concatenate([P.T @ b_vert, [0.0]])
        x = solver.solve(b)
        self.residuals[f"corrector_{j}"] = solver.last_residual
        vals = P @ x[:-1]
        imag = np.abs(vals.imag).max(initial=0.0)
        if imag > 1e-10:
            log.warning("corrector w_%d has imaginary part %.2e", j, imag)
        return fem.FieldP1(mesh, vals, region=0)

    def correctors(self) -> tuple[fem.FieldP1, fem.FieldP1]:
        if self._correctors is None:
            self._correctors = (self.solve_corrector(1), self.solve_corrector(2))
        return self._correctors

    def effective_a(self, w1: fem.FieldP1 | None = None, w2: fem.FieldP1 | None = None) -> np.ndarray:
        if w1 is None or w2 is None:
            w1, w2 = self.correctors()
        return effective_a(self.config, w1, w2)

    # -- resonant problem in D ------------------------------------------------------

    @cached_property
    def _resonant_parts(self):
        mesh = self.mesh
        mask = mesh.region == 1
        if not mask.any():
            return None
        interior = np.setdiff1d(mesh.vertices_of_region(1), mesh.vertices_of_region(0))
        K = fem.stiffness_matrix(mesh, np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2)), mask)
        M = fem.mass_matrix(mesh, mask=mask)
        load = fem.load_vector(mesh, mask=mask).real
        K = K[interior][:, interior]
        M = M[interior][:, interior]
        return interior, K.tocsc(), M.tocsc(), load[interior]

    def solve_resonant(self, k: float) -> fem.FieldP1:
        parts = self._resonant_parts
        if parts is None:
            return fem.FieldP1(self.mesh, np.zeros(self.mesh.n_vertices), region=1)
        interior, K, M, load = parts
        A = self.config.eps_i_inv * K - k**2 * M
        solver = DirectSolver(A)
        x = solver.solve(load.astype(complex))
        self.residuals["resonant"] = solver.last_residual
        vals = np.zeros(self.mesh.n_vertices, dtype=complex)
        vals[interior] = x
        return fem.FieldP1(self.mesh, vals, region=1)

    def effective_mu(self, w: fem.FieldP1, k: float) -> complex:
        """``1 + k^2 int_D w`` (|Y| = 1)."""
        return complex(1.0 + k**2 * w.integral(region=1))

    def mu_eff(self, k: float) -> complex:
        return self.effective_mu(self.solve_resonant(k), k)

    def solve(self, k: float) -> CellSolution:
        w1, w2 = self.correctors()
        w = self.solve_resonant(k)
        return CellSolution(w1, w2, w, self.effective_a(w1, w2), self.effective_mu(w, k), k)

    def cell_energy(self, j: int) -> float:
        """``int_{Y*} eps_e^{-1} |e_j + grad w_j|^2``, the diagonal of a_eff."""
        return float(self.effective_a()[j - 1, j - 1])


# Module-level wrappers mirroring the operation list.

def solve_corrector_j(config: CellConfig, j: int) -> fem.FieldP1:
    return CellSolver(config).solve_corrector(j)


def solve_resonant(config: CellConfig, k: float) -> fem.FieldP1:
    return CellSolver(config).solve_resonant(k)


def effective_a(config: CellConfig, w1: fem.FieldP1, w2: fem.FieldP1) -> np.ndarray:
    """``(a_eff)_jk = int_{Y*} eps_e^{-1} (e_j + grad w_j).(e_k + grad w_k)^*``."""
    mesh = w1.mesh
    mask = mesh.region == 0
    area = mesh.areas[mask]
    fluxes = [np.eye(2)[j] + w.gradients()[mask] for j, w in enumerate((w1, w2))]
    a = np.empty((2, 2), dtype=complex)
    for j in range(2):
        for l in range(2):
            a[j, l] = config.eps_e_inv * np.sum(area * np.sum(fluxes[j] * np.conj(fluxes[l]), axis=1))
    if np.abs(a.imag).max() > 1e-10:
        log.warning("a_eff has imaginary part %.2e", np.abs(a.imag).max())
    return a.real


def effective_mu(config: CellConfig, w: fem.FieldP1, k: float) -> complex:
    return complex(1.0 + k**2 * w.integral(region=1))


# -- analytic oracle for a square inclusion ------------------------------------------

def _odd_pairs(m_max: int, exclude_upto: int = 0):
    odd = np.arange(1, m_max + 1, 2, dtype=float)
    m, n = np.meshgrid(odd, odd, indexing="ij")
    m, n = m.ravel(), n.ravel()
    if exclude_upto:
        keep = (m > exclude_upto) | (n > exclude_upto)
        m, n = m[keep], n[keep]
    return m, n


def _square_side(config: CellConfig) -> float:
    D = config.D
    if D is None or not D.is_square:
        raise NotASquareInclusion(f"eigen-series oracle needs a square inclusion, got {D}")
    return D.width


def mu_eff_eigen_oracle(config: CellConfig, k: float, M: int = 41) -> complex:
    """Dirichlet eigen-series of mu_eff for a square inclusion of side L.

    Only odd (m, n) modes have nonzero mean; with
    ``lambda_mn = pi^2 (m^2 + n^2) / L^2`` and
    ``(int_D phi_mn)^2 = 64 L^2 / (m^2 n^2 pi^4)`` the series reads
    ``1 + sum k^2 eps_i / (lambda_mn - k^2 eps_i) (int_D phi_mn)^2``.
    """
    if M < 1:
        raise ValueError("truncation M must be >= 1")
    L = _square_side(config)
    eps_i = config.eps_i
    m, n = _odd_pairs(M)
    lam = np.pi**2 * (m**2 + n**2) / L**2
    mean_sq = 64.0 * L**2 / (m**2 * n**2 * np.pi**4)
    return complex(1.0 + np.sum(k**2 * eps_i / (lam - k**2 * eps_i) * mean_sq))


def eigen_oracle_tail_bound(config: CellConfig, k: float, M: int = 41, extent: int = 20) -> float:
    """Estimate of the neglected terms, summed over odd pairs up to ``extent * M``."""
    L = _square_side(config)
    m, n = _odd_pairs(extent * M, exclude_upto=M)
    lam = np.pi**2 * (m**2 + n**2) / L**2
    return float(np.sum(64.0 * L**2 * k**2 * abs(config.eps_i) / (lam * m**2 * n**2 * np.pi**4)))


def resonance_wavenumbers(config: CellConfig, k_max: float) -> list[float]:
    """Wavenumbers where ``Re(lambda_mn - k^2 eps_i)`` vanishes for nonzero-mean modes."""
    L = _square_side(config)
    m, n = _odd_pairs(int(np.ceil(k_max * L / np.pi * np.sqrt(abs(config.eps_i.real)))) + 3)
    lam = np.unique(np.pi**2 * (m**2 + n**2) / L**2)
    ks = np.sqrt(lam / config.eps_i.real)
    return [float(x) for x in ks if x <= k_max]


# -- sweeps ---------------------------------------------------------------------------

@dataclass
class SignChange:
    k: float
    direction: str  # "down": Re(mu) goes from positive to negative with increasing k


def locate_sign_changes(func, ks: np.ndarray, values: np.ndarray, tol: float = 1e-3) -> list[SignChange]:
    """Bisect every sign change of ``func`` bracketed on the grid ``ks``."""
    out: list[SignChange] = []
    values = np.asarray(values, dtype=float)
    for i in range(len(ks) - 1):
        fa, fb = values[i], values[i + 1]
        if fa == 0.0 or np.sign(fa) == np.sign(fb):
            continue
        a, b = float(ks[i]), float(ks[i + 1])
        while b - a > tol:
            c = 0.5 * (a + b)
            fc = func(c)
            if np.sign(fc) == np.sign(fa):
                a, fa = c, fc
            else:
                b = c
        out.append(SignChange(0.5 * (a + b), "down" if values[i] > 0 else "up"))
    return out


@dataclass
class MuSweep:
    ks: np.ndarray
    mu: np.ndarray
    mu_oracle: np.ndarray
    a_eff: np.ndarray
    crossings: list[SignChange] = field(default_factory=list)


def mu_eff_sweep(config: CellConfig, ks, M: int = 41, bisect_tol: float = 1e-3,
                 solver: CellSolver | None = None) -> MuSweep:
    solver = solver or CellSolver(config)
    ks = np.asarray(ks, dtype=float)
    mu = np.array([solver.mu_eff(k) for k in ks])
    try:
        oracle = np.array([mu_eff_eigen_oracle(config, k, M) for k in ks])
    except NotASquareInclusion:
        oracle = np.full(len(ks), np.nan + 0j)
    crossings = locate_sign_changes(lambda k: solver.mu_eff(k).real, ks, mu.real, bisect_tol)
    return MuSweep(ks, mu, oracle, solver.effective_a(), crossings)
