"""The complex Monge-Ampere operator on (CP^1, O(k)) and its radial solver.

With the reference form normalized to total area k*pi, the density of the
perturbed form against the reference reduces, for radial potentials in the
compactified variable x, to

    MA(phi)(x) = 1 + [ (1 - 2x) phi'(x) + x(1 - x) phi''(x) ] / k,

which is the ratio Phi''(s)/Phi0''(s) of second s-derivatives of the full and
reference Kahler potentials with the pole factor x(1-x) cancelled analytically.
The solver finds phi with  log MA(phi) - phi = f  by damped Newton iteration
on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import eye as sparse_eye
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .errors import AdmissibilityError, SolverStagnationError
from .geometry import Point, PolarizedModel
from .potentials import (RadialFunction, RadialGrid, RadialPotential,
                         default_grid, graded_grid, radial_integral)


def radial_ma_values(phi: RadialFunction, model: PolarizedModel) -> np.ndarray:
    """Raw grid values of MA(phi); no positivity check."""
    g = phi.grid
    x = g.x
    return 1.0 + ((1.0 - 2.0 * x) * g.dx(phi.values)
                  + x * (1.0 - x) * g.dxx(phi.values)) / model.k


def ma_density(phi: RadialFunction, model: PolarizedModel) -> RadialFunction:
    """MA(phi) on the grid; raises if the perturbed form is not positive."""
    ma = radial_ma_values(phi, model)
    if ma.min() <= 0.0:
        i = int(np.argmin(ma))
        raise AdmissibilityError(
            f"perturbed form not positive: MA = {ma[i]:.3e} at x = {phi.grid.x[i]:.6f}",
            location=phi.grid.x[i])
    return RadialFunction(phi.grid, ma)


def is_admissible(phi: RadialFunction, model: PolarizedModel, margin: float = 0.0) -> bool:
    return bool(radial_ma_values(phi, model).min() > margin)


def general_ma_values(phi, model: PolarizedModel, x, theta) -> np.ndarray:
    """Density of the perturbed form at product nodes (x in (0,1), theta).

    For fields phi(x, theta) this is
    1 + [(1-2x) phi_x + x(1-x) phi_xx]/k + phi_thth / (4 k x(1-x)).
    """
    x = np.asarray(x, dtype=float)
    val, dx, dxx, dthth = phi.fields(x, theta)
    xc = x[:, None]
    return (1.0 + ((1.0 - 2.0 * xc) * dx + xc * (1.0 - xc) * dxx) / model.k
            + dthth / (4.0 * model.k * xc * (1.0 - xc)))


def density_weight(phi, model: PolarizedModel) -> RadialFunction:
    """Grid samples of e^{-phi} MA(phi): the full density of e^{-phi} omega_phi
    against the reference form."""
    ma = ma_density(phi, model)
    return RadialFunction(phi.grid, np.exp(-phi.values) * ma.values)


# ---------------------------------------------------------------------------
# Newton solver


@dataclass
class MASolveResult:
    phi: RadialPotential
    residuals: list
    iterations: int

    @property
    def residual(self) -> float:
        return self.residuals[-1]


def _linear_part(grid: RadialGrid, model: PolarizedModel):
    """Sparse operator L with MA(phi) = 1 + (L phi)/k."""
    d1, d2 = grid.diff_matrices()
    x = grid.x
    inv_gp = diags(1.0 / grid.gp)
    dx1 = inv_gp @ d1
    dx2 = diags(1.0 / grid.gp ** 2) @ (d2 - diags(grid.gpp / grid.gp) @ d1)
    return diags(1.0 - 2.0 * x) @ dx1 + diags(x * (1.0 - x)) @ dx2


def solve_ma(f: RadialFunction, model: PolarizedModel, tol: float = 1e-10,
             initial: RadialPotential | None = None, max_iter: int = 80,
             max_backtracks: int = 45) -> MASolveResult:
    """Solve log MA(phi) - phi = f with positivity of the perturbed form.

    Damped Newton with halving line search; every accepted step must both
    decrease the sup-residual and keep MA(phi) > 0.  Stagnation raises with
    the residual history attached.
    """
    grid = f.grid
    fv = f.values
    L = _linear_part(grid, model) / model.k
    identity = sparse_eye(grid.n, format="csr")

    if initial is not None:
        phi = initial.resample(grid).values.copy()
    else:
        phi = np.zeros(grid.n)

    def ma_of(v):
        return 1.0 + L @ v

    ma = ma_of(phi)
    if ma.min() <= 0:
        raise AdmissibilityError("initial guess is not admissible",
                                 location=grid.x[int(np.argmin(ma))])
    res = np.log(ma) - phi - fv
    history = [float(np.max(np.abs(res)))]

    for it in range(max_iter):
        if history[-1] <= tol:
            return MASolveResult(RadialPotential(grid, phi), history, it)
        jac = diags(1.0 / ma) @ L - identity
        step = splu(jac.tocsc()).solve(-res)
        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks):
            cand = phi + alpha * step
            ma_c = ma_of(cand)
            if ma_c.min() > 0.0:
                res_c = np.log(ma_c) - cand - fv
                if np.max(np.abs(res_c)) < history[-1]:
                    phi, ma, res = cand, ma_c, res_c
                    history.append(float(np.max(np.abs(res))))
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise SolverStagnationError(
                f"Newton stagnated at residual {history[-1]:.3e} after {it} iterations",
                history=history)
    if history[-1] <= tol:
        return MASolveResult(RadialPotential(grid, phi), history, max_iter)
    raise SolverStagnationError(
        f"residual {history[-1]:.3e} above tolerance {tol:.1e} after {max_iter} iterations",
        history=history)


# ---------------------------------------------------------------------------
# special right-hand sides


def convex_combination_f(phi0: RadialPotential, phi1: RadialPotential,
                         model: PolarizedModel, t: float) -> RadialFunction:
    """Right-hand side whose solution interpolates the two Gram matrices:
    f_t = log( t e^{-phi1} MA(phi1) + (1-t) e^{-phi0} MA(phi0) )."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if phi0.grid != phi1.grid:
        raise ValueError("potentials must share a grid")
    w0 = density_weight(phi0, model).values
    w1 = density_weight(phi1, model).values
    return RadialFunction(phi0.grid, np.log(t * w1 + (1.0 - t) * w0))


def _bump_profile(u: np.ndarray) -> np.ndarray:
    """Smooth even bump supported on |u| < 1 with value 1 at 0."""
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-ui ** 2 / (1.0 - ui ** 2))
    return out


def bump_grid(eps: float, n: int = 2049, pole: str = "zero") -> RadialGrid:
    """Radial grid graded to resolve a bump of chart radius eps at a pole."""
    x_eps = eps ** 2 / (1.0 + eps ** 2)
    scale = x_eps if pole == "zero" else x_eps
    return graded_grid(scale, n=n, pole=pole)


def bump_density(p: Point, eps: float, model: PolarizedModel,
                 grid: RadialGrid | None = None):
    """Positive density concentrating at a pole, with unit total mass.

    Returns (density, log_density) as radial functions on the grid.  The mass
    within chart radius eps of the pole is at least 1 - eps; a small uniform
    floor keeps the logarithm bounded.  Total mass (under the same quadrature
    used by the Gram integrals) is normalized to exactly 1.
    """
    if not 0.0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if not (p.at_infinity or p.z == 0):
        raise ValueError("radial bump densities require p in {0, inf}")
    pole = "inf" if p.at_infinity else "zero"
    grid = grid or bump_grid(eps, pole=pole)

    x_eps = eps ** 2 / (1.0 + eps ** 2)
    u = (grid.x / x_eps) if pole == "zero" else ((1.0 - grid.x) / x_eps)
    core = _bump_profile(u)

    # Mass fractions: floor keeps log f bounded while leaving the
    # concentration requirement (>= 1 - eps inside |z| < eps) intact.
    floor_fraction = min(0.005, eps / 4.0)
    total = model.k * np.pi  # area of the reference form
    core_mass = total * radial_integral(RadialFunction(grid, core))
    amp = (1.0 - floor_fraction) / core_mass
    floor = floor_fraction / total
    raw = RadialFunction(grid, floor + amp * core)

    mass = total * radial_integral(raw)
    density = raw * (1.0 / mass)
    log_density = RadialFunction(grid, np.log(density.values))
    return density, log_density
