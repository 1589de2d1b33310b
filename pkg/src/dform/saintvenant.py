"""Saint-Venant compatibility: residual checker, Killing kernel, and
least-squares displacement reconstruction.

A symmetric (1,1) field is a metric Lie derivative iff the curvature-corrected
curl-curl operator annihilates it, up to a finite-dimensional obstruction that
this module reports through the reconstruction residual instead of computing
a basis for it: a small operator residual together with a large reconstruction
residual flags a nontrivial obstruction component.  The kernel of the
displacement-to-strain map is the space of Killing fields, recovered
numerically from the spectrum of the weighted strain operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus as calc
from .charts import Chart, Grid
from .errors import NoSpectralGap, NotSymmetric, SolverDiverged
from .fields import DoubleFormField, geometry_of, metric_field

SYM_GAP_MIN = 1e3
DENSE_SVD_MAX_COLS = 6000


def displacement_field(chart: Chart, grid: Grid, values: np.ndarray) -> DoubleFormField:
    """A displacement as a (1,0)-form field (covector components per node)."""
    d = chart.dim
    vals = np.asarray(values, dtype=float)
    if vals.shape == grid.shape + (d,):
        vals = vals[..., None]
    return DoubleFormField(chart, grid, (1, 0), vals)


def lie_derivative_metric(Y: DoubleFormField) -> DoubleFormField:
    """Strain of a displacement: the symmetrized covariant derivative of the
    associated 1-form."""
    if Y.degrees != (1, 0):
        raise NotSymmetric("displacement must be a (1,0)-form field")
    dv = calc.d_nabla_v(Y)
    return dv + calc.transpose_field(dv)


def check_symmetric(sigma: DoubleFormField, tol: float = 1e-10):
    if sigma.degrees != (1, 1):
        raise NotSymmetric("expected a (1,1) field")
    asym = np.abs(sigma.values - np.swapaxes(sigma.values, -1, -2)).max()
    scale = max(np.abs(sigma.values).max(), 1.0)
    if asym > tol * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance")


def compatibility_residual(
    sigma: DoubleFormField, margin_layers: int = calc.DEFAULT_MARGIN_LAYERS
) -> dict:
    """Interior norms of the compatibility operator applied to a strain."""
    check_symmetric(sigma)
    h = calc.h_op(sigma)
    return {
        "l2": calc.l2_norm(h, margin_layers),
        "max": calc.max_norm(h, margin_layers),
    }


def _sym_pairs(d: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(d) for j in range(i, d)]


def _axis_derivative_sparse(grid: Grid, axis: int) -> sp.csr_matrix:
    from .fields import deriv_matrix

    mats = []
    for a, (n, h) in enumerate(zip(grid.shape, grid.spacings)):
        mats.append(sp.csr_matrix(deriv_matrix(n, h)) if a == axis else sp.identity(n, format="csr"))
    out = mats[0]
    for M in mats[1:]:
        out = sp.kron(out, M, format="csr")
    return out


def assemble_lie_operator(chart: Chart, grid: Grid) -> sp.csr_matrix:
    """Sparse strain operator: stacked 1-form components to stacked symmetric
    components (pairs i <= j, node-major).

    Built directly from the strain formula (derivative stencils plus
    Christoffel terms), independently of the field-level operator; the two
    agree to rounding on random probes.
    """
    d = chart.dim
    geo = geometry_of(chart, grid)
    N = int(np.prod(grid.shape))
    D = [_axis_derivative_sparse(grid, a) for a in range(d)]
    gamma_flat = geo.gamma.reshape(N, d, d, d)
    blocks = []
    for (i, j) in _sym_pairs(d):
        row = []
        for c in range(d):
            # L_ij = d_j om_i + d_i om_j - 2 Gamma^c_ij om_c
            M = sp.csr_matrix((N, N))
            if c == i:
                M = M + D[j]
            if c == j:
                M = M + D[i]
            M = M - sp.diags(2.0 * gamma_flat[:, c, i, j])
            row.append(M)
        blocks.append(row)
    return sp.bmat(blocks, format="csr")


def _weight_vectors(chart: Chart, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal discrete-L2 weights for 1-form and symmetric-pair stacks."""
    d = chart.dim
    geo = geometry_of(chart, grid)
    quad = geo.quad.ravel()
    lam = geo.lam.ravel()
    w_in = np.concatenate([quad * lam ** -2 for _ in range(d)])
    outs = []
    for (i, j) in _sym_pairs(d):
        factor = 1.0 if i == j else 2.0
        outs.append(factor * quad * lam ** -4)
    w_out = np.concatenate(outs)
    return w_in, w_out


def _stack_displacement(Y: DoubleFormField) -> np.ndarray:
    d = Y.chart.dim
    N = int(np.prod(Y.grid.shape))
    return Y.values.reshape(N, d).T.ravel()


def _unstack_displacement(chart: Chart, grid: Grid, x: np.ndarray) -> DoubleFormField:
    d = chart.dim
    N = int(np.prod(grid.shape))
    vals = x.reshape(d, N).T.reshape(grid.shape + (d, 1))
    return DoubleFormField(chart, grid, (1, 0), vals)


def _stack_symmetric(sigma: DoubleFormField) -> np.ndarray:
    d = sigma.chart.dim
    N = int(np.prod(sigma.grid.shape))
    flat = sigma.values.reshape(N, d, d)
    return np.concatenate([flat[:, i, j] for (i, j) in _sym_pairs(d)])


def _unstack_symmetric(chart: Chart, grid: Grid, b: np.ndarray) -> DoubleFormField:
    d = chart.dim
    N = int(np.prod(grid.shape))
    vals = np.zeros(grid.shape + (d, d))
    parts = b.reshape(len(_sym_pairs(d)), N)
    for row, (i, j) in zip(parts, _sym_pairs(d)):
        vals[..., i, j] = row.reshape(grid.shape)
        vals[..., j, i] = row.reshape(grid.shape)
    return DoubleFormField(chart, grid, (1, 1), vals)


@dataclass
class KillingBasis:
    """Discrete L2-orthonormal basis of the strain operator's kernel."""

    chart: Chart
    grid: Grid
    fields: list[DoubleFormField]
    singular_values: np.ndarray
    gap_ratio: float
    kill_tol: float

    @property
    def dim(self) -> int:
        return len(self.fields)


def default_kill_tol(chart: Chart, grid: Grid, s_max: float) -> float:
    """Kernel threshold, scaled by the operator norm.

    Curved-chart Killing fields are resolved only to stencil accuracy
    (strain residual O(h^2) with an O(1) constant), so the cutoff is
    0.05 * s_max * h^2 there; flat charts have exact discrete Killing fields
    and use a much tighter cutoff with a floor covering iterative-eigensolver
    noise.  The mandatory gap check guards either choice.
    """
    h2 = float(np.mean(grid.spacings)) ** 2
    if chart.kappa:
        return 0.05 * s_max * h2
    return s_max * max(1e-6 * h2, 1e-8)


def killing_basis(
    chart: Chart, grid: Grid, kill_tol: float | None = None, n_probe: int = 12
) -> KillingBasis:
    """Null-space basis of the weighted strain operator via thresholded SVD.

    Dense SVD below DENSE_SVD_MAX_COLS unknowns; sparse shift-invert
    eigensolver on the normal matrix above.  Raises NoSpectralGap when the
    kernel dimension is ambiguous (gap ratio below 1e3).
    """
    A = assemble_lie_operator(chart, grid)
    w_in, w_out = _weight_vectors(chart, grid)
    Wo = sp.diags(np.sqrt(w_out))
    Wi_inv = sp.diags(1.0 / np.sqrt(w_in))
    At = (Wo @ A @ Wi_inv).tocsr()
    n_cols = At.shape[1]
    if n_cols <= DENSE_SVD_MAX_COLS:
        _, svals, vt = np.linalg.svd(At.toarray(), full_matrices=False)
        s_max = float(svals[0])
        order = np.argsort(svals)
        small = svals[order][: min(n_probe, len(svals))]
        tol = default_kill_tol(chart, grid, s_max) if kill_tol is None else kill_tol
        r = int(np.sum(small <= tol))
        kernel_vecs = [vt[order[i]] for i in range(r)]
    else:
        M = (At.T @ At).tocsc()
        scale = float(abs(M).max())
        eps = 1e-10 * scale
        k = min(n_probe, n_cols - 2)
        vals, vecs = spla.eigsh(M, k=k, sigma=-eps, which="LM")
        order = np.argsort(vals)
        small = np.sqrt(np.maximum(vals[order], 0.0))
        s_max = float(np.sqrt(spla.eigsh(M, k=1, which="LM",
                                         return_eigenvectors=False)[0]))
        tol = default_kill_tol(chart, grid, s_max) if kill_tol is None else kill_tol
        r = int(np.sum(small <= tol))
        kernel_vecs = [vecs[:, order[i]] for i in range(r)]
    if r == 0 or r >= len(small):
        raise NoSpectralGap(
            f"kernel detection failed: smallest singular values {small}, tol {tol:.3e}"
        )
    gap_ratio = float(small[r] / max(small[r - 1], 1e-300))
    if gap_ratio < SYM_GAP_MIN:
        raise NoSpectralGap(
            f"singular-value gap ratio {gap_ratio:.2e} below {SYM_GAP_MIN:.0e}"
        )
    # orthonormalize in the weighted geometry (already near-orthonormal)
    V = np.array(kernel_vecs).T
    Q, _ = np.linalg.qr(V)
    fields = [
        _unstack_displacement(chart, grid, (1.0 / np.sqrt(w_in)) * Q[:, i])
        for i in range(r)
    ]
    return KillingBasis(chart, grid, fields, np.asarray(small), gap_ratio,
                        float(tol))


def project_out_killing(Y: DoubleFormField, basis: KillingBasis) -> DoubleFormField:
    out = Y
    for b in basis.fields:
        out = out - calc.l2_inner(out, b) * b
    return out


def reconstruct_displacement(
    sigma: DoubleFormField,
    basis: KillingBasis | None = None,
    rel_tol: float = 1e-10,
) -> dict:
    """Least-squares displacement whose strain best matches a symmetric field.

    Minimum-norm with respect to the Killing kernel: components along the
    (computed) Killing basis are removed.  Returns the displacement, the
    strain misfit, and solver diagnostics.
    """
    check_symmetric(sigma)
    chart, grid = sigma.chart, sigma.grid
    A = assemble_lie_operator(chart, grid)
    w_in, w_out = _weight_vectors(chart, grid)
    sq_in = np.sqrt(w_in)
    sq_out = np.sqrt(w_out)
    At = (sp.diags(sq_out) @ A @ sp.diags(1.0 / sq_in)).tocsr()
    b = sq_out * _stack_symmetric(sigma)
    x = np.zeros(At.shape[1])
    itn = 0
    istop = 0
    # restarted least squares: each pass solves for the residual correction,
    # which tightens consistent systems well past a single lsmr run
    for _ in range(3):
        r = b - At @ x
        res = spla.lsmr(At, r, atol=rel_tol, btol=rel_tol,
                        maxiter=10 * At.shape[1])
        x = x + res[0]
        istop, itn = res[1], itn + res[2]
        if np.linalg.norm(At.T @ (b - At @ x)) <= rel_tol * np.linalg.norm(b):
            break
    if istop not in (0, 1, 2, 4, 5):
        raise SolverDiverged(f"least-squares solver stopped with code {istop}")
    Y = _unstack_displacement(chart, grid, x / sq_in)
    if basis is None:
        basis = killing_basis(chart, grid)
    Y = project_out_killing(Y, basis)
    misfit = lie_derivative_metric(Y) - sigma
    return {
        "displacement": Y,
        "residual": calc.l2_norm(misfit),
        "iterations": int(itn),
        "killing_dim": basis.dim,
        "basis": basis,
    }


def killing_report(chart: Chart, grid: Grid, kill_tol: float | None = None) -> dict:
    basis = killing_basis(chart, grid, kill_tol)
    return {
        "killing_dim": basis.dim,
        "gap_ratio": basis.gap_ratio,
        "kill_tol": basis.kill_tol,
        "singular_values": [float(s) for s in basis.singular_values],
    }


def compatibility_report(sigma: DoubleFormField, reconstruct: bool = True) -> dict:
    """Joint report: operator residual plus reconstruction residual.

    Never a boolean verdict; a small operator residual with a large
    reconstruction residual indicates an obstruction-space component.
    """
    res = compatibility_residual(sigma)
    geo_h = [float(h) for h in sigma.grid.spacings]
    out = {
        "h": geo_h,
        "residual_l2": res["l2"],
        "residual_max": res["max"],
    }
    if reconstruct:
        rec = reconstruct_displacement(sigma)
        out["reconstruction_residual"] = rec["residual"]
        out["killing_dim"] = rec["killing_dim"]
        out["singular_values"] = [float(s) for s in rec["basis"].singular_values]
    return out
