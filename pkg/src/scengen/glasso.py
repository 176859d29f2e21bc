"""
Sparse precision estimation.

``glasso`` is the block coordinate descent of Friedman, Hastie & Tibshirani:
the covariance estimate ``W`` is updated one row/column at a time by solving
a lasso problem with coordinate descent, the diagonal left unpenalized.

``gemini`` fits a Kronecker-structured model ``scale * A (x) B`` by running
glasso separately on the spatial (zone) and temporal (lag) Gram correlation
matrices of a panel of ``Z x L`` observations.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError

logger = logging.getLogger(__name__)


def _offdiag(p):
    return ~np.eye(p, dtype=bool)


def objective(S, theta, lam) -> float:
    """``-logdet(theta) + tr(S theta) + lam * sum_{i != j} |theta_ij|``; ``inf`` if not PD."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return np.inf
    off = _offdiag(len(theta))
    return float(-logdet + np.sum(S * theta) + lam * np.abs(theta[off]).sum())


def kkt_violation(S, lam, theta, W, zero_tol: float = 0.0) -> float:
    """Largest violation of the glasso optimality conditions.

    Diagonal: ``W_ii = S_ii``. Active off-diagonal (``theta_ij != 0``):
    ``W_ij - S_ij = lam * sign(theta_ij)``. Inactive: ``|W_ij - S_ij| <= lam``.
    """
    S, theta, W = (np.asarray(a, dtype=float) for a in (S, theta, W))
    p = len(S)
    off = _offdiag(p)
    R = W - S
    viol = [np.abs(np.diag(R)).max(initial=0.0)]
    active = off & (np.abs(theta) > zero_tol)
    inactive = off & ~active
    if active.any():
        viol.append(np.abs(R[active] - lam * np.sign(theta[active])).max())
    if inactive.any():
        viol.append(np.maximum(np.abs(R[inactive]) - lam, 0).max())
    return float(max(viol))


def empirical_correlation(X) -> np.ndarray:
    """Sample correlation of the columns of an ``n x p`` matrix (unit diagonal)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"need an n x p matrix with n >= 2, got shape {X.shape}")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc ** 2).sum(axis=0))
    if np.any(sd == 0):
        raise ValueError(f"constant column(s) {np.flatnonzero(sd == 0).tolist()}")
    Xs = Xc / sd
    C = Xs.T @ Xs
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0)


def cov_to_corr(S) -> np.ndarray:
    d = np.sqrt(np.diag(S))
    C = S / np.outer(d, d)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


@dataclass
class GlassoResult:
    """Outcome of one glasso solve. Unpacks as ``theta, W``."""

    theta: np.ndarray
    W: np.ndarray
    converged: bool
    n_iter: int
    objectives: list = field(default_factory=list)
    ridge: float = 0.0

    def __iter__(self):
        yield self.theta
        yield self.W

    @property
    def n_edges(self) -> int:
        p = len(self.theta)
        return int(np.count_nonzero(self.theta[_offdiag(p)])) // 2


def _lasso_cd(V, s, lam, beta, tol, max_sweeps):
    """Coordinate descent for ``min 0.5 b'Vb - s'b + lam |b|_1`` (warm start ``beta``)."""
    q = len(s)
    g = V @ beta
    diag = np.diag(V)
    for _ in range(max_sweeps):
        dmax = 0.0
        for k in range(q):
            old = beta[k]
            r = s[k] - g[k] + diag[k] * old
            new = np.sign(r) * max(abs(r) - lam, 0.0) / diag[k]
            if new != old:
                delta = new - old
                g += V[:, k] * delta
                beta[k] = new
                dmax = max(dmax, abs(delta))
        if dmax < tol:
            break
    return beta


def _regularize(S, lam):
    ev = np.linalg.eigvalsh(S)
    ridge = max(0.0, -1.1 * ev[0])
    if ridge > 0:
        msg = f"input matrix not PSD (min eigenvalue {ev[0]:.3g}); adding {ridge:.3g} * I"
        warnings.warn(msg, stacklevel=3)
        S = S + ridge * np.eye(len(S))
    if np.any(np.diag(S) <= 0):
        raise NumericalError("non-positive diagonal in covariance input")
    return S, ridge


def glasso(S, lam: float, tol: float = 1e-4, max_iter: int = 200,
           inner_tol: float = 1e-12, inner_max: int = 10_000, inverse_tol: float = 1e-8) -> GlassoResult:
    """Graphical lasso by block coordinate descent.

    Parameters
    ----------
    S : (p, p) array
        Symmetric covariance or correlation matrix.
    lam : float
        Off-diagonal l1 penalty, ``>= 0``.
    tol : float
        Stop once the mean absolute change of the off-diagonal of ``W``
        over a sweep falls below ``tol * mean|S_offdiag|``.
    max_iter : int
        Sweep limit; on exhaustion the last iterate is returned with
        ``converged=False``.
    inverse_tol : float
        Sweeps also continue until ``||theta W - I||_2 <= inverse_tol`` so
        the returned pair are inverses of each other.

    Returns
    -------
    GlassoResult
        ``theta`` (sparse precision) and ``W`` (covariance estimate), plus
        convergence information and the primal objective after each sweep.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"S must be square, got {S.shape}")
    if np.abs(S - S.T).max(initial=0) > 1e-12 * max(1.0, np.abs(S).max()):
        raise ValueError("S is not symmetric")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    S = 0.5 * (S + S.T)
    p = len(S)
    S, ridge = _regularize(S, lam)
    off = _offdiag(p)

    if p == 1:
        return GlassoResult(theta=1 / S, W=S.copy(), converged=True, n_iter=0, ridge=ridge)
    if lam >= np.abs(S[off]).max():
        W = np.diag(np.diag(S))
        theta = np.diag(1 / np.diag(S))
        return GlassoResult(theta=theta, W=W, converged=True, n_iter=0,
                            objectives=[objective(S, theta, lam)], ridge=ridge)
    if lam == 0:
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise NumericalError("unpenalized fit needs a positive definite S") from None
        Linv = np.linalg.inv(L)
        theta = Linv.T @ Linv
        theta = 0.5 * (theta + theta.T)
        return GlassoResult(theta=theta, W=S.copy(), converged=True, n_iter=0,
                            objectives=[objective(S, theta, 0.0)], ridge=ridge)

    W = S.copy()
    B = np.zeros((p, p - 1))
    idx = [np.delete(np.arange(p), j) for j in range(p)]
    thresh = tol * np.abs(S[off]).mean()
    objectives = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W_old = W.copy()
        for j in range(p):
            ix = idx[j]
            V = W[np.ix_(ix, ix)]
            B[j] = _lasso_cd(V, S[ix, j], lam, B[j], inner_tol, inner_max)
            w = V @ B[j]
            W[ix, j] = w
            W[j, ix] = w
        theta = _precision(W, B, idx)
        objectives.append(objective(S, theta, lam))
        if (np.abs(W - W_old)[off].mean() < thresh
                and np.linalg.norm(theta @ W - np.eye(p), 2) <= inverse_tol):
            converged = True
            break

    if not converged:
        msg = f"glasso did not converge in {max_iter} sweeps"
        warnings.warn(msg, stacklevel=2)
    theta = _precision(W, B, idx)
    return GlassoResult(theta=theta, W=W, converged=converged, n_iter=it, objectives=objectives, ridge=ridge)


def _precision(W, B, idx):
    p = len(W)
    theta = np.zeros((p, p))
    for j in range(p):
        ix = idx[j]
        t22 = 1.0 / (W[j, j] - W[ix, j] @ B[j])
        theta[j, j] = t22
        theta[ix, j] = -B[j] * t22
    # keep exact zeros: an entry is zero only if both column solves agree
    both = (theta != 0) & (theta.T != 0)
    sym = np.where(both, 0.5 * (theta + theta.T), 0.0)
    np.fill_diagonal(sym, np.diag(theta))
    return sym


# ---------------------------------------------------------------------------
# Kronecker-structured model
# ---------------------------------------------------------------------------

@dataclass
class GraphicalModel:
    """Joint covariance ``scale * spatial_cov (x) temporal_cov``.

    Both factors are in correlation form (unit diagonal); ``scale`` carries
    the average per-entry variance.
    """

    spatial_precision: np.ndarray
    spatial_cov: np.ndarray
    temporal_precision: np.ndarray
    temporal_cov: np.ndarray
    scale: float
    variables: list = field(default_factory=list)
    lags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_zones(self) -> int:
        return len(self.spatial_cov)

    @property
    def n_lags(self) -> int:
        return len(self.temporal_cov)

    def to_dict(self):
        return {
            "scale": self.scale,
            "variables": [list(v) for v in self.variables],
            "lags": list(self.lags),
            "spatial_precision": self.spatial_precision.tolist(),
            "spatial_cov": self.spatial_cov.tolist(),
            "temporal_precision": self.temporal_precision.tolist(),
            "temporal_cov": self.temporal_cov.tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            spatial_precision=np.array(d["spatial_precision"], dtype=float),
            spatial_cov=np.array(d["spatial_cov"], dtype=float),
            temporal_precision=np.array(d["temporal_precision"], dtype=float),
            temporal_cov=np.array(d["temporal_cov"], dtype=float),
            scale=float(d["scale"]),
            variables=[tuple(v) for v in d["variables"]],
            lags=list(d["lags"]),
            diagnostics=d.get("diagnostics", {}),
        )


def _factor(S, lam, tol, max_iter, name):
    res = glasso(cov_to_corr(S), lam, tol=tol, max_iter=max_iter)
    diag = {"converged": res.converged, "n_iter": res.n_iter, "n_edges": res.n_edges,
            "ridge": res.ridge, "lambda": lam}
    logger.info("%s factor: %d sweeps, %d edges, converged=%s", name, res.n_iter, res.n_edges, res.converged)
    return res.theta, res.W, diag


def gemini(data, lambda_spatial: float = 0.1, lambda_temporal: float = 0.1,
           tol: float = 1e-4, max_iter: int = 200, variables: Sequence | None = None) -> GraphicalModel:
    """Kronecker-factored graphical model from ``n`` observed ``Z x L`` matrices.

    Parameters
    ----------
    data : DeviationPanel or (n, Z, L) array
        Gaussian scores; each (zone, lag) column is standardized internally.
    lambda_spatial, lambda_temporal : float
        glasso penalties for the zone and lag factors (on correlation scale).

    Notes
    -----
    The spatial Gram matrix is ``sum_t X_t X_t' / (n L)`` and the temporal
    one ``sum_t X_t' X_t / (n Z)``; both are converted to correlations
    before the penalized fit. A singleton axis gets a 1 x 1 identity factor.
    """
    if not isinstance(data, np.ndarray) and hasattr(data, "variables"):
        variables = list(data.variables) if variables is None else variables
        data = data.data
    X = np.asarray(data, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected (n, Z, L) array, got shape {X.shape}")
    n, Z, L = X.shape
    if n < 2:
        raise ValueError("need at least two observations")
    var = X.var(axis=0, ddof=1)
    if np.any(var == 0):
        raise ValueError("constant (zone, lag) column in panel")
    scale = float(var.mean())
    Xs = (X - X.mean(axis=0)) / np.sqrt(var)

    diagnostics = {"n": n}
    if Z == 1:
        sp_theta, sp_cov = np.eye(1), np.eye(1)
        diagnostics["spatial"] = {"converged": True, "n_iter": 0, "n_edges": 0, "ridge": 0.0,
                                  "lambda": lambda_spatial}
    else:
        S_A = np.einsum("nzl,nyl->zy", Xs, Xs) / (n * L)
        sp_theta, sp_cov, diagnostics["spatial"] = _factor(S_A, lambda_spatial, tol, max_iter, "spatial")
    if L == 1:
        tp_theta, tp_cov = np.eye(1), np.eye(1)
        diagnostics["temporal"] = {"converged": True, "n_iter": 0, "n_edges": 0, "ridge": 0.0,
                                   "lambda": lambda_temporal}
    else:
        S_B = np.einsum("nzl,nzm->lm", Xs, Xs) / (n * Z)
        tp_theta, tp_cov, diagnostics["temporal"] = _factor(S_B, lambda_temporal, tol, max_iter, "temporal")

    return GraphicalModel(spatial_precision=sp_theta, spatial_cov=sp_cov,
                          temporal_precision=tp_theta, temporal_cov=tp_cov, scale=scale,
                          variables=[tuple(v) for v in variables] if variables is not None else list(range(Z)),
                          lags=list(range(L)), diagnostics=diagnostics)


def kron_covariance(model: GraphicalModel) -> np.ndarray:
    """Full ``ZL x ZL`` covariance; row ``z * L + lag`` matches panel flattening."""
    return model.scale * np.kron(model.spatial_cov, model.temporal_cov)


# ---------------------------------------------------------------------------
# Dependency graphs
# ---------------------------------------------------------------------------

def partial_correlation(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    d = np.sqrt(np.diag(theta))
    P = -theta / np.outer(d, d)
    np.fill_diagonal(P, 1.0)
    return P


@dataclass
class DependencyGraph:
    nodes: list
    edges: list  # (i, j, weight) with i < j

    @property
    def n_components(self) -> int:
        n = len(self.nodes)
        if n == 0:
            return 0
        adj = np.zeros((n, n), dtype=bool)
        for i, j, _ in self.edges:
            adj[i, j] = adj[j, i] = True
        return int(connected_components(adj, directed=False)[0])

    def components(self) -> list[list]:
        n = len(self.nodes)
        adj = np.zeros((n, n), dtype=bool)
        for i, j, _ in self.edges:
            adj[i, j] = adj[j, i] = True
        _, lab = connected_components(adj, directed=False)
        groups = {}
        for k, c in enumerate(lab):
            groups.setdefault(int(c), []).append(self.nodes[k])
        return list(groups.values())

    def to_dot(self, name: str = "G") -> str:
        def q(s):
            return '"' + str(s).replace('"', r'\"') + '"'

        lines = [f"graph {q(name)} {{"]
        lines += [f"  {q(node)};" for node in self.nodes]
        for i, j, w in self.edges:
            lines.append(f"  {q(self.nodes[i])} -- {q(self.nodes[j])} [weight={w!r}, penwidth={1 + 4 * abs(w):.3f}];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"nodes": [str(v) for v in self.nodes],
                           "edges": [{"i": i, "j": j, "weight": w} for i, j, w in self.edges]}, indent=2)


def dependency_graph(theta, labels: Sequence | None = None, edge_threshold: float = 0.01) -> DependencyGraph:
    """Edges where the partial correlation ``-theta_ij / sqrt(theta_ii theta_jj)``
    exceeds ``edge_threshold`` in absolute value."""
    P = partial_correlation(theta)
    p = len(P)
    labels = list(range(p)) if labels is None else list(labels)
    if len(labels) != p:
        raise ValueError(f"{len(labels)} labels for a {p} x {p} matrix")
    edges = [(i, j, float(P[i, j])) for i in range(p) for j in range(i + 1, p)
             if abs(P[i, j]) > edge_threshold]
    return DependencyGraph(nodes=labels, edges=edges)


def write_matrix_csv(path, M, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["", *map(str, labels)]) + "\n")
        for lab, row in zip(labels, np.asarray(M)):
            fh.write(",".join([str(lab), *(repr(float(v)) for v in row)]) + "\n")
