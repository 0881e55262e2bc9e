"""Independent reference computations shared by several test modules."""
import numpy as np
from numpy.polynomial.legendre import leggauss


def barycentric(verts, x):
    """Barycentric coordinates of points x (P, 3) by a 4x4 solve."""
    T = np.vstack([np.ones(4), np.asarray(verts, dtype=float).T])
    rhs = np.vstack([np.ones(len(x)), np.asarray(x, dtype=float).T])
    return np.linalg.solve(T, rhs).T


def tet_quadrature(verts, n=6):
    """Collapsed (Duffy) Gauss-Legendre rule on a tetrahedron: points, weights."""
    g, w = leggauss(n)
    g, w = 0.5 * (g + 1), 0.5 * w
    U, V, W = np.meshgrid(g, g, g, indexing="ij")
    WU, WV, WW = np.meshgrid(w, w, w, indexing="ij")
    xi1 = U
    xi2 = V * (1 - U)
    xi3 = W * (1 - U) * (1 - V)
    jac = (1 - U) ** 2 * (1 - V)
    ref = np.stack([xi1.ravel(), xi2.ravel(), xi3.ravel()], axis=1)
    wt = (WU * WV * WW * jac).ravel()
    verts = np.asarray(verts, dtype=float)
    J = (verts[1:] - verts[0]).T
    pts = verts[0] + ref @ J.T
    return pts, wt * abs(np.linalg.det(J))


def quadrature_matrices(verts):
    pts, wt = tet_quadrature(verts)
    lam = barycentric(verts, pts)
    M = np.einsum("p,pm,pn->mn", wt, lam, lam)
    # gradients of the (linear) barycentric functions by central differences
    size = np.max(np.ptp(np.asarray(verts, dtype=float), axis=0))
    eps = 1e-2 * size
    c = np.asarray(verts, dtype=float).mean(axis=0)
    grads = np.empty((4, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = eps
        grads[:, k] = (barycentric(verts, [c + e])[0] - barycentric(verts, [c - e])[0]) / (2 * eps)
    vol = wt.sum()
    K = vol * grads @ grads.T
    return M, K, vol


def random_tet(rng, min_quality=0.05):
    while True:
        v = rng.uniform(-5, 5, size=(4, 3))
        vol = abs(np.linalg.det((v[1:] - v[0]).T)) / 6
        edge = max(np.linalg.norm(v[i] - v[j]) for i in range(4) for j in range(i))
        if vol >= min_quality * edge**3 / 6:
            return v
