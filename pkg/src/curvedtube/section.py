"""Cross-sections omega and their first Dirichlet eigenpair."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import NumericError, PreconditionError, TopologyError

GAUSS_ORDER = 24


# --- Bessel functions by power series --------------------------------------------

def bessel_j(n, x, terms=40):
    """J_n(x) from its power series; accurate to ~1e-15 for |x| <= 8."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * x
    out = np.zeros_like(x)
    for k in range(terms):
        out = out + (-1) ** k / (factorial(k) * factorial(k + n)) * half ** (2 * k + n)
    return out


def bisect_root(f, lo, hi, tol=1e-14, maxiter=200):
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise NumericError(f"root not bracketed in [{lo}, {hi}]")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo < tol:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    raise NumericError("bisection did not converge")


J01 = bisect_root(lambda x: float(bessel_j(0, x)), 2.0, 3.0)
J11 = bisect_root(lambda x: float(bessel_j(1, x)), 3.5, 4.2)


# --- transverse lattice used by the operator assembly ------------------------------

@dataclass(frozen=True)
class TransverseGrid:
    """Nodes inside omega with nearest-neighbour links.

    ``link_b == -1`` marks a link to the Dirichlet boundary at distance
    ``link_delta`` from ``link_a`` (the boundary point is
    ``nodes[link_a] + link_sign * link_delta * e_dir``).
    """

    nodes: np.ndarray          # (M, m)
    steps: np.ndarray          # (m,)
    link_a: np.ndarray
    link_b: np.ndarray
    link_dir: np.ndarray
    link_sign: np.ndarray
    link_delta: np.ndarray
    cell_area: float

    @property
    def size(self):
        return self.nodes.shape[0]

    def link_midpoints(self):
        off = np.zeros((self.link_a.size, self.nodes.shape[1]))
        off[np.arange(self.link_a.size), self.link_dir] = 0.5 * self.link_sign * self.link_delta
        return self.nodes[self.link_a] + off


def _lattice_links(index, steps, boundary_delta):
    """Links of a boolean lattice. ``index`` maps lattice cells to node ids (-1 outside)."""
    m = index.ndim
    la, lb, ld, ls, ldel = [], [], [], [], []
    for ax in range(m):
        pad = [(0, 0)] * m
        pad[ax] = (1, 1)
        padded = np.pad(index, pad, constant_values=-1)
        sl_mid = [slice(None)] * m
        sl_mid[ax] = slice(1, -1)
        sl_nxt = [slice(None)] * m
        sl_nxt[ax] = slice(2, None)
        sl_prv = [slice(None)] * m
        sl_prv[ax] = slice(None, -2)
        cur = padded[tuple(sl_mid)]
        nxt = padded[tuple(sl_nxt)]
        prv = padded[tuple(sl_prv)]
        inside = cur >= 0
        # interior links counted once (towards +ax)
        both = inside & (nxt >= 0)
        la.append(cur[both]); lb.append(nxt[both])
        ld.append(np.full(both.sum(), ax)); ls.append(np.ones(both.sum()))
        ldel.append(np.full(both.sum(), steps[ax]))
        for sign, nb in ((1.0, nxt), (-1.0, prv)):
            wall = inside & (nb < 0)
            la.append(cur[wall]); lb.append(np.full(wall.sum(), -1))
            ld.append(np.full(wall.sum(), ax)); ls.append(np.full(wall.sum(), sign))
            ldel.append(np.full(wall.sum(), boundary_delta[ax]))
    order = lambda arrs, dt: np.concatenate(arrs).astype(dt)
    return (order(la, np.int64), order(lb, np.int64), order(ld, np.int64),
            order(ls, float), order(ldel, float))


def lattice_grid(inside, origin, steps, boundary_delta):
    """Build a :class:`TransverseGrid` from a boolean lattice mask."""
    inside = np.asarray(inside, dtype=bool)
    steps = np.asarray(steps, dtype=float)
    index = -np.ones(inside.shape, dtype=np.int64)
    cells = np.argwhere(inside)            # C order: last axis fastest
    index[tuple(cells.T)] = np.arange(cells.shape[0])
    nodes = np.asarray(origin, dtype=float) + cells * steps
    la, lb, ld, ls, ldel = _lattice_links(index, steps, boundary_delta)
    return TransverseGrid(nodes, steps, la, lb, ld, ls, ldel, float(np.prod(steps)))


# --- cross-section -----------------------------------------------------------------

@dataclass(frozen=True)
class CrossSection:
    """omega in R^{d-1} with radius a = sup|u|, mu_1, mu_2 and the normalized J_1."""

    kind: str
    dim: int
    params: dict
    radius: float
    mu1: float
    mu2: float
    j1: Callable = field(repr=False)
    grad_j1: Callable = field(repr=False)
    quad_nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    lattice: Callable = field(repr=False)   # spacing -> TransverseGrid
    origin_convention: str = "centroid"

    @property
    def d(self):
        return self.dim + 1

    def norm_j1(self):
        return float(np.sqrt(np.sum(self.quad_weights * self.j1(self.quad_nodes) ** 2)))

    def transverse_grid(self, spacing):
        return self.lattice(spacing)

    def summary(self):
        return {"kind": self.kind, "dim": self.dim, "params": dict(self.params),
                "a": float(self.radius), "mu1": float(self.mu1), "mu2": float(self.mu2),
                "origin": self.origin_convention}


def _gauss(n, lo, hi):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def _cells(length, spacing):
    n = max(2, int(round(length / float(spacing))))
    return n, length / n


def make_interval(a, order=GAUSS_ORDER):
    """omega = (-a, a), the d = 2 cross-section."""
    a = float(a)
    if not a > 0:
        raise PreconditionError("half-width must be positive")
    k = np.pi / (2 * a)
    c = a ** -0.5

    def j1(u):
        u = np.asarray(u, dtype=float)[..., 0]
        return c * np.cos(k * u)

    def grad(u):
        u = np.asarray(u, dtype=float)
        return (-c * k * np.sin(k * u[..., 0]))[..., None]

    x, w = _gauss(order, -a, a)

    def lattice(spacing):
        n, h = _cells(2 * a, spacing)
        inside = np.ones(n - 1, dtype=bool)
        return lattice_grid(inside, [-a + h], [h], [h])

    return CrossSection("interval", 1, {"a": a}, a, k**2, 4 * k**2, j1, grad,
                        x[:, None], w, lattice)


def make_rectangle(b, c, order=GAUSS_ORDER):
    """Rectangle of sides b (along u_2) and c (along u_3), centred at the origin."""
    b, c = float(b), float(c)
    if not (b > 0 and c > 0):
        raise PreconditionError("rectangle sides must be positive")
    kb, kc = np.pi / b, np.pi / c
    norm = 2.0 / np.sqrt(b * c)

    def j1(u):
        u = np.asarray(u, dtype=float)
        return norm * np.cos(kb * u[..., 0]) * np.cos(kc * u[..., 1])

    def grad(u):
        u = np.asarray(u, dtype=float)
        g0 = -norm * kb * np.sin(kb * u[..., 0]) * np.cos(kc * u[..., 1])
        g1 = -norm * kc * np.cos(kb * u[..., 0]) * np.sin(kc * u[..., 1])
        return np.stack([g0, g1], axis=-1)

    xb, wb = _gauss(order, -b / 2, b / 2)
    xc, wc = _gauss(order, -c / 2, c / 2)
    X, Y = np.meshgrid(xb, xc, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    weights = np.outer(wb, wc).ravel()
    mu1 = kb**2 + kc**2
    mu2 = min(4 * kb**2 + kc**2, kb**2 + 4 * kc**2)

    def lattice(spacing):
        nb, hb = _cells(b, spacing)
        nc, hc = _cells(c, spacing)
        inside = np.ones((nb - 1, nc - 1), dtype=bool)
        return lattice_grid(inside, [-b / 2 + hb, -c / 2 + hc], [hb, hc], [hb, hc])

    return CrossSection("rectangle", 2, {"b": b, "c": c}, 0.5 * np.hypot(b, c), mu1, mu2,
                        j1, grad, nodes, weights, lattice)


def make_disk(r, n_radial=GAUSS_ORDER, n_angle=48):
    """Disk of radius r; mu_1 = (j_{0,1}/r)^2 with the zero found by bisection."""
    r = float(r)
    if not r > 0:
        raise PreconditionError("radius must be positive")
    k = J01 / r
    norm = 1.0 / (np.sqrt(np.pi) * r * abs(float(bessel_j(1, J01))))

    def j1(u):
        u = np.asarray(u, dtype=float)
        rho = np.hypot(u[..., 0], u[..., 1])
        return norm * bessel_j(0, k * rho)

    def grad(u):
        u = np.asarray(u, dtype=float)
        rho = np.hypot(u[..., 0], u[..., 1])
        safe = np.where(rho > 0, rho, 1.0)
        radial = -norm * k * bessel_j(1, k * rho)
        return np.where(rho[..., None] > 0, (radial / safe)[..., None] * u, 0.0)

    xr, wr = _gauss(n_radial, 0.0, r)
    th = 2 * np.pi * np.arange(n_angle) / n_angle
    R, TH = np.meshgrid(xr, th, indexing="ij")
    nodes = np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], axis=-1)
    weights = np.outer(wr * xr, np.full(n_angle, 2 * np.pi / n_angle)).ravel()

    def lattice(spacing):
        n = max(2, int(round(r / float(spacing))))
        h = r / n
        idx = np.arange(-n, n + 1)
        I, J = np.meshgrid(idx, idx, indexing="ij")
        inside = (I * h) ** 2 + (J * h) ** 2 < (r * (1 - 1e-12)) ** 2
        return lattice_grid(inside, [-n * h, -n * h], [h, h], [h, h])

    return CrossSection("disk", 2, {"r": r}, r, k**2, (J11 / r) ** 2, j1, grad,
                        nodes, weights, lattice)


def _connected(mask):
    _, n = ndimage.label(mask)
    return n == 1


def mask_laplacian(mask, spacing):
    """Cell-centred 5-point Dirichlet Laplacian; the boundary sits on the cell faces."""
    mask = np.asarray(mask, dtype=bool)
    h = float(spacing)
    grid = lattice_grid(mask, [0.0, 0.0], [h, h], [0.5 * h, 0.5 * h])
    n = grid.size
    coef = 1.0 / (h * grid.link_delta)
    diag = np.zeros(n)
    np.add.at(diag, grid.link_a, coef)
    inner = grid.link_b >= 0
    np.add.at(diag, grid.link_b[inner], coef[inner])
    off = sp.coo_matrix((-coef[inner], (grid.link_a[inner], grid.link_b[inner])), shape=(n, n))
    A = (off + off.T + sp.diags(diag)).tocsc()
    return A, grid


def make_mask(mask, spacing, refine=1):
    """Cross-section from a 2-D boolean pixel mask (d = 3 only).

    The domain is the union of the pixels.  mu_1 and J_1 come from the
    cell-centred 5-point Dirichlet Laplacian, solved by shift-invert Lanczos
    at zero; J_1 is normalized with the midpoint rule on the cells.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise PreconditionError("mask must be two dimensional")
    h0 = float(spacing)
    if not h0 > 0:
        raise PreconditionError("spacing must be positive")
    if mask.sum() < 2 or not _connected(mask):
        raise TopologyError("mask must contain a connected open set of at least two cells")
    ys, xs = np.nonzero(mask)
    if (np.ptp(ys) == 0) or (np.ptp(xs) == 0):
        # a single row or column of pixels has no interior at this resolution
        raise TopologyError("mask is one cell thick")

    def solve(msk, h):
        A, grid = mask_laplacian(msk, h)
        k = min(2, grid.size - 1)
        try:
            vals, vecs = spla.eigsh(A, k=k, sigma=0.0, which="LM",
                                    v0=np.ones(grid.size), tol=1e-12)
        except Exception as exc:  # ARPACK raises several types
            raise NumericError(f"mask eigensolve failed: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        v = vecs[:, 0]
        v = v * np.sign(v.sum())
        v = v / np.sqrt(np.sum(v**2) * h * h)
        return grid, vals, v

    base_grid, vals, vec = solve(mask, h0)
    centroid = base_grid.nodes.mean(axis=0)
    corners = np.abs(base_grid.nodes - centroid) + 0.5 * h0
    radius = float(np.sqrt((corners**2).sum(axis=1)).max())
    mu1 = float(vals[0])
    mu2 = float(vals[1]) if vals.size > 1 else np.inf
    shape = mask.shape
    table = np.zeros(shape)
    cells = np.argwhere(mask)
    table[tuple(cells.T)] = vec
    # ghost layer: odd reflection across the faces (J_1 = 0 on the boundary)
    padded = np.pad(table, 1)
    ghost = ndimage.binary_dilation(np.pad(mask, 1)) & ~np.pad(mask, 1)
    nb_sum = ndimage.convolve(np.pad(table, 1), np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]),
                              mode="constant")
    nb_cnt = ndimage.convolve(np.pad(mask, 1).astype(float), np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]),
                              mode="constant")
    padded[ghost] = -nb_sum[ghost] / np.maximum(nb_cnt[ghost], 1)
    # node (i, j) of the mask sits at centroid-shifted coordinates
    x0 = -centroid[0] - h0
    y0 = -centroid[1] - h0

    def j1(u):
        u = np.asarray(u, dtype=float)
        fi = (u[..., 0] - x0) / h0
        fj = (u[..., 1] - y0) / h0
        i0 = np.clip(np.floor(fi).astype(int), 0, padded.shape[0] - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, padded.shape[1] - 2)
        ti = np.clip(fi - i0, 0, 1)
        tj = np.clip(fj - j0, 0, 1)
        v = (padded[i0, j0] * (1 - ti) * (1 - tj) + padded[i0 + 1, j0] * ti * (1 - tj)
             + padded[i0, j0 + 1] * (1 - ti) * tj + padded[i0 + 1, j0 + 1] * ti * tj)
        inside = _inside_mask(u)
        return np.where(inside, v, 0.0)

    gi = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / (2 * h0)
    gj = (padded[1:-1, 2:] - padded[1:-1, :-2]) / (2 * h0)

    def grad(u):
        u = np.asarray(u, dtype=float)
        i = np.clip(np.round((u[..., 0] - x0) / h0).astype(int) - 1, 0, shape[0] - 1)
        j = np.clip(np.round((u[..., 1] - y0) / h0).astype(int) - 1, 0, shape[1] - 1)
        inside = _inside_mask(u)
        return np.where(inside[..., None], np.stack([gi[i, j], gj[i, j]], axis=-1), 0.0)

    def _inside_mask(u):
        i = np.floor((u[..., 0] - x0) / h0 - 0.5).astype(int)
        j = np.floor((u[..., 1] - y0) / h0 - 0.5).astype(int)
        ok = (i >= 0) & (i < shape[0]) & (j >= 0) & (j < shape[1])
        return ok & mask[np.clip(i, 0, shape[0] - 1), np.clip(j, 0, shape[1] - 1)]

    nodes = base_grid.nodes - centroid
    weights = np.full(nodes.shape[0], h0 * h0)

    def lattice(spacing=None):
        k = max(1, int(refine) if spacing is None else int(round(h0 / float(spacing))))
        fine = np.kron(mask, np.ones((k, k), dtype=bool))
        hf = h0 / k
        g = lattice_grid(fine, [0.0, 0.0], [hf, hf], [0.5 * hf, 0.5 * hf])
        offset = -centroid - 0.5 * h0 + 0.5 * hf
        return TransverseGrid(g.nodes + offset, g.steps, g.link_a, g.link_b, g.link_dir,
                              g.link_sign, g.link_delta, g.cell_area)

    return CrossSection("mask", 2, {"spacing": h0, "cells": int(mask.sum())}, radius, mu1, mu2,
                        j1, grad, nodes, weights, lattice)


def read_mask(path):
    """Read a 0/1 mask from PGM (P2 or P5) or CSV."""
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P2", b"P5"):
        return _read_pgm(path)
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    return np.array(rows) > 0.5


def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    tokens = []
    pos = 2
    # header: width height maxval, comments allowed
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    w, h, maxval = tokens
    if magic == b"P5":
        pos += 1
        dtype = np.uint8 if maxval < 256 else ">u2"
        img = np.frombuffer(data[pos:], dtype=dtype, count=w * h).reshape(h, w)
    else:
        img = np.array(data[pos:].split(), dtype=int)[: w * h].reshape(h, w)
    return img > maxval / 2


def square_mask(n):
    return np.ones((n, n), dtype=bool)


def l_mask(n):
    """Unit square minus one quadrant at n pixels per side (n even)."""
    m = np.ones((n, n), dtype=bool)
    m[n // 2:, n // 2:] = False
    return m
