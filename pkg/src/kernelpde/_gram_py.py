"""Pure-numpy pairing kernel (fallback when the compiled extension is absent).

Two routes:

* diagonal second-order parts: every contraction of the difference vector is
  expanded into matrix products, so the work is a handful of BLAS calls;
* full second-order parts: the difference tensor is built in row chunks and
  contracted with einsum.

Squared distances always come from explicit differences (``cdist``) so the
diagonal of a Gram matrix sees ``t == 0`` exactly.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from ._kernel_math import combine_pairs, psi_derivatives

CHUNK_ELEMENTS = 4_000_000


def scaled_sqdist(a, x, y):
    sa = np.sqrt(a)
    return cdist(x * sa, y * sa, "sqeuclidean")


def pair_matrix(metric, code, param, xa, ca, ga, ha, ha_full, xb, cb, gb, hb, hb_full, order, symmetric):
    a = np.asarray(metric, dtype=float)
    if ha_full or hb_full:
        out = _pair_dense(a, code, param, xa, ca, ga, _as_full(ha, ha_full), xb, cb, gb, _as_full(hb, hb_full), order)
    else:
        out = _pair_blas(a, code, param, xa, ca, ga, ha, xb, cb, gb, hb, order)
    if symmetric:
        upper = np.triu(out)
        out = upper + np.triu(out, 1).T
    return out


def _as_full(h, full):
    if h is None or full:
        return h
    n, d = h.shape
    out = np.zeros((n, d, d))
    idx = np.arange(d)
    out[:, idx, idx] = h
    return out


def _pair_blas(a, code, param, xa, ca, ga, ha, xb, cb, gb, hb, order):
    # center so the quadratic expansions lose as little as possible
    shift = 0.5 * (xa.mean(axis=0) + xb.mean(axis=0))
    xa = xa - shift
    xb = xb - shift
    t = scaled_sqdist(a, xa, xb)
    psi = psi_derivatives(code, param, t, order)
    q = {}
    if ga is not None:
        aga = a * ga
        q["ga"] = 2.0 * (np.sum(aga * xa, axis=1)[:, None] - aga @ xb.T)
    if gb is not None:
        agb = a * gb
        q["gb"] = 2.0 * (xa @ agb.T - np.sum(agb * xb, axis=1)[None, :])
    if ga is not None and gb is not None:
        q["gg"] = (a * ga) @ gb.T
    a2 = a * a
    if ha is not None:
        w = a2 * ha
        q["ha"] = 4.0 * (np.sum(w * xa * xa, axis=1)[:, None] - 2.0 * (w * xa) @ xb.T + w @ (xb * xb).T)
        q["Ta"] = ha @ a
        if gb is not None:
            q["hag"] = 2.0 * ((w * xa) @ gb.T - w @ (gb * xb).T)
    if hb is not None:
        w = a2 * hb
        q["hb"] = 4.0 * ((xa * xa) @ w.T - 2.0 * xa @ (w * xb).T + np.sum(w * xb * xb, axis=1)[None, :])
        q["Tb"] = hb @ a
        if ga is not None:
            q["hbg"] = 2.0 * ((a2 * ga * xa) @ hb.T - (a2 * ga) @ (hb * xb).T)
    if ha is not None and hb is not None:
        w = a2 * a * ha
        q["hh"] = 4.0 * ((w * xa * xa) @ hb.T - 2.0 * (w * xa) @ (hb * xb).T + w @ (hb * xb * xb).T)
        q["tt"] = (a2 * ha) @ hb.T
    return combine_pairs(psi, ca, cb, q)


def _pair_dense(a, code, param, xa, ca, ga, ha, xb, cb, gb, hb, order):
    na, d = xa.shape
    nb = xb.shape[0]
    out = np.empty((na, nb))
    rows = max(1, CHUNK_ELEMENTS // max(1, nb * d))
    ahb = None if hb is None else a[None, :, None] * hb * a[None, None, :]
    for lo in range(0, na, rows):
        hi = min(na, lo + rows)
        delta = xa[lo:hi, None, :] - xb[None, :, :]
        u = 2.0 * a * delta
        t = np.einsum("cmi,cmi->cm", delta * a, delta)
        psi = psi_derivatives(code, param, t, order)
        q = {}
        if ga is not None:
            q["ga"] = np.einsum("cmi,ci->cm", u, ga[lo:hi])
        if gb is not None:
            q["gb"] = np.einsum("cmi,mi->cm", u, gb)
        if ga is not None and gb is not None:
            q["gg"] = (a * ga[lo:hi]) @ gb.T
        if ha is not None:
            hu_a = np.einsum("cij,cmj->cmi", ha[lo:hi], u)
            q["ha"] = np.einsum("cmi,cmi->cm", u, hu_a)
            q["Ta"] = np.einsum("cii,i->c", ha[lo:hi], a)
            if gb is not None:
                q["hag"] = np.einsum("mi,cmi->cm", a * gb, hu_a)
        if hb is not None:
            hu_b = np.einsum("mij,cmj->cmi", hb, u)
            q["hb"] = np.einsum("cmi,cmi->cm", u, hu_b)
            q["Tb"] = np.einsum("mii,i->m", hb, a)
            if ga is not None:
                q["hbg"] = np.einsum("ci,cmi->cm", a * ga[lo:hi], hu_b)
        if ha is not None and hb is not None:
            q["hh"] = np.einsum("cmi,i,cmi->cm", hu_a, a, hu_b)
            q["tt"] = np.einsum("cij,mij->cm", ha[lo:hi], ahb)
        out[lo:hi] = combine_pairs(psi, ca[lo:hi], cb, q)
    return out
