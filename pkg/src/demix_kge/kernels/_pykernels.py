"""NumPy implementation of the scoring/gradient kernels.

This is the always-available backend; the compiled extension mirrors these
semantics exactly. All functions take pre-allocated output arrays so the
two backends share one calling convention.

Layouts: entity rows are length-d float64 vectors. Complex-valued kinds
(RotatE, ComplEx) interleave coordinates as (re0, im0, re1, im1, ...).
RotatE relations hold d/2 phase angles; all other relation rows match the
entity width.
"""

import numpy as np

TRANSE = 0
ROTATE = 1
DISTMULT = 2
COMPLEX = 3


def _as_complex_pairs(mat):
    # (n, d) -> re, im views of shape (n, d//2)
    resh = mat.reshape(mat.shape[0], -1, 2)
    return resh[:, :, 0], resh[:, :, 1]


def _norm_and_grad(u, norm_p):
    """Return (||u|| rowwise, d||u||/du)."""
    if norm_p == 1:
        return np.abs(u).sum(axis=1), np.sign(u)
    nrm = np.sqrt((u * u).sum(axis=1))
    safe = np.where(nrm > 0.0, nrm, 1.0)
    return nrm, u / safe[:, None]


def _rotate_diff(H, R, T):
    h_re, h_im = _as_complex_pairs(H)
    t_re, t_im = _as_complex_pairs(T)
    cos, sin = np.cos(R), np.sin(R)
    rot_re = h_re * cos - h_im * sin
    rot_im = h_re * sin + h_im * cos
    u = np.empty_like(H)
    u[:, 0::2] = rot_re - t_re
    u[:, 1::2] = rot_im - t_im
    return u, rot_re, rot_im, cos, sin


def _complex_parts(H, R, T):
    h_re, h_im = _as_complex_pairs(H)
    r_re, r_im = _as_complex_pairs(R)
    t_re, t_im = _as_complex_pairs(T)
    return h_re, h_im, r_re, r_im, t_re, t_im


def _score_mats(kind, norm_p, gamma, H, R, T):
    if kind == TRANSE:
        nrm, _ = _norm_and_grad(H + R - T, norm_p)
        return gamma - nrm
    if kind == ROTATE:
        u, _, _, _, _ = _rotate_diff(H, R, T)
        nrm, _ = _norm_and_grad(u, norm_p)
        return gamma - nrm
    if kind == DISTMULT:
        return (H * R * T).sum(axis=1)
    if kind == COMPLEX:
        h_re, h_im, r_re, r_im, t_re, t_im = _complex_parts(H, R, T)
        return (
            (h_re * r_re - h_im * r_im) * t_re + (h_re * r_im + h_im * r_re) * t_im
        ).sum(axis=1)
    raise ValueError(f"unknown kind code {kind}")


def _grad_mats(kind, norm_p, gamma, H, R, T, upstream):
    """Per-row gradients of upstream * f with respect to H, R, T rows."""
    up = upstream[:, None]
    if kind == TRANSE:
        _, dn = _norm_and_grad(H + R - T, norm_p)
        g = -dn * up
        return g, g.copy(), -g
    if kind == ROTATE:
        u, rot_re, rot_im, cos, sin = _rotate_diff(H, R, T)
        _, dn = _norm_and_grad(u, norm_p)
        g = -dn * up  # d(upstream * f)/du
        g_re, g_im = g[:, 0::2], g[:, 1::2]
        gh = np.empty_like(H)
        gh[:, 0::2] = g_re * cos + g_im * sin
        gh[:, 1::2] = -g_re * sin + g_im * cos
        gr = -g_re * rot_im + g_im * rot_re
        return gh, gr, -g
    if kind == DISTMULT:
        return R * T * up, H * T * up, H * R * up
    if kind == COMPLEX:
        h_re, h_im, r_re, r_im, t_re, t_im = _complex_parts(H, R, T)
        gh = np.empty_like(H)
        gr = np.empty_like(R)
        gt = np.empty_like(T)
        gh[:, 0::2] = r_re * t_re + r_im * t_im
        gh[:, 1::2] = -r_im * t_re + r_re * t_im
        gr[:, 0::2] = h_re * t_re + h_im * t_im
        gr[:, 1::2] = -h_im * t_re + h_re * t_im
        gt[:, 0::2] = h_re * r_re - h_im * r_im
        gt[:, 1::2] = h_re * r_im + h_im * r_re
        return gh * up, gr * up, gt * up
    raise ValueError(f"unknown kind code {kind}")


def score_into(kind, norm_p, gamma, ent, rel, h, r, t, out):
    out[:] = _score_mats(kind, norm_p, gamma, ent[h], rel[r], ent[t])


def score_swap_into(kind, norm_p, gamma, ent, rel, anchor, r, vecs, side, out):
    """Score triples whose corrupted slot holds explicit vectors.

    side 0: vecs replace heads, anchors are tail ids.
    side 1: vecs replace tails, anchors are head ids.
    """
    if side == 0:
        out[:] = _score_mats(kind, norm_p, gamma, vecs, rel[r], ent[anchor])
    else:
        out[:] = _score_mats(kind, norm_p, gamma, ent[anchor], rel[r], vecs)


def grad_into(kind, norm_p, gamma, ent, rel, h, r, t, upstream, gh, gr, gt):
    a, b, c = _grad_mats(kind, norm_p, gamma, ent[h], rel[r], ent[t], upstream)
    gh[:] = a
    gr[:] = b
    gt[:] = c


def grad_swap_into(
    kind, norm_p, gamma, ent, rel, anchor, r, vecs, side, upstream, g_anchor, g_r, g_vec
):
    if side == 0:
        a, b, c = _grad_mats(kind, norm_p, gamma, vecs, rel[r], ent[anchor], upstream)
        g_vec[:] = a
        g_anchor[:] = c
    else:
        a, b, c = _grad_mats(kind, norm_p, gamma, ent[anchor], rel[r], vecs, upstream)
        g_anchor[:] = a
        g_vec[:] = c
    g_r[:] = b


def score_all_into(kind, norm_p, gamma, ent, rel, anchor_id, r_id, side, out):
    """Score every entity as the candidate in the corrupted slot."""
    n = ent.shape[0]
    R = np.broadcast_to(rel[r_id], (n, rel.shape[1]))
    A = np.broadcast_to(ent[anchor_id], (n, ent.shape[1]))
    if side == 0:
        out[:] = _score_mats(kind, norm_p, gamma, ent, R, A)
    else:
        out[:] = _score_mats(kind, norm_p, gamma, A, R, ent)
