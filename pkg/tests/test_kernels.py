"""Backend parity and reference-arithmetic checks for the score kernels.

The compiled backend must agree with the NumPy fallback to near machine
precision, and both must agree with straightforward complex-number
reference implementations of the rotation and bilinear forms.
"""

import numpy as np
import pytest

from demix_kge.kernels import (
    BACKEND,
    COMPLEX,
    DISTMULT,
    ROTATE,
    TRANSE,
    get_backend,
    score_all_into,
    score_into,
)

KIND_CODES = {"TransE": TRANSE, "RotatE": ROTATE, "DistMult": DISTMULT, "ComplEx": COMPLEX}
NORM_FOR = {"TransE": 1, "RotatE": 2, "DistMult": 2, "ComplEx": 2}


def random_problem(kind, rng, n=32, num_entities=20, num_relations=5, dim=8):
    """Random tables and triple ids for one kind; RotatE relations are phases."""
    d_r = dim // 2 if kind == "RotatE" else dim
    ent = rng.normal(size=(num_entities, dim))
    if kind == "RotatE":
        rel = rng.uniform(-np.pi, np.pi, size=(num_relations, d_r))
    else:
        rel = rng.normal(size=(num_relations, d_r))
    h = rng.integers(num_entities, size=n)
    r = rng.integers(num_relations, size=n)
    t = rng.integers(num_entities, size=n)
    return ent, rel, h.astype(np.int64), r.astype(np.int64), t.astype(np.int64)


def reference_score(kind, norm_p, gamma, H, R, T):
    """Direct per-definition scores using numpy complex arithmetic."""
    if kind == "TransE":
        diff = H + R - T
        nrm = np.abs(diff).sum(1) if norm_p == 1 else np.sqrt((diff * diff).sum(1))
        return gamma - nrm
    if kind == "RotatE":
        hc = H[:, 0::2] + 1j * H[:, 1::2]
        tc = T[:, 0::2] + 1j * T[:, 1::2]
        rot = np.exp(1j * R)
        diff = hc * rot - tc
        if norm_p == 1:
            # L1 is taken over the interleaved real components, matching the
            # TransE convention on the same real-vector layout.
            nrm = np.abs(diff.real).sum(1) + np.abs(diff.imag).sum(1)
        else:
            mags = np.abs(diff)
            nrm = np.sqrt((mags * mags).sum(1))
        return gamma - nrm
    if kind == "DistMult":
        return (H * R * T).sum(1)
    if kind == "ComplEx":
        hc = H[:, 0::2] + 1j * H[:, 1::2]
        rc = R[:, 0::2] + 1j * R[:, 1::2]
        tc = T[:, 0::2] + 1j * T[:, 1::2]
        return np.real(hc * rc * np.conj(tc)).sum(1)
    raise AssertionError(kind)


class TestReferenceAgreement:
    """Active backend vs direct complex/bilinear arithmetic."""

    @pytest.mark.parametrize("kind", list(KIND_CODES))
    def test_score_matches_reference(self, kind, rng):
        ent, rel, h, r, t = random_problem(kind, rng)
        gamma, norm_p = 7.5, NORM_FOR[kind]
        out = np.empty(len(h))
        score_into(KIND_CODES[kind], norm_p, gamma, ent, rel, h, r, t, out)
        expected = reference_score(kind, norm_p, gamma, ent[h], rel[r], ent[t])
        np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", ["TransE", "RotatE"])
    def test_both_norms(self, kind, rng):
        ent, rel, h, r, t = random_problem(kind, rng)
        for norm_p in (1, 2):
            out = np.empty(len(h))
            score_into(KIND_CODES[kind], norm_p, 3.0, ent, rel, h, r, t, out)
            expected = reference_score(kind, norm_p, 3.0, ent[h], rel[r], ent[t])
            np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    def test_rotate_phase_additivity(self, rng):
        """Rotating by theta1 then theta2 equals one rotation by their sum."""
        ent = rng.normal(size=(4, 6))
        th1 = rng.uniform(-1, 1, size=(1, 3))
        th2 = rng.uniform(-1, 1, size=(1, 3))
        h = np.array([0], dtype=np.int64)
        r0 = np.array([0], dtype=np.int64)
        t = np.array([1], dtype=np.int64)

        hc = ent[0, 0::2] + 1j * ent[0, 1::2]
        once = hc * np.exp(1j * th1[0])
        staged = np.empty((1, 6))
        staged[0, 0::2], staged[0, 1::2] = once.real, once.imag

        out_staged = np.empty(1)
        ent_staged = np.vstack([staged, ent[1:]])
        score_into(ROTATE, 2, 5.0, ent_staged, th2, h, r0, t, out_staged)

        out_combined = np.empty(1)
        score_into(ROTATE, 2, 5.0, ent, th1 + th2, h, r0, t, out_combined)
        np.testing.assert_allclose(out_staged, out_combined, rtol=1e-12)

    def test_distmult_symmetry(self, rng):
        ent, rel, h, r, t = random_problem("DistMult", rng)
        fwd, rev = np.empty(len(h)), np.empty(len(h))
        score_into(DISTMULT, 2, 0.0, ent, rel, h, r, t, fwd)
        score_into(DISTMULT, 2, 0.0, ent, rel, t, r, h, rev)
        np.testing.assert_allclose(fwd, rev, rtol=1e-13)

    def test_transe_translation_covariance(self, rng):
        """Adding one constant vector to h and t leaves the score unchanged."""
        ent, rel, h, r, t = random_problem("TransE", rng)
        c = rng.normal(size=ent.shape[1])
        base, shifted = np.empty(len(h)), np.empty(len(h))
        score_into(TRANSE, 1, 9.0, ent, rel, h, r, t, base)
        score_into(TRANSE, 1, 9.0, ent + c, rel, h, r, t, shifted)
        np.testing.assert_allclose(base, shifted, rtol=1e-12, atol=1e-12)


class TestScoreAllConsistency:
    @pytest.mark.parametrize("kind", list(KIND_CODES))
    @pytest.mark.parametrize("side", [0, 1])
    def test_columns_match_pointwise_scores(self, kind, side, rng):
        """score_all over every entity equals per-candidate score_into calls."""
        ent, rel, _, _, _ = random_problem(kind, rng)
        code, norm_p = KIND_CODES[kind], NORM_FOR[kind]
        anchor, r_id = 3, 1
        n = ent.shape[0]
        out = np.empty(n)
        score_all_into(code, norm_p, 4.0, ent, rel, anchor, r_id, side, out)

        cands = np.arange(n, dtype=np.int64)
        anchors = np.full(n, anchor, dtype=np.int64)
        rs = np.full(n, r_id, dtype=np.int64)
        expected = np.empty(n)
        if side == 0:
            score_into(code, norm_p, 4.0, ent, rel, cands, rs, anchors, expected)
        else:
            score_into(code, norm_p, 4.0, ent, rel, anchors, rs, cands, expected)
        np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(BACKEND != "c", reason="compiled backend not available")
class TestBackendParity:
    """Compiled and NumPy backends agree to near machine precision."""

    @pytest.mark.parametrize("kind", list(KIND_CODES))
    @pytest.mark.parametrize("norm_p", [1, 2])
    def test_score_parity(self, kind, norm_p, rng):
        ent, rel, h, r, t = random_problem(kind, rng, n=64)
        code = KIND_CODES[kind]
        py, cc = get_backend("py"), get_backend("c")
        a, b = np.empty(len(h)), np.empty(len(h))
        py.score_into(code, norm_p, 6.0, ent, rel, h, r, t, a)
        cc.score_into(code, norm_p, 6.0, ent, rel, h, r, t, b)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", list(KIND_CODES))
    @pytest.mark.parametrize("norm_p", [1, 2])
    def test_grad_parity(self, kind, norm_p, rng):
        ent, rel, h, r, t = random_problem(kind, rng, n=48)
        code = KIND_CODES[kind]
        d, d_r = ent.shape[1], rel.shape[1]
        up = rng.normal(size=len(h))
        outs = {}
        for name in ("py", "c"):
            impl = get_backend(name)
            gh = np.empty((len(h), d))
            gr = np.empty((len(h), d_r))
            gt = np.empty((len(h), d))
            impl.grad_into(code, norm_p, 6.0, ent, rel, h, r, t, up, gh, gr, gt)
            outs[name] = (gh, gr, gt)
        for a, b in zip(outs["py"], outs["c"]):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", list(KIND_CODES))
    @pytest.mark.parametrize("side", [0, 1])
    def test_swap_parity(self, kind, side, rng):
        ent, rel, h, r, _ = random_problem(kind, rng, n=24)
        code, norm_p = KIND_CODES[kind], NORM_FOR[kind]
        d, d_r = ent.shape[1], rel.shape[1]
        vecs = rng.normal(size=(len(h), d))
        up = rng.normal(size=len(h))
        outs = {}
        for name in ("py", "c"):
            impl = get_backend(name)
            s = np.empty(len(h))
            ga = np.empty((len(h), d))
            gr = np.empty((len(h), d_r))
            gv = np.empty((len(h), d))
            impl.score_swap_into(code, norm_p, 2.0, ent, rel, h, r, vecs, side, s)
            impl.grad_swap_into(
                code, norm_p, 2.0, ent, rel, h, r, vecs, side, up, ga, gr, gv
            )
            outs[name] = (s, ga, gr, gv)
        for a, b in zip(outs["py"], outs["c"]):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", list(KIND_CODES))
    def test_score_all_parity(self, kind, rng):
        ent, rel, _, _, _ = random_problem(kind, rng)
        code, norm_p = KIND_CODES[kind], NORM_FOR[kind]
        a, b = np.empty(ent.shape[0]), np.empty(ent.shape[0])
        get_backend("py").score_all_into(code, norm_p, 1.0, ent, rel, 0, 0, 1, a)
        get_backend("c").score_all_into(code, norm_p, 1.0, ent, rel, 0, 0, 1, b)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


class TestSwapEqualsPlain:
    @pytest.mark.parametrize("kind", list(KIND_CODES))
    @pytest.mark.parametrize("side", [0, 1])
    def test_table_rows_as_vectors(self, kind, side, rng):
        """Swap scoring with vectors taken from the table reproduces score_into."""
        from demix_kge.kernels import score_swap_into

        ent, rel, h, r, t = random_problem(kind, rng, n=16)
        code, norm_p = KIND_CODES[kind], NORM_FOR[kind]
        plain = np.empty(len(h))
        score_into(code, norm_p, 5.0, ent, rel, h, r, t, plain)
        swapped = np.empty(len(h))
        if side == 0:
            score_swap_into(code, norm_p, 5.0, ent, rel, t, r, ent[h], side, swapped)
        else:
            score_swap_into(code, norm_p, 5.0, ent, rel, h, r, ent[t], side, swapped)
        np.testing.assert_allclose(plain, swapped, rtol=1e-14, atol=1e-14)
