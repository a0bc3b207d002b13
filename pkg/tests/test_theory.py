"""Verification-suite internals: runway enumeration against an
independent subset oracle, the direct/indirect decomposition, Jacobian
sensitivity bounds, common-mode blindspot/cascade lemmas, and the
report plumbing."""

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from runwaylab import fd, tensor as T
from runwaylab.model import (InputError, ModelConfig, forward, init_params)
from runwaylab.perturbation import (SOFTMAX_LIPSCHITZ,
                                    PerturbationDecomposition,
                                    blindspot_check, cascade_check,
                                    split_perturbation)
from runwaylab.rewiring import RewiringMode
from runwaylab.rng import Rng
from runwaylab.runways import RunwaySet, closed_form_count, enumerate_runway
from runwaylab.sensitivity import (SensitivityReport, direct_runway_split,
                                   sensitivity_bound_check,
                                   sensitivity_sweep)
from runwaylab.verify import (VerifyConfig, load_report_schema,
                              min_supported_weight, run_suite)

KINDS = ("standard", "rewired_dot", "rewired_bilinear")


def toy_config(kind="standard", seed=0, layers=None, vocab=17):
    return ModelConfig(d=1, vocab_size=vocab, max_seq_len=64,
                       attention_kind=kind, seed=seed,
                       n_layers_override=layers)


def subset_paths(s, d):
    """Oracle: one indirect path per nonempty subset of {s+1..d-1}."""
    mids = range(s + 1, d)
    out = set()
    for k in range(1, d - s):
        for combo in itertools.combinations(mids, k):
            out.add((s,) + combo + (d,))
    return out


def random_mixing(rng, n):
    raw = np.exp(rng.normal((n, n))) * np.tril(np.ones((n, n)))
    return raw / raw.sum(axis=1, keepdims=True)


def lemma_instance(seed, n=7, dm=8, dk=5, scale=0.05):
    rng = Rng(seed, "lemma")
    params = {"w_q": rng.normal((dm, dk)) * 0.4,
              "w_k": rng.normal((dm, dk)) * 0.4,
              "w_v": rng.normal((dm, dk)) * 0.4}
    h = rng.normal((n, dm))
    dec = split_perturbation(rng.normal((n, dm)) * scale)
    return params, h, dec, rng


# -------------------------------------------------------- runway enumeration

def test_adjacent_runway_is_empty():
    assert enumerate_runway(1, 2, 5).count == 0
    assert enumerate_runway(3, 3, 5).count == 0


def test_worked_runway_example():
    got = set(enumerate_runway(1, 4, 6).paths)
    assert got == {(1, 2, 4), (1, 3, 4), (1, 2, 3, 4)}


def test_gap_six_has_31_paths():
    rs = enumerate_runway(0, 6, 8)
    assert rs.count == 31 == closed_form_count(0, 6)


def test_runway_matches_subset_oracle():
    for n in range(1, 9):
        for s in range(n):
            for d in range(s, n):
                got = set(enumerate_runway(s, d, n).paths)
                assert got == subset_paths(s, d), (s, d, n)


@given(st.integers(2, 12), st.data())
@settings(max_examples=40, deadline=None)
def test_runway_count_formula(n, data):
    s = data.draw(st.integers(0, n - 1))
    d = data.draw(st.integers(s, n - 1))
    assert enumerate_runway(s, d, n).count == closed_form_count(s, d)


def test_runway_domain_errors():
    with pytest.raises(InputError):
        enumerate_runway(4, 2, 6)
    with pytest.raises(InputError):
        enumerate_runway(0, 6, 6)
    with pytest.raises(InputError):
        enumerate_runway(-1, 2, 6)


def test_runway_set_rejects_bad_paths():
    with pytest.raises(InputError):
        RunwaySet(s=0, d=3, paths=((0, 3),))        # direct edge
    with pytest.raises(InputError):
        RunwaySet(s=0, d=3, paths=((0, 2, 1, 3),))  # not increasing
    with pytest.raises(InputError):
        RunwaySet(s=0, d=3, paths=((0, 1, 3), (0, 1, 3)))


# --------------------------------------------------- direct / runway split

def test_split_r1_is_identity_plus_edge():
    rng = Rng(3, "split")
    a = random_mixing(rng, 5)
    for d in range(5):
        for s in range(5):
            self_t, gates = direct_runway_split([a], s, d, 1)
            assert self_t == (1.0 if s == d else 0.0)
            assert abs(gates.sum() - a[d, s]) < 1e-15


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_split_recombines_to_full_product(seed, r):
    n = 6
    rng = Rng(seed, "splitfuzz")
    mats = [random_mixing(rng, n) for _ in range(r)]
    full = np.eye(n)
    for t in range(r):
        full = (np.eye(n) + mats[t]) @ full
    for d in range(n):
        for s in range(n):
            self_t, gates = direct_runway_split(mats, s, d, r)
            assert abs(self_t + gates.sum() - full[d, s]) <= 1e-10


def test_split_self_term_grows_on_diagonal():
    rng = Rng(9, "diag")
    mats = [random_mixing(rng, 6) for _ in range(3)]
    for s in range(6):
        self_t, _ = direct_runway_split(mats, s, s, 3)
        assert self_t >= 1.0


def test_split_domain_errors():
    a = random_mixing(Rng(0, "err"), 4)
    with pytest.raises(InputError):
        direct_runway_split([a], 0, 1, 0)
    with pytest.raises(InputError):
        direct_runway_split([a], 0, 1, 2)
    with pytest.raises(InputError):
        direct_runway_split([a], 0, 9, 1)


# ------------------------------------------------------- sensitivity bound

def test_sensitivity_r0_base_cases():
    cfg = toy_config(layers=2)
    params = init_params(cfg)
    toks = Rng(0, "r0").integers(0, 17, (5,))
    same = sensitivity_bound_check(toks, params, cfg, 2, 2, 1, 0)
    assert same.measured_norm == 1.0 and same.bound == 1.0 and same.satisfied
    diff = sensitivity_bound_check(toks, params, cfg, 1, 3, 1, 0)
    assert diff.measured_norm == 0.0 and diff.satisfied


@pytest.mark.parametrize("kind", KINDS)
def test_sensitivity_bound_holds_on_toy(kind):
    cfg = toy_config(kind, seed=4, layers=3)
    params = init_params(cfg)
    toks = Rng(21, "sens-toy").integers(0, 17, (6,))
    for (s, d, r) in [(0, 3, 1), (1, 4, 2), (0, 5, 3), (2, 2, 2)]:
        rep = sensitivity_bound_check(toks, params, cfg, s, d, 0, r)
        assert rep.satisfied, rep
        assert rep.bound >= 0.0
        assert rep.full_norm is not None


def test_sensitivity_future_to_past_is_zero():
    cfg = toy_config(layers=2)
    params = init_params(cfg)
    toks = Rng(5, "caus").integers(0, 17, (6,))
    rep = sensitivity_bound_check(toks, params, cfg, 4, 1, 0, 2)
    assert rep.measured_norm == 0.0
    assert rep.bound_matrix_entry == 0.0
    assert rep.satisfied


def test_sweep_matches_single_pair_op():
    cfg = toy_config("rewired_dot", seed=7, layers=2)
    params = init_params(cfg)
    toks = Rng(13, "sweep").integers(0, 17, (5,))
    reports, mats = sensitivity_sweep(toks, params, cfg, 0, (1, 2))
    assert len(reports) == 2 * 25
    assert len(mats) == 2
    by_key = {(x.s, x.d, x.r): x for x in reports}
    for (s, d, r) in [(0, 4, 2), (3, 3, 1), (1, 2, 1)]:
        one = sensitivity_bound_check(toks, params, cfg, s, d, 0, r)
        two = by_key[(s, d, r)]
        assert abs(one.measured_norm - two.measured_norm) <= 1e-9
        assert abs(one.bound - two.bound) <= 1e-9


def test_sweep_mixing_matrices_match_forward_records():
    cfg = toy_config("rewired_bilinear", seed=2, layers=2)
    params = init_params(cfg)
    toks = Rng(3, "mats").integers(0, 17, (5,))
    _, mats = sensitivity_sweep(toks, params, cfg, 0, (1, 2))
    _, recs = forward(toks, params, cfg, record=True)
    for mat, rec in zip(mats, recs):
        np.testing.assert_array_equal(mat, rec.weights[0])


def test_full_gradient_jacobian_matches_fd():
    # the informational full-route Jacobian is a real derivative: check it
    # against central differences through the whole block stack
    from runwaylab.model import embed_tokens
    from runwaylab.sensitivity import _token_jacobian

    cfg = toy_config("rewired_dot", seed=6, layers=1)
    params = init_params(cfg)
    toks = Rng(17, "fdjac").integers(0, 17, (4,))
    h0 = embed_tokens(toks, params, cfg).data
    s, d = 1, 3
    tape = _token_jacobian(h0, s, d, range(0, 1), params, cfg, False)

    from runwaylab.model import forward_hidden

    def f(vec):
        h = h0.copy()
        h[s] = vec
        hs, _ = forward_hidden(T.tensor(h), params, cfg)
        return hs[-1].data[d]

    jac_fd = fd.fd_jacobian(f, h0[s].copy())
    assert fd.grads_close(tape, jac_fd)


def test_sensitivity_domain_errors():
    cfg = toy_config(layers=2)
    params = init_params(cfg)
    toks = Rng(0, "err").integers(0, 17, (5,))
    with pytest.raises(InputError):
        sensitivity_bound_check(toks, params, cfg, 0, 1, 0, -1)
    with pytest.raises(InputError):
        sensitivity_bound_check(toks, params, cfg, 0, 1, 1, 2)
    with pytest.raises(InputError):
        sensitivity_bound_check(toks, params, cfg, 0, 9, 0, 1)
    wide = ModelConfig(d=2, vocab_size=17, attention_kind="standard")
    with pytest.raises(InputError):
        sensitivity_bound_check(toks, init_params(wide), wide, 0, 1, 0, 1)
    with pytest.raises(InputError):
        sensitivity_sweep(toks, params, cfg, 0, ())


# ------------------------------------------------- perturbation decomposition

def test_split_perturbation_reconstructs():
    delta = Rng(1, "dec").normal((6, 8))
    dec = split_perturbation(delta)
    # re-adding the mean costs at most the final addition's rounding
    np.testing.assert_allclose(dec.reconstruct(), delta, rtol=1e-14, atol=0)
    assert np.abs(dec.delta_r.mean(axis=0)).max() < 1e-12


def test_split_perturbation_rejects_vectors():
    with pytest.raises(InputError):
        split_perturbation(np.ones(5))


def test_blindspot_ignores_common_mode():
    for seed in range(12):
        params, h, _, rng = lemma_instance(seed)
        gap, _ = blindspot_check(h, rng.normal((8,)), np.zeros_like(h),
                                 rng.normal((8,)), params)
        assert gap <= 1e-10


def test_blindspot_gap_below_bound():
    for seed in range(25):
        params, h, dec, rng = lemma_instance(seed)
        gap, bound = blindspot_check(h, dec.delta_c, dec.delta_r,
                                     rng.normal((8,)), params)
        assert 0.0 <= gap <= bound


def test_blindspot_bound_formula_frozen():
    params, h, dec, rng = lemma_instance(42)
    hq = rng.normal((8,))
    _, bound = blindspot_check(h, dec.delta_c, dec.delta_r, hq, params)
    q = hq @ params["w_q"]
    p = (np.linalg.norm(q) * np.linalg.svd(params["w_k"],
                                           compute_uv=False)[0]
         / np.sqrt(params["w_k"].shape[1]))
    expect = SOFTMAX_LIPSCHITZ * p * np.linalg.norm(dec.delta_r)
    assert abs(bound - expect) < 1e-12


def test_blindspot_gap_against_manual_softmax():
    # 3 tokens, tiny dims: recompute both rows by hand
    params = {"w_q": np.eye(2), "w_k": np.eye(2)}
    h = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    hq = np.array([0.5, -0.5])
    dr = np.array([[0.1, 0.0], [0.0, 0.0], [0.0, -0.1]])
    gap, _ = blindspot_check(h, np.zeros(2), dr, hq, params)

    def srow(keys):
        z = keys @ hq / np.sqrt(2)
        e = np.exp(z - z.max())
        return e / e.sum()

    expect = np.linalg.norm(srow(h + dr) - srow(h))
    assert abs(gap - expect) < 1e-14


def test_blindspot_slope_stabilizes():
    params, h, dec, rng = lemma_instance(7, scale=1.0)
    hq = rng.normal((8,))
    ratios = []
    for t in (1e-3, 1e-4):
        gap, bound = blindspot_check(h, dec.delta_c, t * dec.delta_r,
                                     hq, params)
        assert gap <= bound
        ratios.append(gap / t)
    assert abs(ratios[0] - ratios[1]) <= 0.02 * max(ratios)


def test_cascade_zero_common_mode_is_exact():
    params, h, dec, _ = lemma_instance(3)
    assert cascade_check(h, np.zeros(8), dec.delta_r, params) == 0.0


def test_cascade_message_shifts_by_value_projection():
    for seed in range(20):
        params, h, _, rng = lemma_instance(seed)
        dc = rng.normal((8,))
        res = cascade_check(h, dc, np.zeros_like(h), params)
        assert res <= 1e-10


def test_cascade_standard_residual_tiny():
    for seed in range(20):
        params, h, dec, _ = lemma_instance(seed)
        assert cascade_check(h, dec.delta_c, dec.delta_r, params) <= 1e-9


def test_cascade_rewired_reported_not_asserted():
    params, h, dec, rng = lemma_instance(11)
    dc = rng.normal((8,)) * 0.5
    res_dot = cascade_check(h, dc, dec.delta_r, params,
                            mode=RewiringMode("dot"))
    b = np.eye(5) + 0.02 * rng.normal((5, 5))
    res_bil = cascade_check(h, dc, dec.delta_r, params,
                            mode=RewiringMode("bilinear",
                                              bilinear=T.tensor(b)))
    # the gate coefficients see the shifted values, so the identity is
    # only approximate: finite, nonnegative, and typically nonzero
    for res in (res_dot, res_bil):
        assert np.isfinite(res) and res >= 0.0
    assert res_dot > 1e-9


def test_cascade_shape_errors():
    params, h, dec, _ = lemma_instance(0)
    with pytest.raises(InputError):
        cascade_check(h, dec.delta_c, dec.delta_r[:-1], params)
    with pytest.raises(InputError):
        blindspot_check(h, dec.delta_c, dec.delta_r[:, :-1],
                        np.zeros(8), params)


# ------------------------------------------------------------- suite runner

def small_suite_config():
    return VerifyConfig(seed=5, n_seeds=2, runway_n=5, spans=(1, 2),
                        n_weight_trials=9)


def test_suite_passes_and_validates():
    jsonschema = pytest.importorskip("jsonschema")
    rep = run_suite(small_suite_config())
    assert rep["all_passed"]
    jsonschema.validate(rep, load_report_schema())
    names = [c["name"] for c in rep["checks"]]
    assert len(names) == len(set(names))
    for c in rep["checks"]:
        assert len(c["inputs_hash"]) == 16
        int(c["inputs_hash"], 16)


def test_suite_is_deterministic():
    a = json.dumps(run_suite(small_suite_config()), sort_keys=True)
    b = json.dumps(run_suite(small_suite_config()), sort_keys=True)
    assert a == b


def test_rewired_cascade_recorded_as_unasserted():
    rep = run_suite(small_suite_config())
    by_name = {c["name"]: c for c in rep["checks"]}
    for kind in ("rewired_dot", "rewired_bilinear"):
        c = by_name[f"cascade_{kind}"]
        assert not c["asserted"] and c["bound"] is None
    assert by_name["cascade_standard"]["asserted"]


def test_min_supported_weight_positive_on_random_models():
    lo = np.inf
    for i, kind in enumerate(KINDS * 3):
        cfg = toy_config(kind, seed=100 + i)
        params = init_params(cfg)
        toks = Rng(i, "wmin").integers(0, 17, (8,))
        _, recs = forward(toks, params, cfg, record=True)
        lo = min(lo, min_supported_weight(recs))
    assert lo > 0.0
