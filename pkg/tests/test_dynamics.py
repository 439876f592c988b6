import math

import numpy as np
import pytest

from pottsmeta.dynamics import (
    ChainState,
    escape_experiment,
    escape_trace,
    glauber_moves,
    glauber_step,
    independent_chains,
    planted_start,
    run_chain,
    sw_step,
)
from pottsmeta.gibbs_exact import ExactContext, glauber_kernel, state_index, sw_kernel
from pottsmeta.meanfield import PottsParams
from pottsmeta.phases import PhaseSpec, phase_membership
from pottsmeta.rgraph import MultiGraph, components, sample_regular

from conftest import LN2, chi2_pvalue


def test_glauber_beta_zero_uniform():
    g = MultiGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    v, c = glauber_moves(g, [0, 1, 1, 1], PottsParams(3, 3, 0.0), 60_000, 3)
    counts = np.bincount(c[v == 0], minlength=3)
    assert chi2_pvalue(counts, np.full(3, 1 / 3)) > 1e-3


def test_glauber_conditional_law():
    g = MultiGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    v, c = glauber_moves(g, [2, 0, 0, 1], PottsParams(3, 3, LN2), 400_000, 4)
    counts = np.bincount(c[v == 0], minlength=3)
    assert chi2_pvalue(counts, [4 / 7, 2 / 7, 1 / 7]) > 1e-3


def test_glauber_moves_match_kernel_rows(five_graph):
    p = PottsParams(3, 3, 1.0)
    ctx = ExactContext(five_graph, p)
    P = glauber_kernel(ctx).toarray()
    sigma = np.array([0, 0, 1, 2, 2])
    i = state_index(sigma, 3)
    v, c = glauber_moves(five_graph, sigma, p, 1_000_000, 9)
    targets = i + (c - sigma[v]) * ctx.radix[v]
    counts = np.bincount(targets, minlength=ctx.size)
    row = P[i]
    support = row > 0
    assert counts[~support].sum() == 0
    exp = row[support] * 1_000_000
    sd = np.sqrt(exp * (1 - row[support]))
    assert np.all(np.abs(counts[support] - exp) <= 3 * sd + 1)


def test_glauber_step_updates_state(five_graph):
    p = PottsParams(3, 3, 0.9)
    state = ChainState.from_config(five_graph, [0, 1, 2, 0, 1], 3)
    rng = np.random.default_rng(0)
    for _ in range(300):
        new = glauber_step(five_graph, state, p, rng)
        assert np.count_nonzero(new.sigma != state.sigma) <= 1
        assert np.abs(new.counts - state.counts).sum() in (0, 2)
        assert new.check(five_graph) and new.step == state.step + 1
        state = new


def test_sw_extremes():
    g = sample_regular(30, 3, seed=2)
    rng = np.random.default_rng(1)
    state = ChainState.from_config(g, np.zeros(30, dtype=int), 3)
    new = sw_step(g, state, PottsParams(3, 3, 0.0), rng)
    assert new.check(g)
    # at beta = 0 every vertex is its own component; colours are i.i.d. uniform
    finals = np.array([sw_step(g, state, PottsParams(3, 3, 0.0), rng).sigma for _ in range(3000)])
    assert chi2_pvalue(np.bincount(finals.ravel(), minlength=3), np.full(3, 1 / 3)) > 1e-3
    conn = MultiGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3)])
    st = ChainState.from_config(conn, [1, 1, 1, 1], 3)
    colours = []
    for _ in range(3000):
        new = sw_step(conn, st, PottsParams(3, 3, 40.0), rng)
        assert len(set(new.sigma)) == 1
        colours.append(new.sigma[0])
    assert chi2_pvalue(np.bincount(colours, minlength=3), np.full(3, 1 / 3)) > 1e-3


def test_sw_retained_edge_count():
    g = sample_regular(200, 3, seed=6)
    rng = np.random.default_rng(3)
    sigma = rng.integers(0, 3, 200)
    beta = 0.8
    e = g.edges
    mono = sigma[e[:, 0]] == sigma[e[:, 1]]
    keep = -math.expm1(-beta)
    kept = np.array([np.count_nonzero(mono & (rng.random(g.m) < keep)) for _ in range(10_000)])
    h = mono.sum()
    assert abs(kept.mean() - keep * h) < 3 * math.sqrt(h * keep * (1 - keep) / 10_000)


def test_sw_step_matches_exact_kernel(five_graph):
    p = PottsParams(3, 3, 1.0)
    ctx = ExactContext(five_graph, p)
    row = sw_kernel(ctx)[state_index([0, 0, 1, 2, 2], 3)]
    starts = np.tile([0, 0, 1, 2, 2], (400_000, 1))
    finals = independent_chains(five_graph, p, "sw", starts, 1, 8)
    assert chi2_pvalue(np.bincount(finals, minlength=ctx.size), row) > 1e-3


def test_sw_converges_from_fixed_start(five_graph):
    p = PottsParams(3, 3, 1.0)
    ctx = ExactContext(five_graph, p)
    P = sw_kernel(ctx)
    x = np.zeros(ctx.size)
    x[0] = 1
    assert 0.5 * np.abs(x @ np.linalg.matrix_power(P, 60) - ctx.probs).sum() < 1e-9
    finals = independent_chains(five_graph, p, "sw", np.zeros((200_000, 5)), 60, 3)
    assert chi2_pvalue(np.bincount(finals, minlength=ctx.size), ctx.probs) > 1e-3


def test_phase_membership():
    p = PottsParams(3, 3, 1.38)
    assert phase_membership([100, 100, 100], PhaseSpec("para", 0.01), 300, p) == (True, None)
    nu = PhaseSpec("ferro", 0.1).reference(p)[0]
    counts = np.round(1000 * nu[[1, 0, 2]]).astype(int)
    counts[0] += 1000 - counts.sum()
    ok, k = phase_membership(counts, PhaseSpec("ferro", 0.02, include_permutations=True), 1000, p)
    assert ok and k == 1
    assert not phase_membership(counts, PhaseSpec("ferro", 0.02), 1000, p)[0]
    # deviation of exactly eps*n is outside (q = 4 keeps the arithmetic exact)
    p4 = PottsParams(4, 3, 1.0)
    assert not phase_membership([150, 100, 75, 75], PhaseSpec("para", 0.25), 400, p4)[0]
    assert phase_membership([149, 100, 76, 75], PhaseSpec("para", 0.25), 400, p4)[0]


def test_trace_consistency():
    p = PottsParams(3, 3, 1.2)
    rng = np.random.default_rng(4)
    g, sigma = planted_start(300, p, PhaseSpec("para", 0.02), rng)
    state = ChainState.from_config(g, sigma, 3)
    monitor = PhaseSpec("para", 0.3)
    final, tr = run_chain(g, state, p, "glauber", 300 * 50, monitor, rng, stop_on_escape=False)
    assert final.check(g)
    for counts, member in zip(tr.counts, tr.member):
        assert member == phase_membership(counts, monitor, 300, p)[0]
    if tr.escape_step is not None:
        assert tr.member[list(tr.steps).index(tr.escape_step)] == False  # noqa: E712
        assert all(tr.member[tr.steps < tr.escape_step])
    csv = tr.to_csv()
    assert csv.splitlines()[0] == "step,count_1,count_2,count_3,hamiltonian,member,escape"
    assert "\r" not in csv


def test_escape_monotone_in_monitor():
    p = PottsParams(3, 3, 1.0)
    start = PhaseSpec("para", 0.01)
    steps = []
    for eps in (0.03, 0.06, 0.1):
        tr = escape_trace(None, 200, p, start, PhaseSpec("para", eps), "glauber", 200, 5, 0)
        steps.append(math.inf if tr.escape_step is None else tr.escape_step)
    assert steps == sorted(steps)


def test_escape_experiment_report_and_determinism():
    p = PottsParams(3, 3, 0.3)
    start = PhaseSpec("ferro", 0.02, ref_beta=1.38)
    monitor = PhaseSpec("ferro", 0.05, include_permutations=True, ref_beta=1.38)
    a = escape_experiment(p, start, monitor, "glauber", 100, 4, 99, n=300)
    b = escape_experiment(p, start, monitor, "glauber", 100, 4, 99, n=300, workers=2)
    assert a.to_json() == b.to_json()
    assert a.escaped == len(a.escape_steps) == 4
    with pytest.raises(ValueError):
        escape_experiment(p, start, PhaseSpec("ferro", 0.02), "glauber", 1, 1, 0, n=300)


def test_escape_on_fixed_graph():
    g = sample_regular(100, 3, seed=1)
    p = PottsParams(3, 3, 0.5)
    rep = escape_experiment(p, PhaseSpec("para", 0.05), PhaseSpec("para", 0.9), "sw", 20, 2, 1, graph=g)
    assert rep.trials == 2 and rep.n == 100
