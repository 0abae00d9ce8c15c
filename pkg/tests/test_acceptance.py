"""Acceptance criteria, one test (and one PASS/FAIL line) per criterion.

Heat conduction runs at desk scale: 32 x 32 mesh, RT_0 x CG_1, N_POD = 128,
r = 32, references on the 2x refined mesh.  Run with ``pytest -s`` to see
the lines inline; they are also repeated in the terminal summary.
"""

import json
import time

import numpy as np
import pytest

from fosls_rbno import cli, fosls, rbno, rom
from fosls_rbno.fields import sample_minisquares, stiffness_pow

HEAT_MEAN_LOSS_64 = 4.86e-03  # mean FE loss, heat conduction, 64 x 64, RT_0 x CG_1
C_LO, C_HI = fosls.lemma_constants(0.1, 10.0)

# disjoint seed blocks
POD_SEEDS = range(0, 128)
TRAIN_SEEDS = range(10_000, 11_024)
VAL_SEEDS = range(20_000, 20_064)
TEST_SEEDS = range(30_000, 30_128)
REF_SEEDS = range(40_000, 40_100)


def slope(h, v):
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])


# -- shared heat-conduction state ------------------------------------------------


@pytest.fixture(scope="module")
def heat():
    d = fosls.Discretization.build(fosls.heat_conduction(), 32, 32, 0)
    return d, fosls.refine(d)


@pytest.fixture(scope="module")
def heat_rb(heat):
    d, _ = heat
    X = d.gram()
    S = rom.compute_snapshots(d, [sample_minisquares(s) for s in POD_SEEDS])
    return rom.pod(S, X, rank=32), X


def make_set(d, basis, seeds, with_fe=False):
    samples = [sample_minisquares(s) for s in seeds]
    weights = [d.weights(s) for s in samples]
    batch = rom.ReducedBatch.stack([rom.reduce_weights(w, basis) for w in weights])
    F, _ = rbno.input_features(samples)
    data = rbno.Dataset(F, batch, batch.optimal())
    fe = np.column_stack([d.solve(w) for w in weights]) if with_fe else None
    return data, weights, fe, samples


@pytest.fixture(scope="module")
def heat_sets(heat, heat_rb):
    d, _ = heat
    basis, _ = heat_rb
    train, _, _, _ = make_set(d, basis, TRAIN_SEEDS)
    val, _, _, _ = make_set(d, basis, VAL_SEEDS)
    test = make_set(d, basis, TEST_SEEDS, with_fe=True)
    return train, val, test


@pytest.fixture(scope="module")
def trained_256(heat_sets):
    train, val, _ = heat_sets
    return rbno.train(train.subset(np.arange(256)), val, rbno.TrainConfig(seed=0))


# -- criterion 1 -------------------------------------------------------------------


def rate_study(problem, k, levels=(8, 16, 32, 64)):
    hs, losses = [], []
    for n in levels:
        d = fosls.Discretization.build(problem, n, n, k, solver="direct")
        w = d.weights(None)
        hs.append(1.0 / n)
        losses.append(w.loss(d.solve(w)))
    return slope(hs, losses), losses


@pytest.fixture(scope="module")
def rates():
    t = time.perf_counter()
    out = {}
    for name in ("manufactured_diffusion", "manufactured_elasticity"):
        for k in (0, 1):
            out[(name, k)] = rate_study(fosls.get_problem(name), k)
    return out, time.perf_counter() - t


def test_c01_convergence_rates(rates, acceptance_report):
    res, dt = rates
    ok = all(abs(res[key][0] - 2 * (key[1] + 1)) <= 0.3 for key in res) and dt <= 120
    detail = ", ".join(f"{n.split('_')[1]} k={k}: {res[(n, k)][0]:.3f}" for n, k in res)
    acceptance_report("C1 convergence rates (target 2(k+1) +- 0.3)", ok, f"{detail}; {dt:.0f}s")
    assert ok


# -- criterion 2 -------------------------------------------------------------------


def test_c02_norm_equivalence(heat, acceptance_report):
    t = time.perf_counter()
    d, _ = heat
    X = d.gram()
    g = np.random.default_rng(2)
    ratios = []
    for seed in range(5):
        w = d.weights(sample_minisquares(seed))
        for _ in range(20):
            s = g.standard_normal(d.n_free)
            ratios.append(np.sqrt(s @ (w.W @ s)) / np.sqrt(s @ (X @ s)))
    ratios = np.array(ratios)
    dt = time.perf_counter() - t
    bad = int(np.sum((ratios < C_LO) | (ratios > C_HI)))
    ok = bad == 0 and dt <= 60
    acceptance_report("C2 norm equivalence", ok,
                      f"ratios in [{ratios.min():.3f}, {ratios.max():.3f}] vs [c, C] = [{C_LO:.4f}, {C_HI:.3f}], "
                      f"{bad} violations; {dt:.0f}s")
    assert ok


# -- criterion 3 -------------------------------------------------------------------


def test_c03_error_residual_equivalence(heat, acceptance_report):
    t = time.perf_counter()
    d, fine = heat
    Xf = fine.gram()
    ratios, fine_losses = [], []
    for i, seed in enumerate(REF_SEEDS):
        sample = sample_minisquares(seed)
        wf = fine.weights(sample)
        sf = fine.solve(wf)
        fine_losses.append(wf.loss(sf))
        if i < 50:
            w = d.weights(sample)
            s = d.solve(w)
            err = fosls.h_norm_error(fosls.prolongate_solution(d, fine, s), sf, Xf)
            ratios.append(w.loss(s) / err ** 2)
    ratios = np.array(ratios)
    frac = float(np.mean((ratios >= 0.2) & (ratios <= 5)))
    mean64 = float(np.mean(fine_losses))
    dt = time.perf_counter() - t
    ok = frac >= 0.95 and HEAT_MEAN_LOSS_64 / 3 <= mean64 <= 3 * HEAT_MEAN_LOSS_64 and dt <= 300
    acceptance_report("C3 error-residual equivalence", ok,
                      f"{100 * frac:.0f}% of loss/err^2 in [0.2, 5] (median {np.median(ratios):.2f}); "
                      f"mean 64x64 loss {mean64:.3e} vs {HEAT_MEAN_LOSS_64:.2e}; {dt:.0f}s")
    assert ok


# -- criterion 4 -------------------------------------------------------------------


def test_c04_galerkin_identity(heat, acceptance_report):
    d, _ = heat
    g = np.random.default_rng(4)
    worst = 0.0
    for seed in range(5):
        w = d.weights(sample_minisquares(100 + seed))
        s = d.solve(w)
        for _ in range(10):
            v = s + g.standard_normal(len(s)) * g.uniform(1e-3, 1)
            e = v - s
            lhs = w.loss(v) - w.loss(s)
            worst = max(worst, abs(lhs - e @ (w.W @ e)) / w.loss(v))
    ok = worst <= 1e-9
    acceptance_report("C4 Galerkin identity", ok, f"max relative defect {worst:.2e}")
    assert ok


# -- criterion 5 -------------------------------------------------------------------


def test_c05_pod(heat, heat_rb, heat_sets, acceptance_report):
    t = time.perf_counter()
    d, _ = heat
    basis, X = heat_rb
    _, _, (test, weights, fe, _) = heat_sets
    ortho = float(np.abs(basis.Pi.T @ (X @ basis.Pi) - np.eye(basis.r)).max())
    opt = test.batch.optimal()
    fe_loss = np.array([w.loss(fe[:, i]) for i, w in enumerate(weights)])
    rb_loss = test.batch.losses(opt)
    above = bool(np.all(rb_loss >= fe_loss - 1e-12))
    E = fe - basis.Pi @ opt.T
    err2 = np.einsum("ij,ij->j", E, X @ E)
    q = (rb_loss - fe_loss) / err2
    in_band = bool(np.all((q >= C_LO ** 2) & (q <= C_HI ** 2)))
    tails = {}
    for r in (8, 16, 32):
        P = basis.Pi[:, :r]
        R = fe - P @ (P.T @ (X @ fe))
        tails[r] = (float(np.mean(np.einsum("ij,ij->j", R, X @ R))), rom.pod_tail(basis.eigenvalues, r)[0])
    tail_ok = all(0.5 <= a / b <= 2.0 for a, b in tails.values())
    dt = time.perf_counter() - t
    ok = ortho <= 1e-8 and above and in_band and tail_ok
    tail_txt = ", ".join(f"r={r}: {a:.2e}/{b:.2e}" for r, (a, b) in tails.items())
    acceptance_report("C5 POD", ok,
                      f"orthonormality {ortho:.1e}; RB>=FE {above}; gap/err^2 in [{q.min():.3f}, {q.max():.3f}] "
                      f"(band [{C_LO ** 2:.2e}, {C_HI ** 2:.0f}]); held-out/tail {tail_txt}; {dt:.0f}s")
    assert ok


# -- criterion 6 -------------------------------------------------------------------


def test_c06_quasi_optimality(heat_rb, heat_sets, acceptance_report):
    basis, X = heat_rb
    _, _, (test, _, fe, _) = heat_sets
    opt = test.batch.optimal()
    ratios = []
    for i in range(50):
        s_h = fe[:, i]
        err = fosls.h_norm_error(basis.expand(opt[i]), s_h, X)
        best = fosls.h_norm_error(basis.expand(basis.project(X, s_h)), s_h, X)
        ratios.append(err / best)
    ratios = np.array(ratios)
    ok = bool(np.all(ratios <= C_HI / C_LO))
    acceptance_report("C6 RB quasi-optimality", ok, f"max ratio {ratios.max():.3f} <= C/c = {C_HI / C_LO:.1f}")
    assert ok


# -- criterion 7 -------------------------------------------------------------------


def test_c07_gradient_exactness(acceptance_report):
    worst = 0.0
    for seed in range(3):
        g = np.random.default_rng(seed)
        r = 5
        model = rbno.Mlp.init([6, 9, 7, r], seed)
        for b in model.biases:
            b[:] = 0.1 * g.standard_normal(b.shape)
        X = g.standard_normal((3, 6))
        items = []
        for i in range(3):
            B = g.standard_normal((r, r))
            items.append(rom.ReducedWeights(B @ B.T + np.eye(r), g.standard_normal(r), 1.0, i))
        batch = rom.ReducedBatch.stack(items)
        labels = g.standard_normal((3, r))
        for mode in ("residual", "both"):
            _, grads = rbno.loss_and_grad(model, X, batch, mode, labels)
            for p, gp in zip(model.params, grads):
                fd = np.zeros_like(p)
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + 1e-6
                    fp = rbno.loss_and_grad(model, X, batch, mode, labels)[0]
                    p[idx] = old - 1e-6
                    fm = rbno.loss_and_grad(model, X, batch, mode, labels)[0]
                    p[idx] = old
                    fd[idx] = (fp - fm) / 2e-6
                scale = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
                worst = max(worst, float(np.max(np.abs(gp - fd) / scale)))
    ok = worst <= 1e-5
    acceptance_report("C7 gradient exactness", ok, f"max relative error {worst:.2e}")
    assert ok


# -- criteria 8 and 9 ---------------------------------------------------------------


def test_c08_training(heat_sets, trained_256, acceptance_report):
    t = time.perf_counter()
    train, val, (test, _, _, _) = heat_sets
    one = train.subset(np.arange(1))
    over = rbno.train(one, None, rbno.TrainConfig(max_iter=3000, seed=0))
    opt_one = float(one.batch.losses(one.labels)[0])
    gap_a = rbno.model_loss(over.model, one.features, one.batch) - opt_one
    ok_a = 0 <= gap_a + 1e-12 and gap_a <= 1e-6

    def test_loss(res):
        return float(np.mean(test.batch.losses(res.model(test.features))))

    l16 = test_loss(rbno.train(train.subset(np.arange(16)), val, rbno.TrainConfig(seed=0)))
    l1024 = test_loss(rbno.train(train, val, rbno.TrainConfig(seed=0)))
    l256 = test_loss(trained_256)
    rb_opt = float(np.mean(test.batch.losses(test.labels)))
    ok_b = l1024 < l16
    ok_c = l256 <= 10 * rb_opt
    dt = time.perf_counter() - t
    ok = ok_a and ok_b and ok_c and dt <= 600
    acceptance_report("C8 training sanity", ok,
                      f"(a) overfit gap {gap_a:.1e}; (b) test loss N=16 {l16:.3e} > N=1024 {l1024:.3e}; "
                      f"(c) N=256 {l256:.3e} vs 10 x RB-opt {10 * rb_opt:.3e}; {dt:.0f}s")
    assert ok


def test_c09_a_posteriori_ratio(heat, heat_rb, heat_sets, trained_256, acceptance_report):
    d, fine = heat
    basis, X = heat_rb
    _, _, (test, _, _, samples) = heat_sets
    refs = np.column_stack([fine.solve(fine.weights(s)) for s in samples])
    to_ref = lambda s: fosls.prolongate_solution(d, fine, s)
    m = rbno.evaluate(trained_256.model, test.features, test.batch, basis, X, refs, to_ref, fine.gram())
    r = m.ratio
    frac = float(np.mean((r >= 0.3) & (r <= 3)))
    ok = frac >= 0.9
    acceptance_report("C9 a-posteriori ratio", ok,
                      f"{100 * frac:.0f}% of error/sqrt(loss) in [0.3, 3] (median {np.median(r):.2f}), "
                      f"mean relative H error {m.rel_h.mean():.2e}")
    assert ok


# -- criterion 10 ------------------------------------------------------------------


def test_c10_elasticity_algebra(rates, acceptance_report):
    g = np.random.default_rng(10)
    mu, lam = g.uniform(0.05, 20, 1000), g.uniform(0.05, 20, 1000)
    tau = g.standard_normal((1000, 2, 2))
    comp = np.abs(stiffness_pow(mu, lam, -0.5, stiffness_pow(mu, lam, 0.5, tau)) - tau).max()
    tr = np.trace(tau, axis1=1, axis2=2)
    cinv = (tau - (lam / (2 * mu + 2 * lam) * tr)[:, None, None] * np.eye(2)) / (2 * mu)[:, None, None]
    inv = np.abs(stiffness_pow(mu, lam, -1.0, tau) - cinv).max()
    import dataclasses

    zero = dataclasses.replace(fosls.elasticity(), g=None)
    dz = fosls.Discretization.build(zero, 16, 8, 0)
    sz = dz.solve(dz.weights(dz.sampler()(0)))
    res, _ = rates
    s0, s1 = res[("manufactured_elasticity", 0)][0], res[("manufactured_elasticity", 1)][0]
    ok = comp <= 1e-12 and inv <= 1e-12 and not np.any(sz) and abs(s0 - 2) <= 0.3 and abs(s1 - 4) <= 0.3
    acceptance_report("C10 elasticity algebra", ok,
                      f"C^-1/2 C^1/2 defect {comp:.1e}, C^-1 defect {inv:.1e}, zero-data max |s| "
                      f"{np.abs(sz).max():.1e}, rates {s0:.3f}/{s1:.3f}")
    assert ok


# -- criterion 11 ------------------------------------------------------------------


DETERMINISM_CFG = {
    "problem": "heat_conduction",
    "mesh": {"nx": 16, "ny": 16},
    "pod": {"n_pod": 32, "rank": 8},
    "counts": {"n_solve": 4, "n_train": 32, "n_val": 8, "n_test": 8, "n_probe": 5, "n_ratio_samples": 2},
    "train": {"max_iter": 100, "hidden": [32, 32]},
    "rates": {"levels": [4, 8, 16], "k": [0, 1]},
}


def test_c11_determinism(tmp_path, acceptance_report):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(DETERMINISM_CFG))
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("solve", "pod", "reduce", "train", "eval", "rates", "ratios"):
            assert cli.main([cmd, "--config", str(cfg), "--seed", "11", "--out", str(out), "--workers", "2"]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv") if p.name != "timings.csv")
    same = [(outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names]
    ok = all(same) and len(names) >= 11
    acceptance_report("C11 determinism", ok, f"{sum(same)}/{len(names)} CSV outputs byte-identical")
    assert ok


# -- ablation ------------------------------------------------------------------------


def test_ablation_residual_vs_coef_mse(heat_sets, acceptance_report):
    train, val, (test, _, _, _) = heat_sets
    sub = train.subset(np.arange(256))
    means = {}
    for mode in ("residual", "both", "coef_mse"):
        losses = []
        for seed in range(3):
            res = rbno.train(sub, val, rbno.TrainConfig(loss_mode=mode, seed=seed))
            losses.append(np.mean(test.batch.losses(res.model(test.features))))
        means[mode] = float(np.mean(losses))
    ok = means["residual"] < means["coef_mse"]
    acceptance_report("Ablation residual vs coef_mse", ok,
                      f"mean test residual loss {means['residual']:.3e} (residual), {means['both']:.3e} (both) "
                      f"vs {means['coef_mse']:.3e} (coef_mse)")
    assert ok
