"""Command line driver: ``fosls-rbno <command> [--config cfg.json] [--seed N]
[--out DIR] [--workers N]``.

Commands and their outputs (all under ``--out``):

``solve``   solve.csv          sample, loss, error, ratio, n_dofs, n_free
``pod``     eigenvalues.csv    k, lambda, tail, rel_tail
            heldout.csv        r, mean_sq_proj_error, tail
``reduce``  rb.csv             sample, r, rb_loss, fe_loss, loss_gap, err_fe, best_err, quasi_opt
            sweep.csv          r, mean_loss_diff, mean_sq_error, tail
``train``   history.csv        iteration, train_loss, val_loss
``eval``    metrics.csv        sample, loss, rb_loss, err_rb, err_ref, rel_h, rel_l, ratio
            summary.csv        metric, mean, std
            ratio_hist.csv     lo, hi, count
``rates``   rates.csv          k, n, h, loss, err, slope_loss, slope_err
``ratios``  ratios.csv         sample, probe, ratio, c, C

Wall-clock times go to ``timings.csv`` only, so every other file is
byte-identical across runs with the same config and seed.  Binary
artifacts (snapshots, basis, reduced weights, model) use the RBNO1 format.
Failures print a JSON object ``{"error": ..., "message": ...}`` to stderr
and exit with status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import fosls, rbno, rom
from .fem import FeFunction, build_space, interpolate
from .fields import GrfConfig, ParamSample, rng
from .linalg import read_matrix, write_matrix

# sample-id offsets from the master seed, one block per stage
OFFSETS = {"pod": 0, "train": 100_000, "val": 200_000, "test": 300_000, "solve": 400_000, "probe": 500_000}

DEFAULTS = {
    "problem": "heat_conduction",
    "mesh": {"nx": 32, "ny": 32},
    "fe": {"k": 0, "m": None},
    "solver": "cg",
    "grf": {"delta": 1.5, "gamma": 0.15, "alpha": 2},
    "pod": {"n_pod": 128, "rank": 32, "tol": None},
    "counts": {"n_solve": 16, "n_train": 256, "n_val": 64, "n_test": 128, "n_probe": 20, "n_ratio_samples": 5},
    "reference": {"factor": 2},
    "features": {"d_in": 64},
    "train": rbno.TrainConfig().to_dict(),
    "rates": {"problem": "manufactured_diffusion", "levels": [8, 16, 32, 64], "k": [0, 1]},
}

ELASTICITY_MESH = {"nx": 64, "ny": 32}


class CliError(Exception):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in out:
            raise CliError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            for k2 in val:
                if k2 not in out[key]:
                    raise CliError(f"unknown config key {key}.{k2}")
            out[key].update(val)
        else:
            out[key] = val
    return out


def load_config(path=None, seed=None) -> dict:
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
    user_seed = user.pop("seed", 0)
    base = copy.deepcopy(DEFAULTS)
    if user.get("problem") == "elasticity" and "mesh" not in user:
        base["mesh"] = dict(ELASTICITY_MESH)
    cfg = _merge(base, user)
    cfg["seed"] = int(user_seed if seed is None else seed)
    if cfg["seed"] < 0 or cfg["seed"] >= 2 ** 64:
        raise CliError("seed must be an unsigned 64-bit integer")
    return cfg


class Pipeline:
    """Shared state of one experiment: discretization, samplers, output paths."""

    def __init__(self, cfg, out, workers=1):
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.workers = max(1, int(workers))
        self.timings = []
        self._disc = self._ref = None

    # -- setup --

    def problem(self, name=None):
        name = name or self.cfg["problem"]
        kwargs = {}
        if name in ("darcy", "elasticity"):
            kwargs["grf"] = GrfConfig(**self.cfg["grf"])
        return fosls.get_problem(name, **kwargs)

    @property
    def disc(self) -> fosls.Discretization:
        if self._disc is None:
            m, fe = self.cfg["mesh"], self.cfg["fe"]
            self._disc = fosls.Discretization.build(self.problem(), int(m["nx"]), int(m["ny"]), int(fe["k"]),
                                                    fe["m"], solver=self.cfg["solver"])
        return self._disc

    @property
    def ref(self) -> fosls.Discretization:
        if self._ref is None:
            self._ref = fosls.refine(self.disc, int(self.cfg["reference"]["factor"]))
        return self._ref

    def samples(self, stage, n):
        sampler = self.disc.sampler()
        base = self.cfg["seed"] + OFFSETS[stage]
        return [sampler(base + i) for i in range(int(n))]

    def ref_sample(self, sample):
        """The same parameter on the reference mesh (nodal fields are prolongated)."""
        if sample.kind == "nodal":
            if "cg1" not in self.ref._cache:
                self.ref._cache["cg1"] = build_space(self.ref.mesh, "CG", 1)
            V = self.ref._cache["cg1"]
            vals = interpolate(V, FeFunction(sample.space, sample.values))
            return ParamSample("nodal", vals, sample.seed, V)
        return sample

    def timed(self, stage, fn, *args):
        t = time.perf_counter()
        out = fn(*args)
        self.timings.append((stage, time.perf_counter() - t))
        return out

    def map(self, fn, items):
        return rom.parallel_map(fn, items, self.workers)

    # -- output --

    def write_csv(self, name, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return path

    def finish(self, command):
        (self.out / "config.json").write_text(json.dumps(self.cfg, indent=2, sort_keys=True) + "\n")
        with open(self.out / "timings.csv", "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for stage, dt in self.timings:
                w.writerow([command, stage, f"{dt:.6f}"])

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    # -- shared stages --

    def reference_solution(self, sample):
        ref = self.ref
        return ref.solve(ref.weights(self.ref_sample(sample)))

    def to_reference(self, s):
        return fosls.prolongate_solution(self.disc, self.ref, s)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# -- commands ------------------------------------------------------------------


def cmd_solve(p: Pipeline, n_samples=None):
    n = p.cfg["counts"]["n_solve"] if n_samples is None else n_samples
    samples = p.samples("solve", n)
    X = p.ref.gram() if samples else None

    def one(sample):
        t0 = time.perf_counter()
        w = p.disc.weights(sample)
        t1 = time.perf_counter()
        s = p.disc.solve(w)
        t2 = time.perf_counter()
        sf = p.reference_solution(sample)
        err = fosls.h_norm_error(p.to_reference(s), sf, X)
        loss = fosls.eval_loss(w, s)
        ratio = err / np.sqrt(loss) if loss > 0 else float("inf")
        return (sample.seed, loss, err, ratio, p.disc.n_dofs, p.disc.n_free), (t1 - t0, t2 - t1)

    res = p.map(one, samples)
    for (row, (ta, ts)) in res:
        p.timings.append((f"assemble[{row[0]}]", ta))
        p.timings.append((f"solve[{row[0]}]", ts))
    p.write_csv("solve.csv", ["sample", "loss", "error", "ratio", "n_dofs", "n_free"], [r for r, _ in res])
    return [r for r, _ in res]


def cmd_pod(p: Pipeline):
    c = p.cfg["pod"]
    X = p.disc.gram()
    S = p.timed("snapshots", lambda: rom.compute_snapshots(p.disc, p.samples("pod", c["n_pod"]), p.workers))
    basis = p.timed("pod", rom.pod, S, X, c["rank"], c["tol"])
    write_matrix(p.path("pod", "snapshots.rbno"), S)
    basis.save(p.path("pod", "pod"))
    lam = basis.eigenvalues
    rows = []
    for k in range(len(lam)):
        tail, rel = rom.pod_tail(lam, k + 1)
        rows.append((k + 1, lam[k], tail, rel))
    p.write_csv("eigenvalues.csv", ["k", "lambda", "tail", "rel_tail"], rows)
    held = rom.compute_snapshots(p.disc, p.samples("test", p.cfg["counts"]["n_test"]), p.workers)
    rows = []
    for r in _doubling(basis.r):
        Pi = basis.Pi[:, :r]
        E = held - Pi @ (Pi.T @ (X @ held))
        err = float(np.mean(np.einsum("ij,ij->j", E, X @ E)))
        rows.append((r, err, rom.pod_tail(lam, r)[0]))
    p.write_csv("heldout.csv", ["r", "mean_sq_proj_error", "tail"], rows)
    return basis


def _doubling(r_max):
    rs, r = [], 1
    while r < r_max:
        rs.append(r)
        r *= 2
    return rs + [r_max]


def _load_basis(p):
    prefix = p.out / "pod" / "pod"
    if not Path(f"{prefix}.basis.rbno").exists():
        raise CliError(f"missing POD basis under {p.out / 'pod'}; run 'pod' first")
    return rom.PodBasis.load(prefix)


def cmd_reduce(p: Pipeline):
    basis = _load_basis(p)
    X = p.disc.gram()
    cnt = p.cfg["counts"]
    for stage in ("train", "val", "test"):
        samples = p.samples(stage, cnt[f"n_{stage}"])
        if not samples:
            continue
        weights = p.map(p.disc.weights, samples)
        batch = rom.ReducedBatch.stack([rom.reduce_weights(w, basis) for w in weights])
        batch.save(p.path("reduce", stage))
        if stage != "test":
            continue
        fe = np.column_stack(p.map(lambda w: p.disc.solve(w), weights))
        write_matrix(p.path("reduce", "test.fe.rbno"), fe)
        rows, sweep = [], []
        opt = batch.optimal()
        for i, w in enumerate(weights):
            s_h = fe[:, i]
            s_rb = basis.expand(opt[i])
            fe_loss = fosls.eval_loss(w, s_h)
            rb_loss = batch.losses(opt[i:i + 1])[0]
            err = fosls.h_norm_error(s_rb, s_h, X)
            best = fosls.h_norm_error(basis.expand(basis.project(X, s_h)), s_h, X)
            rows.append((batch.ids[i], basis.r, rb_loss, fe_loss, rb_loss - fe_loss, err, best,
                         err / best if best > 0 else 0.0))
        p.write_csv("rb.csv", ["sample", "r", "rb_loss", "fe_loss", "loss_gap", "err_fe", "best_err", "quasi_opt"], rows)
        fe_losses = np.array([r[3] for r in rows])
        for r in _doubling(basis.r):
            sub = rom.ReducedBatch(batch.W[:, :r, :r], batch.alpha[:, :r], batch.beta, batch.ids)
            o = sub.optimal()
            E = fe - basis.Pi[:, :r] @ o.T
            sweep.append((r, float(np.mean(sub.losses(o) - fe_losses)),
                          float(np.mean(np.einsum("ij,ij->j", E, X @ E))), rom.pod_tail(basis.eigenvalues, r)[0]))
        p.write_csv("sweep.csv", ["r", "mean_loss_diff", "mean_sq_error", "tail"], sweep)


def _load_batch(p, stage):
    prefix = p.out / "reduce" / stage
    if not Path(f"{prefix}.alpha.rbno").exists():
        raise CliError(f"missing reduced weights for {stage!r}; run 'reduce' first")
    return rom.ReducedBatch.load(prefix)


def _train_cfg(p) -> rbno.TrainConfig:
    d = dict(p.cfg["train"])
    d["seed"] = p.cfg["seed"]
    return rbno.TrainConfig(**d)


def cmd_train(p: Pipeline):
    cnt = p.cfg["counts"]
    tr_samples = p.samples("train", cnt["n_train"])
    d_in = min(int(p.cfg["features"]["d_in"]), len(tr_samples))
    F_tr, codec = rbno.input_features(tr_samples, d_in=d_in)
    b_tr = _load_batch(p, "train")
    train_set = rbno.Dataset(F_tr, b_tr, b_tr.optimal())
    val_set = None
    if cnt["n_val"]:
        b_va = _load_batch(p, "val")
        val_set = rbno.Dataset(codec.transform(p.samples("val", cnt["n_val"])), b_va, b_va.optimal())
    cfg = _train_cfg(p)
    result = p.timed("train", rbno.train, train_set, val_set, cfg)
    model_dir = p.path("model", "manifest.json").parent
    meta = codec.save(model_dir / "features")
    basis = _load_basis(p)
    result.model.save(model_dir, {"codec": meta, "basis": basis.digest, "best_iteration": result.best_iteration,
                                  "train": cfg.to_dict()})
    p.write_csv("history.csv", ["iteration", "train_loss", "val_loss"],
                [(i, a, b) for i, (a, b) in enumerate(zip(result.train_history, result.val_history))])
    return result


def cmd_eval(p: Pipeline):
    model_dir = p.out / "model"
    if not (model_dir / "manifest.json").exists():
        raise CliError("missing model; run 'train' first")
    model, manifest = rbno.Mlp.load(model_dir)
    codec = rbno.FeatureCodec.load(model_dir / "features", manifest["codec"])
    basis = _load_basis(p)
    if manifest["basis"] != basis.digest:
        raise CliError("model was trained against a different POD basis")
    samples = p.samples("test", p.cfg["counts"]["n_test"])
    batch = _load_batch(p, "test")
    refs = np.column_stack(p.map(p.reference_solution, samples))
    m = rbno.evaluate(model, codec.transform(samples), batch, basis, p.disc.gram(), refs,
                      p.to_reference, p.ref.gram(), fosls.gram_l2(p.ref))
    ratio = m.ratio
    p.write_csv("metrics.csv", ["sample", "loss", "rb_loss", "err_rb", "err_ref", "rel_h", "rel_l", "ratio"],
                zip(m.sample_ids, m.loss, m.rb_loss, m.err_rb, m.err_ref, m.rel_h, m.rel_l, ratio))
    summ = m.summary()
    names = sorted({k.rsplit("_", 1)[0] for k in summ})
    p.write_csv("summary.csv", ["metric", "mean", "std"], [(n, summ[n + "_mean"], summ[n + "_std"]) for n in names])
    counts, edges = m.histogram()
    p.write_csv("ratio_hist.csv", ["lo", "hi", "count"], zip(edges[:-1], edges[1:], counts))
    return m


def fit_slope(h, v) -> float:
    """Least-squares slope of log(v) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])


def cmd_rates(p: Pipeline):
    rc = p.cfg["rates"]
    prob = p.problem(rc["problem"])
    if prob.exact_u is None:
        raise CliError(f"rates need a manufactured problem, got {prob.name!r}")
    rows = []
    for k in rc["k"]:
        hs, losses, errs, block = [], [], [], []
        for n in rc["levels"]:
            ny = n * int(round((prob.bounds[3] - prob.bounds[1]) / (prob.bounds[2] - prob.bounds[0])))
            d = p.timed(f"build[k={k},n={n}]", fosls.Discretization.build, prob, n, max(ny, 1), int(k),
                        None, None, p.cfg["solver"])
            w = d.weights(None)
            s = p.timed(f"solve[k={k},n={n}]", d.solve, w)
            err = fosls.h_norm_error(s, fosls.interpolate_exact(d), d.gram())
            hs.append((prob.bounds[2] - prob.bounds[0]) / n)
            losses.append(fosls.eval_loss(w, s))
            errs.append(err)
            block.append([k, n, hs[-1], losses[-1], err])
        sl, se = fit_slope(hs, losses), fit_slope(hs, errs)
        rows += [b + [sl, se] for b in block]
    p.write_csv("rates.csv", ["k", "n", "h", "loss", "err", "slope_loss", "slope_err"], rows)
    return rows


def cmd_ratios(p: Pipeline):
    """Norm-equivalence ratios sqrt(s^T W s) / ||s||_X over random FE functions."""
    cnt = p.cfg["counts"]
    prob = p.disc.problem
    X = p.disc.gram()
    c_lo, c_hi = (fosls.lemma_constants(*prob.coefficient_bounds) if prob.coefficient_bounds else (float("nan"),) * 2)
    rows = []
    g = rng(p.cfg["seed"] + OFFSETS["probe"])
    for sample in p.samples("solve", cnt["n_ratio_samples"]):
        w = p.disc.weights(sample)
        for j in range(int(cnt["n_probe"])):
            s = g.standard_normal(p.disc.n_free)
            rows.append((sample.seed, j, np.sqrt(s @ (w.W @ s)) / fosls.xh_norm(X, s), c_lo, c_hi))
    p.write_csv("ratios.csv", ["sample", "probe", "ratio", "c", "C"], rows)
    return rows


COMMANDS = {
    "solve": cmd_solve, "pod": cmd_pod, "reduce": cmd_reduce, "train": cmd_train,
    "eval": cmd_eval, "rates": cmd_rates, "ratios": cmd_ratios,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(2)


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fosls-rbno", description="FOSLS finite elements, POD reduced bases and residual-trained RBNO.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        sp.add_argument("--config", help="JSON config file (missing keys take defaults)")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--workers", type=int, default=1, help="worker pool size for sample-parallel stages")
        if name == "solve":
            sp.add_argument("--samples", type=int, help="number of samples (overrides counts.n_solve)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.workers < 1:
            raise CliError("--workers must be at least 1")
        p = Pipeline(cfg, args.out, args.workers)
        if args.command == "solve":
            cmd_solve(p, args.samples)
        else:
            COMMANDS[args.command](p)
        p.finish(args.command)
    except Exception as exc:  # report every failure as JSON
        _emit_error(type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
