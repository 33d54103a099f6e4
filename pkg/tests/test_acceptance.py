"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Criteria 7-9 train four toy models on a 256-sample procedural dataset
(roughly 15-20 minutes on one core). Set ``POLARFUSE_ACCEPTANCE_CACHE`` to a
directory to keep the dataset and checkpoints between runs; timings of the
first run are stored there and reported again. Run directly with
``python3 tests/test_acceptance.py`` or through pytest.
"""

from __future__ import annotations

import math
import os
import shutil
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from polarfuse import io
from polarfuse.cli import main as cli_main
from polarfuse.config import RunConfig
from polarfuse.data import load_dataset, split_ids
from polarfuse.diffusion import (
    PolarDiffusionModel,
    build_schedule,
    ddim_sample,
    forward_noising,
    train,
    trailing_timesteps,
)
from polarfuse.evaluation import evaluate
from polarfuse.fusion import ConfidencePredictor, gated_fuse, gated_fuse_backward
from polarfuse.metrics import depth_metrics, mean_depth_metrics, normal_metrics
from polarfuse.nn import AvgPool2, Conv2d, Linear, ReLU, SiLU, Sigmoid, UpsampleNearest2, grad_check
from polarfuse.nn import functional as F
from polarfuse.polar import (
    PolarizationMap,
    decode_polarization,
    encode_polarization,
    polarization_from_stokes,
    simulate_stack,
    stokes_from_measurements,
)
from polarfuse.synth import diffuse_dolp, make_dataset, specular_dolp

sys.path.insert(0, str(Path(__file__).parent))
from gradutil import FnModule, away_from_zero  # noqa: E402
from test_fusion import Pipeline  # noqa: E402

CACHE_ENV = "POLARFUSE_ACCEPTANCE_CACHE"
DEMO_CFG = Path(__file__).resolve().parents[1] / "demos" / "demo.cfg"
SEEDS = (0, 1, 2)


@pytest.fixture
def report(request):
    """``report(n, ok, text)`` prints the criterion line, then asserts."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n, ok, text):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {text}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        assert ok, line

    return emit


def elapsed(fn):
    t0 = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - t0


# ------------------------------------------------------------- 1. Stokes


def test_c01_stokes_roundtrip(report):
    def run():
        rng = np.random.default_rng(1)
        n = 10_000
        i_un = rng.uniform(0.1, 10.0, (1, n))
        rho = rng.uniform(0.01, 1.0, (1, n))
        phi = rng.uniform(0.0, np.pi, (1, n))
        stokes = stokes_from_measurements(simulate_stack(i_un, PolarizationMap(phi, rho)))
        pol, s0 = polarization_from_stokes(stokes), stokes.s0
        d = np.abs(pol.aolp - phi) % np.pi
        return (
            np.max(np.abs(s0 - i_un) / i_un),
            np.max(np.abs(pol.dolp - rho) / rho),
            np.max(np.minimum(d, np.pi - d) / np.pi),
        )

    (e_i, e_rho, e_phi), dt = elapsed(run)
    worst = max(e_i, e_rho, e_phi)
    report(1, worst <= 1e-9 and dt < 5, f"Stokes roundtrip, 10k triples, max rel err {worst:.2e} (<= 1e-9), {dt:.2f} s (< 5 s)")


# ----------------------------------------------------------- 2. encoding


def test_c02_encoding_invariants(report):
    def run():
        phi = np.linspace(0.0, np.pi, 180, endpoint=False)
        rho = np.linspace(0.0, 1.0, 100)
        P, R = np.meshgrid(phi, rho, indexing="ij")
        pol = PolarizationMap(P, R, valid=np.ones(P.shape, bool))
        enc = encode_polarization(pol)
        in_range = bool(np.all((enc >= -1) & (enc <= 1)))
        circle = float(np.max(np.abs(enc[1] ** 2 + enc[2] ** 2 - 1.0)))
        # y - pi is exact for y in [pi, 2pi) on a 2^-50 grid, so phi + pi reproduces y
        y = np.round((P + np.pi) * 2.0**50) / 2.0**50
        shifted = y - np.pi
        e0 = encode_polarization(PolarizationMap(shifted, R, valid=pol.valid))
        e1 = encode_polarization(PolarizationMap(shifted + np.pi, R, valid=pol.valid))
        ambiguity = bool(np.array_equal(shifted + np.pi, y)) and bool(np.array_equal(e0, e1))
        dec = decode_polarization(enc)
        d = np.abs(dec.aolp - P)
        ident = max(float(np.max(np.abs(dec.dolp - R))), float(np.max(np.minimum(d, np.pi - d))))
        return in_range, circle, ambiguity, ident

    (in_range, circle, ambiguity, ident), dt = elapsed(run)
    ok = in_range and circle <= 1e-12 and ambiguity and ident <= 1e-12 and dt < 5
    report(
        2,
        ok,
        f"encoding 180x100 grid: range ok={in_range}, |circle-1| {circle:.1e}, pi-ambiguity exact={ambiguity}, "
        f"decode(encode) err {ident:.1e}, {dt:.2f} s (< 5 s)",
    )


# ------------------------------------------------------------ 3. Fresnel


def test_c03_fresnel(report):
    def run():
        zero = float(diffuse_dolp(0.0, 1.5))
        theta = np.deg2rad(np.arange(0, 90))
        mono = bool(np.all(np.diff(diffuse_dolp(theta, 1.5)) > 0))
        brewster = max(abs(float(specular_dolp(math.atan(n), n)) - 1.0) for n in (1.3, 1.5, 2.0))
        grazing = float(diffuse_dolp(np.pi / 2, 1.5))
        return zero, mono, brewster, grazing

    (zero, mono, brewster, grazing), dt = elapsed(run)
    ok = zero == 0.0 and mono and brewster <= 1e-9 and abs(grazing - 0.3846) <= 1e-3 and dt < 1
    report(
        3,
        ok,
        f"Fresnel: rho_d(0)={zero}, monotone={mono}, |rho_s(Brewster)-1| {brewster:.1e}, "
        f"grazing {grazing:.4f} (0.3846 +- 1e-3), {dt:.3f} s (< 1 s)",
    )


# ---------------------------------------------------------- 4. gradients


SHAPES = [(1, 1, 4, 4), (2, 3, 5, 6), (3, 2, 8, 8), (1, 4, 6, 2), (2, 1, 3, 7)]
EVEN = [(1, 1, 4, 4), (2, 3, 6, 8), (3, 2, 2, 2), (1, 4, 8, 2), (2, 1, 4, 6)]


def _grad_cases():
    rng = np.random.default_rng(0)
    for shape in SHAPES:
        for k, stride in ((3, 1), (1, 1), (3, 2)):
            conv = Conv2d(shape[1], 3, k, stride=stride, rng=rng)
            conv.bias.value[...] = rng.standard_normal(3)
            yield f"conv{k}s{stride}", conv, (rng.standard_normal(shape),)
        for name, layer in (("relu", ReLU()), ("silu", SiLU()), ("sigmoid", Sigmoid())):
            yield name, layer, (away_from_zero(rng, shape),)
        target = rng.standard_normal(shape)
        mse = FnModule(lambda p, t=target: F.mse_loss(p, t), lambda d, xs, _, t=target: d * F.mse_loss_backward(xs[0], t))
        yield "mse", mse, (rng.standard_normal(shape),)
        a_shape = shape[:1] + (1,) + shape[2:]
        fuse = FnModule(gated_fuse, lambda d, xs, _: gated_fuse_backward(d, *xs))
        yield "gated_fuse", fuse, (rng.standard_normal(shape), rng.standard_normal(shape), rng.uniform(0, 1, a_shape))
        pred = ConfidencePredictor(shape[1], hidden=4, rng=rng)
        for p in pred.parameters():
            p.value[...] = rng.standard_normal(p.value.shape) * 0.5
        yield "confidence", pred, (rng.standard_normal(shape), rng.standard_normal(shape))
    for shape in EVEN:
        yield "avgpool", AvgPool2(), (rng.standard_normal(shape),)
        yield "upsample", UpsampleNearest2(), (rng.standard_normal(shape),)
        img = (shape[0], 3) + shape[2:]
        yield "pipeline", Pipeline(rng, img), (rng.uniform(-1, 1, img), rng.uniform(-1, 1, img))
    for n, fin, fout in ((1, 1, 1), (2, 3, 4), (5, 8, 2), (3, 16, 7), (4, 2, 9)):
        yield "linear", Linear(fin, fout, rng=rng), (rng.standard_normal((n, fin)),)


def test_c04_gradients(report):
    def run():
        counts, worst, failed = {}, 0.0, []
        for name, module, inputs in _grad_cases():
            r = grad_check(module, inputs, tolerance=1e-4)
            counts[name] = counts.get(name, 0) + 1
            worst = max(worst, r.max_rel_error)
            if not r.passed:
                failed.append(name)
        return counts, worst, failed

    (counts, worst, failed), dt = elapsed(run)
    ok = not failed and min(counts.values()) >= 5 and dt < 60
    report(
        4,
        ok,
        f"finite-difference checks on {len(counts)} operators x >= {min(counts.values())} shapes, "
        f"max rel err {worst:.1e} (< 1e-4), failures {failed or 'none'}, {dt:.1f} s (< 60 s)",
    )


# ---------------------------------------------------------- 5. diffusion


def test_c05_diffusion_statistics(report):
    def run():
        rng = np.random.default_rng(5)
        zs = build_schedule(zero_snr=True)
        var_err = 0.0
        for t in rng.integers(0, 1000, 5):
            z = forward_noising(rng.standard_normal(10**6), rng.standard_normal(10**6), int(t), zs)
            var_err = max(var_err, abs(float(z.var()) - 1.0))
        trailing = trailing_timesteps(1000, 4)
        plain = build_schedule()
        z0 = rng.uniform(-1, 1, (2, 4, 4, 4))

        def eps(z_t, t, _):
            ab = plain.alpha_bar[t[0]]
            return (z_t - np.sqrt(ab) * z0) / np.sqrt(1 - ab)

        out = ddim_sample(eps, None, plain, list(range(999, -1, -1)), z0.shape, np.random.default_rng(0), clip=None)
        return var_err, float(zs.alpha_bar[-1]), trailing, float(np.max(np.abs(out - z0)))

    (var_err, ab_last, trailing, ddim_err), dt = elapsed(run)
    ok = var_err <= 0.02 and ab_last <= 1e-12 and trailing == [999, 749, 499, 249] and ddim_err <= 1e-6 and dt < 30
    report(
        5,
        ok,
        f"noising |var-1| {var_err:.4f} (<= 0.02), zero-SNR abar_T-1 {ab_last:.1e}, trailing {trailing}, "
        f"oracle DDIM err {ddim_err:.1e} (<= 1e-6), {dt:.1f} s (< 30 s)",
    )


# ------------------------------------------------------------ 6. metrics


def _brute_force_normals(pred, gt):
    errs = []
    for i in range(pred.shape[1]):
        for j in range(pred.shape[2]):
            a, b = pred[:, i, j], gt[:, i, j]
            c = sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))
            errs.append(math.degrees(math.acos(max(-1.0, min(1.0, c)))))
    n = len(errs)
    return {
        "mean": math.fsum(errs) / n,
        "median": statistics.median_low(errs),
        "rmse": math.sqrt(math.fsum(e * e for e in errs) / n),
        "acc_11_25": sum(e < 11.25 for e in errs) / n,
        "acc_22_5": sum(e < 22.5 for e in errs) / n,
        "acc_30": sum(e < 30.0 for e in errs) / n,
    }


def test_c06_metric_oracles(report):
    def run():
        m = depth_metrics(np.array([1.0, 2.0, 4.0]), np.array([1.0, 2.0, 2.0]))
        hand = (abs(m.absrel - 1 / 3) <= 1e-6, abs(m.delta1 - 2 / 3) <= 1e-6, abs(m.delta2 - 2 / 3) <= 1e-6)
        gt = np.zeros((3, 1, 4))
        gt[2] = -1.0
        pred = np.zeros((3, 1, 4))
        pred[:, 0, 0] = (0, 0, -1)
        pred[:, 0, 1] = (1, 0, 0)
        pred[:, 0, 2] = (0, 0, 1)
        pred[:, 0, 3] = (math.sqrt(0.5), 0, -math.sqrt(0.5))
        rng = np.random.default_rng(6)
        cases = [(pred, gt), (rng.standard_normal((3, 4, 5)), rng.standard_normal((3, 4, 5)))]
        normals = True
        for p, g in cases:
            nm, ref = normal_metrics(p, g), _brute_force_normals(p, g)
            normals &= all(abs(getattr(nm, k) - v) <= 1e-9 for k, v in ref.items())
        return m, all(hand), normals

    (m, hand, normals), dt = elapsed(run)
    report(
        6,
        hand and normals and dt < 1,
        f"hand instance AbsRel {m.absrel:.4f} d1 {m.delta1:.4f} d2 {m.delta2:.4f}, "
        f"normal brute force match={normals}, {dt:.3f} s (< 1 s)",
    )


# -------------------------------------------------------- 7-9. toy models

VARIANTS = {
    "full": dict(fusion="confidence", modality="full"),
    "rgb": dict(fusion="confidence", modality="rgb"),
    "pol": dict(fusion="confidence", modality="pol"),
    "early": dict(fusion="early", modality="full"),
}


class Toy:
    def __init__(self, root):
        self.root = Path(root)
        self.cfg = RunConfig()
        self.timings_path = self.root / "timings.json"
        self.timings = io.read_json(self.timings_path) if self.timings_path.exists() else {}
        data = self.root / "data"
        if not (data / "manifest.json").exists():
            _, self.timings["synth"] = elapsed(
                lambda: make_dataset(self.cfg.scene_config(), self.cfg.dataset.count, data, seed=self.cfg.dataset.seed)
            )
            self._save_timings()
        ids = [s["id"] for s in io.read_json(data / "manifest.json")["samples"]]
        train_ids, test_ids = split_ids(ids, self.cfg.dataset.test_count)
        self.train_set = load_dataset(data, train_ids)
        self.test_set = load_dataset(data, test_ids)
        self._scores = {}

    def _save_timings(self):
        io.write_json(self.timings_path, self.timings)

    def checkpoint(self, variant):
        path = self.root / f"{variant}.pfck"
        if not path.exists():
            model = PolarDiffusionModel(self.cfg.model_config(**VARIANTS[variant]))
            _, self.timings[f"train_{variant}"] = elapsed(lambda: train(model, self.train_set, self.cfg.train_config()))
            model.save(path)
            self._save_timings()
        return path

    def absrel(self, variant, mode="standard", beta=0.0):
        """Mean test AbsRel over the sampling (and noise) seeds, with the eval time."""
        key = (variant, mode, beta)
        if key not in self._scores:
            model = PolarDiffusionModel.load(self.checkpoint(variant))
            t0 = time.perf_counter()
            runs = [evaluate(model, self.test_set, mode=mode, seed=s, beta=beta, noise_seed=s)[0] for s in SEEDS]
            self._scores[key] = (100.0 * mean_depth_metrics(runs).absrel, time.perf_counter() - t0)
        return self._scores[key]


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = os.environ.get(CACHE_ENV)
    if root:
        Path(root).mkdir(parents=True, exist_ok=True)
    return Toy(root or tmp_path_factory.mktemp("toy"))


def test_c07_modality_ordering(toy, report):
    scores = {v: toy.absrel(v) for v in ("full", "rgb", "pol")}
    total = toy.timings["synth"] + sum(toy.timings[f"train_{v}"] for v in scores) + sum(s[1] for s in scores.values())
    full, rgb, pol = (scores[v][0] for v in ("full", "rgb", "pol"))
    ok = full < rgb < pol and total < 45 * 60
    report(
        7,
        ok,
        f"test AbsRel (%, 50-step, 3 seeds): full {full:.2f} < RGB-only {rgb:.2f} < POL-only {pol:.2f}; "
        f"synth+3 trainings+eval {total / 60:.1f} min (< 45 min)",
    )


def test_c08_noise_robustness(toy, report):
    cells = {(v, b): toy.absrel(v, beta=b) for v in ("full", "early") for b in (0.0, 1.0)}
    d_conf = cells["full", 1.0][0] - cells["full", 0.0][0]
    d_early = cells["early", 1.0][0] - cells["early", 0.0][0]
    # beta = 0 evaluations are shared with criterion 7 when run in the same session
    eval_time = sum(c[1] for c in cells.values())
    ok = d_conf <= d_early and eval_time < 5 * 60
    report(
        8,
        ok,
        f"AbsRel degradation beta 0 -> 1 (points, 3 seeds): confidence {d_conf:+.2f} <= early {d_early:+.2f}; "
        f"eval {eval_time:.0f} s (< 300 s)",
    )


def test_c09_sampling_modes(toy, report):
    path = toy.checkpoint("full")
    h_std = io.file_sha256(path)
    std, t_std = toy.absrel("full", "standard")
    h_acc = io.file_sha256(path)
    acc, t_acc = toy.absrel("full", "accelerated")
    ratio = acc / std
    ok = h_std == h_acc and ratio <= 1.3 and t_std + t_acc < 5 * 60
    report(
        9,
        ok,
        f"same checkpoint {h_std[:12]} for both modes; AbsRel accelerated {acc:.2f} vs standard {std:.2f} "
        f"(ratio {ratio:.3f} <= 1.3), {t_std + t_acc:.0f} s (< 300 s)",
    )


# -------------------------------------------------------- 10. determinism


def _demo_pipeline(root):
    cfg = ["--config", str(DEMO_CFG)]
    steps = [
        ["synth", "--out", str(root / "data")],
        ["train", "--data", str(root / "data"), "--out", str(root / "train")],
        ["infer", "--checkpoint", str(root / "train/final.pfck"), "--input", str(root / "data"), "--out", str(root / "pred")],
        ["infer", "--checkpoint", str(root / "train/final.pfck"), "--input", str(root / "data"), "--mode", "accelerated", "--out", str(root / "pred4")],
        ["eval", "--predictions", str(root / "pred"), "--data", str(root / "data"), "--out", str(root / "eval")],
        ["ablate", "--checkpoints", str(root / "cks"), "--data", str(root / "data"), "--train-missing", "--out", str(root / "ablate")],
    ]
    codes = []
    for args in steps:
        codes.append(cli_main([*args, *cfg]))
        if args[0] == "synth":
            # a stacked polarizer image rendered from the first sample feeds the stokes command
            sample = root / "data/000000"
            pol = PolarizationMap(io.read_pfm(sample / "aolp.pfm"), io.read_pfm(sample / "dolp.pfm"))
            stack = simulate_stack(io.read_png(sample / "rgb.png").mean(axis=0), pol)
            io.write_pfm(root / "stack.pfm", np.concatenate([stack.i0, stack.i45, stack.i90, stack.i135]))
            codes.append(cli_main(["stokes", "--stack", str(root / "stack.pfm"), "--out", str(root / "stokes"), *cfg]))
    return codes


def _tree(root):
    return {p.relative_to(root).as_posix(): io.file_sha256(p) for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_determinism(tmp_path, report):
    # rerun in the same place: resolved.cfg records absolute paths
    def run():
        root, codes, trees = tmp_path / "run", [], []
        for _ in range(2):
            codes.append(_demo_pipeline(root))
            trees.append(_tree(root))
            shutil.rmtree(root)
        return codes, *trees

    (codes, a, b), dt = elapsed(run)
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = all(c == 0 for run in codes for c in run) and not differing and dt < 600
    report(
        10,
        ok,
        f"demo pipeline (stokes, synth, train, infer x2, eval, ablate) run twice: {len(a)} files, "
        f"{len(differing)} differ{' ' + str(differing[:6]) if differing else ''}, exit codes {codes[0]}, {dt:.0f} s (< 600 s)",
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
