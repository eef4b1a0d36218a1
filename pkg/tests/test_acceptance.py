"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. Criteria 5-7 train real
(scaled-down) models and dominate the runtime; mark-based deselection
(``-m "not slow"``) skips them during development.
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from opattn import pngio
from opattn.distortion import (
    apply_gaussian_blur, apply_gaussian_noise, apply_jpeg, apply_motion_blur,
    build_dataset, derive_seed, gaussian_kernel, jpeg_quant_tables,
    rng_from_seed, trajectory_to_kernel, generate_trajectory, TrajectoryParams,
    BASE_TABLE_CHROMA, BASE_TABLE_LUMA,
)
from opattn.metrics import psnr, ssim
from opattn.model import Model, ModelConfig
from opattn.tensor import (
    Tensor, add, avg_pool_same, concat_channels, conv2d, dense_nobias,
    depthwise_conv2d, global_channel_mean, gradcheck, l1_loss, relu,
    scale_channels, softmax, take_column, take_row, tensor_sum,
)
from opattn.training import TrainConfig, restore_image, train
from opattn.training.checkpoint import load_checkpoint

from conftest import make_smooth_image
from oracles import avg_pool_ref, conv2d_ref, convolve2d_reflect_ref, depthwise_ref, rel_err


def check(num, desc, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


# --------------------------------------------------------------------------
# criterion 1: gradient suite
# --------------------------------------------------------------------------

def test_criterion_1_gradient_suite():
    start = time.monotonic()
    rng = np.random.default_rng(0)
    failures = []

    def run(name, fn, wrt):
        rep = gradcheck(fn, wrt, tol=1e-4, eps=1e-5)
        if not rep.passed:
            failures.append(f"{name}: {rep.max_rel_err:.2e}")

    x = Tensor(rng.normal(size=(1, 3, 6, 6)))
    w = Tensor(rng.normal(size=(2, 3, 3, 3)) * 0.5)
    b = Tensor(rng.normal(size=2))
    t = Tensor(rng.normal(size=(1, 2, 6, 6)))
    run("conv2d", lambda: l1_loss(conv2d(x, w, b, dilation=2), t), {"x": x, "w": w, "b": b})

    xd = Tensor(rng.normal(size=(1, 3, 6, 6)))
    wd = Tensor(rng.normal(size=(3, 5, 5)) * 0.3)
    td = Tensor(rng.normal(size=(1, 3, 6, 6)))
    run("depthwise", lambda: l1_loss(depthwise_conv2d(xd, wd, dilation=2), td),
        {"x": xd, "w": wd})

    xp = Tensor(rng.normal(size=(1, 2, 5, 5)))
    tp = Tensor(rng.normal(size=(1, 2, 5, 5)))
    run("avg_pool", lambda: l1_loss(avg_pool_same(xp), tp), {"x": xp})

    xr = Tensor(rng.normal(size=(3, 4)))
    xr.data[np.abs(xr.data) < 1e-3] += 0.1
    tr = Tensor(rng.normal(size=(3, 4)))
    run("relu", lambda: l1_loss(relu(xr), tr), {"x": xr})

    xm = Tensor(rng.normal(size=(2, 3, 4, 4)))
    tm = Tensor(rng.normal(size=(2, 3)))
    run("global_channel_mean", lambda: l1_loss(global_channel_mean(xm), tm), {"x": xm})

    wde = Tensor(rng.normal(size=(3, 4)))
    vde = Tensor(rng.normal(size=4))
    tde = Tensor(rng.normal(size=3))
    run("dense_nobias", lambda: l1_loss(dense_nobias(wde, vde), tde), {"w": wde, "v": vde})

    vs = Tensor(rng.normal(size=(2, 5)))
    ts = Tensor(rng.random((2, 5)))
    run("softmax", lambda: l1_loss(softmax(vs), ts), {"v": vs})

    xs = Tensor(rng.normal(size=(2, 2, 3, 3)))
    ss = Tensor(rng.normal(size=(2,)))
    tsc = Tensor(rng.normal(size=(2, 2, 3, 3)))
    run("scale_channels", lambda: l1_loss(scale_channels(xs, ss), tsc), {"x": xs, "s": ss})

    c1 = Tensor(rng.normal(size=(1, 2, 3, 3)))
    c2 = Tensor(rng.normal(size=(1, 3, 3, 3)))
    tc = Tensor(rng.normal(size=(1, 5, 3, 3)))
    run("concat_channels", lambda: l1_loss(concat_channels([c1, c2]), tc), {"a": c1, "b": c2})

    a1 = Tensor(rng.normal(size=(2, 3)))
    a2 = Tensor(rng.normal(size=(2, 3)))
    ta = Tensor(rng.normal(size=(2, 3)))
    run("add", lambda: l1_loss(add(a1, a2), ta), {"a": a1, "b": a2})

    lp = Tensor(rng.normal(size=(2, 4)) + 3.0)
    tz = Tensor(np.zeros((2, 4)))
    run("l1_loss", lambda: l1_loss(lp, tz), {"p": lp})
    xsum = Tensor(rng.normal(size=(3,)) + 2.0)
    run("tensor_sum", lambda: tensor_sum(relu(xsum)), {"x": xsum})

    m = Tensor(rng.normal(size=(3, 4)))
    trow = Tensor(rng.normal(size=4))
    tcol = Tensor(rng.normal(size=3))
    run("take_row", lambda: l1_loss(take_row(m, 1), trow), {"m": m})
    run("take_column", lambda: l1_loss(take_column(m, 2), tcol), {"m": m})

    # composed network, full 8-op bank
    cfg = ModelConfig(num_layers=4, group_size=4, channels=4, attn_hidden=4,
                      num_res_blocks=1, in_channels=3)
    model = Model.build(cfg, seed=1, dtype=np.float64)
    img = Tensor(rng.random((1, 3, 8, 8)))
    target = Tensor(rng.random((1, 3, 8, 8)))
    rep = gradcheck(lambda: l1_loss(model.forward(img)[0], target),
                    dict(model.params.items()), tol=1e-4, eps=1e-5)
    if not rep.passed:
        failures.append(f"network: {rep.max_rel_err:.2e}")

    elapsed = time.monotonic() - start
    check(1, "gradient suite (all ops + composed network, <= 1e-4, <= 2 min)",
          not failures and elapsed <= 120.0,
          f"{elapsed:.1f}s" + (f"; failures: {failures}" if failures else ""))


# --------------------------------------------------------------------------
# criterion 2: oracle suite
# --------------------------------------------------------------------------

def test_criterion_2_oracle_suite():
    worst = 0.0
    for case in range(50):
        rng = np.random.default_rng(1000 + case)
        n = int(rng.integers(1, 3))
        cin = int(rng.integers(1, 9))
        cout = int(rng.integers(1, 9))
        h, w = (int(v) for v in rng.integers(5, 17, size=2))
        f = int(rng.choice([1, 3, 5, 7]))
        dil = int(rng.integers(1, 3))
        x = rng.normal(size=(n, cin, h, w))
        wt = rng.normal(size=(cout, cin, f, f))
        bias = rng.normal(size=cout)
        got = conv2d(Tensor(x), Tensor(wt), Tensor(bias), dilation=dil).data
        worst = max(worst, rel_err(got, conv2d_ref(x, wt, bias, dilation=dil)))

        wdw = rng.normal(size=(cin, f, f))
        got = depthwise_conv2d(Tensor(x), Tensor(wdw), dilation=dil).data
        worst = max(worst, rel_err(got, depthwise_ref(x, wdw, dilation=dil)))

        got = avg_pool_same(Tensor(x)).data
        worst = max(worst, rel_err(got, avg_pool_ref(x)))

    for case in range(50):
        rng = np.random.default_rng(2000 + case)
        img = rng.random((int(rng.integers(12, 17)), int(rng.integers(12, 17)), 3))
        sigma = float(rng.uniform(0.3, 1.5))
        got = apply_gaussian_blur(img, sigma)
        k = gaussian_kernel(sigma)
        for c in range(3):
            expect = np.clip(convolve2d_reflect_ref(img[:, :, c], k), 0, 1)
            worst = max(worst, rel_err(got[:, :, c], expect))

        traj = generate_trajectory(TrajectoryParams(max_len=float(rng.uniform(2, 8))),
                                   rng_from_seed(int(rng.integers(0, 2**32))))
        psf = trajectory_to_kernel(traj, 3)
        got = apply_motion_blur(img, psf)
        for c in range(3):
            expect = np.clip(convolve2d_reflect_ref(img[:, :, c], psf), 0, 1)
            worst = max(worst, rel_err(got[:, :, c], expect))

    check(2, "brute-force oracle suite (conv/depthwise/pool/blur/motion, 50 cases each)",
          worst <= 1e-6, f"max rel err {worst:.2e}")


# --------------------------------------------------------------------------
# criterion 3: attention contracts
# --------------------------------------------------------------------------

def test_criterion_3_attention_contracts():
    cfg = ModelConfig(num_layers=4, group_size=4, channels=8, attn_hidden=8,
                      num_res_blocks=1, in_channels=3)
    ok = True
    total = 0
    for batch in range(10):
        model = Model.build(cfg, seed=batch, dtype=np.float64)
        rng = np.random.default_rng(batch)
        x_head = Tensor(rng.normal(size=(100, 8, 8, 8)) * rng.choice([0.1, 1.0, 10.0]))
        for wvec in model.group_attention(x_head, 0):
            sums = wvec.data.sum(axis=1)
            ok &= bool(np.all(np.abs(sums - 1.0) <= 1e-6))
            ok &= bool(np.all(wvec.data > 0.0))
        total += 100
    check(3, "attention weights normalized and strictly positive (1000 inputs)",
          ok and total == 1000)

    # group invariance: recompute after perturbing every post-head intermediate
    model = Model.build(cfg, seed=99, dtype=np.float64)
    rng = np.random.default_rng(99)
    x_head = Tensor(rng.normal(size=(3, 8, 8, 8)))
    base = [w.data.copy() for w in model.group_attention(x_head, 0)]
    x = x_head
    for j in range(cfg.group_size):
        x = model.attention_layer_forward(j, None, x)
        x = Tensor(x.data + 10.0 * rng.normal(size=x.shape))
    again = model.group_attention(x_head, 0)
    same = all(np.array_equal(b, a.data) for b, a in zip(base, again))
    check(3, "group attention invariant to post-head perturbations", same)


# --------------------------------------------------------------------------
# criterion 4: identity contract
# --------------------------------------------------------------------------

def test_criterion_4_zero_merge_identity():
    cfg = ModelConfig()  # full 40-layer default
    model = Model.build(cfg, seed=0)
    for l in range(cfg.num_layers):
        model.params[f"layer{l:03d}.merge.w"].data[:] = 0
        model.params[f"layer{l:03d}.merge.b"].data[:] = 0
    rng = np.random.default_rng(4)
    img = Tensor(rng.random((1, 3, 24, 24)).astype(np.float32))
    x0 = model.feature_extract(img)
    x = x0
    for g in range(cfg.num_groups):
        ws = model.group_attention(x, g)
        for j in range(cfg.group_size):
            x = model.attention_layer_forward(g * cfg.group_size + j, ws[j], x)
    dev = float(np.abs(x.data - x0.data).max())
    check(4, "zero merge convs make the 40-layer stack the exact identity",
          dev == 0.0, f"max abs deviation {dev}")


# --------------------------------------------------------------------------
# criterion 8: metrics
# --------------------------------------------------------------------------

def test_criterion_8_metrics():
    rng = np.random.default_rng(8)
    img = rng.random((32, 32, 3))
    ssim_ok = abs(ssim(img, img.copy()) - 1.0) <= 1e-9

    a = np.full((64, 64, 3), 0.25)
    p = psnr(a, a + 1.0 / 255.0)
    psnr_ok = abs(p - 48.13) <= 0.01

    smooth = make_smooth_image(np.random.default_rng(88), 48, 40, texture=0.0)
    jerr = np.abs(apply_jpeg(smooth, 100) - smooth).max()
    jpeg_ok = jerr <= 2.0 / 255.0

    luma, chroma = jpeg_quant_tables(50)
    tables_ok = np.array_equal(luma, BASE_TABLE_LUMA) and np.array_equal(chroma, BASE_TABLE_CHROMA)

    check(8, "metrics pinned (ssim self=1, psnr 1/255=48.13, jpeg q100<=2/255, q50 tables)",
          ssim_ok and psnr_ok and jpeg_ok and tables_ok,
          f"psnr={p:.4f}, jpeg max err={jerr * 255:.3f}/255")


# --------------------------------------------------------------------------
# criterion 10: analysis pipeline on hand-built records
# --------------------------------------------------------------------------

def test_criterion_10_analysis_exact():
    from opattn.analysis import diff_maps, stats
    from opattn.model import AttentionRecord

    def recs(sid, mat):
        return [AttentionRecord(sid, l + 1, o + 1, mat[l][o])
                for l in range(2) for o in range(2)]

    tag_a = recs("a1", [[0.8, 0.2], [0.6, 0.4]]) + recs("a2", [[0.6, 0.4], [0.6, 0.4]])
    tag_b = recs("b1", [[0.2, 0.8], [0.5, 0.5]])
    sa = stats(tag_a, "a")
    sb = stats(tag_b, "b")
    mean_a = np.array([[0.7, 0.3], [0.6, 0.4]])
    var_a = np.array([[0.01, 0.01], [0.0, 0.0]])
    mean_b = np.array([[0.2, 0.8], [0.5, 0.5]])
    pooled = (2 * mean_a + 1 * mean_b) / 3
    d = diff_maps([sa, sb])
    ok = (np.allclose(sa.mean, mean_a, atol=1e-12)
          and np.allclose(sa.variance, var_a, atol=1e-12)
          and np.allclose(sb.mean, mean_b, atol=1e-12)
          and np.allclose(sb.variance, 0.0, atol=1e-12)
          and np.allclose(d["a"], np.abs(mean_a - pooled), atol=1e-12)
          and np.allclose(d["b"], np.abs(mean_b - pooled), atol=1e-12))
    check(10, "collect->stats->diff reproduces hand-computed matrices at 1e-12", ok)


# --------------------------------------------------------------------------
# criterion 9: determinism of the full workflows
# --------------------------------------------------------------------------

def _digest_tree(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_criterion_9_determinism(tmp_path):
    from opattn.cli import main

    src = tmp_path / "src"
    rng = np.random.default_rng(9)
    for i in range(2):
        pngio.write_image(src / f"img{i}.png", make_smooth_image(rng, 40, 40))

    synth = ["synth", "--protocol", "mixed", "--in", str(src), "--count", "4",
             "--patch-size", "16", "--seed", "7"]
    assert main(synth + ["--out", str(tmp_path / "ds1")]) == 0
    assert main(synth + ["--out", str(tmp_path / "ds2")]) == 0
    synth_ok = _digest_tree(tmp_path / "ds1") == _digest_tree(tmp_path / "ds2")

    cfg_text = """
epochs = 4
batch_size = 4
seed = 2
checkpoint_every = 4
num_layers = 2
group_size = 2
channels = 4
attn_hidden = 4
num_res_blocks = 1
ops = sep1,sep3,dsep3,pool3
attention_mode = learned
"""
    ckpts = []
    for name in ("t1", "t2"):
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(f"data_dir = {tmp_path / 'ds1'}\nout_dir = {tmp_path / name}\n" + cfg_text)
        assert main(["train", "--config", str(cfg)]) == 0
        ckpts.append(tmp_path / name / "final.ckpt")
    train_ok = ckpts[0].read_bytes() == ckpts[1].read_bytes()

    # resume from the mid-run checkpoint must equal the uninterrupted run
    mid = tmp_path / "t1" / "checkpoint_00000004.ckpt"
    cfg = tmp_path / "resume.cfg"
    cfg.write_text(f"data_dir = {tmp_path / 'ds1'}\nout_dir = {tmp_path / 't3'}\n" + cfg_text)
    import shutil
    (tmp_path / "t3").mkdir()
    shutil.copy(tmp_path / "t1" / "loss_log.csv", tmp_path / "t3" / "loss_log.csv")
    assert main(["train", "--config", str(cfg), "--resume", str(mid)]) == 0
    resume_ok = (tmp_path / "t3" / "final.ckpt").read_bytes() == ckpts[0].read_bytes()

    for name in ("r1", "r2"):
        assert main(["restore", "--ckpt", str(ckpts[0]), "--in",
                     str(tmp_path / "ds1" / "distorted"), "--out",
                     str(tmp_path / name)]) == 0
    restore_ok = _digest_tree(tmp_path / "r1") == _digest_tree(tmp_path / "r2")

    for name in ("a1.csv", "a2.csv"):
        assert main(["analyze", "--ckpt", str(ckpts[0]), "--data",
                     str(tmp_path / "ds1"), "--tag", "mix", "--out",
                     str(tmp_path / name)]) == 0
    analyze_ok = (tmp_path / "a1.csv").read_bytes() == (tmp_path / "a2.csv").read_bytes()

    check(9, "synth/train/restore/analyze byte-identical; resume == uninterrupted",
          synth_ok and train_ok and resume_ok and restore_ok and analyze_ok,
          f"synth={synth_ok} train={train_ok} resume={resume_ok} "
          f"restore={restore_ok} analyze={analyze_ok}")


# --------------------------------------------------------------------------
# criterion 5: tiny overfit run
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_overfit(tmp_path):
    start = time.monotonic()
    rng = np.random.default_rng(5)
    pairs = []
    for i in range(8):
        clean = make_smooth_image(rng, 32, 32)
        noisy = apply_gaussian_noise(clean, 25.0, rng_from_seed(derive_seed(5, i)))
        pngio.write_image(tmp_path / "data" / "clean" / f"{i:03d}.png", clean)
        pngio.write_image(tmp_path / "data" / "distorted" / f"{i:03d}.png", noisy)
        pairs.append((pngio.read_image(tmp_path / "data" / "clean" / f"{i:03d}.png"),
                      pngio.read_image(tmp_path / "data" / "distorted" / f"{i:03d}.png")))

    cfg = TrainConfig(
        data_dir=str(tmp_path / "data"), out_dir=str(tmp_path / "run"),
        epochs=2000, batch_size=8, seed=0, checkpoint_every=10 ** 9,
        model=ModelConfig(num_layers=4, group_size=4, channels=16, attn_hidden=32,
                          num_res_blocks=2, in_channels=3))
    result = train(cfg)
    losses = [r[2] for r in result.rows]
    final_l1 = float(np.mean(losses[-50:]))

    model = load_checkpoint(result.checkpoint_path).build_model()
    base, restored = [], []
    for clean, noisy in pairs:
        out, _ = restore_image(model, noisy)
        base.append(psnr(clean, noisy))
        restored.append(psnr(clean, out))
    gain = float(np.mean(restored) - np.mean(base))
    elapsed = time.monotonic() - start
    check(5, "overfit: train L1 < 0.03 and PSNR gain >= 2 dB in 2000 steps (<= 30 min)",
          final_l1 < 0.03 and gain >= 2.0 and elapsed <= 1800.0,
          f"L1={final_l1:.4f}, gain={gain:+.2f} dB, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# criteria 6 & 7: desk-scale generalization and ablation direction
# --------------------------------------------------------------------------

DESK_SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    """Train learned- and none-attention models on 200 mixed-distortion 64x64
    patches for 50 epochs, 3 seeds each; collect held-out metrics."""
    root = tmp_path_factory.mktemp("desk")
    rng = np.random.default_rng(6)
    train_src, test_src = root / "train_src", root / "test_src"
    for i in range(50):
        pngio.write_image(train_src / f"t{i:03d}.png", make_smooth_image(rng, 96, 96))
    for i in range(25):
        pngio.write_image(test_src / f"h{i:03d}.png", make_smooth_image(rng, 96, 96))

    build_dataset(train_src, root / "train_ds", "mixed", master_seed=61,
                  patches_per_image=4, patch_size=64)
    build_dataset(test_src, root / "test_ds", "mixed", master_seed=62,
                  patches_per_image=2, patch_size=64)

    test_pairs = []
    for p in sorted((root / "test_ds" / "clean").iterdir()):
        test_pairs.append((pngio.read_image(p),
                           pngio.read_image(root / "test_ds" / "distorted" / p.name)))
    assert len(test_pairs) == 50
    base_psnr = float(np.mean([psnr(c, d) for c, d in test_pairs]))

    results = {}
    for mode in ("learned", "none"):
        for seed in DESK_SEEDS:
            cfg = TrainConfig(
                data_dir=str(root / "train_ds"),
                out_dir=str(root / f"run_{mode}_{seed}"),
                epochs=50, batch_size=16, seed=seed, checkpoint_every=10 ** 9,
                model=ModelConfig(num_layers=8, channels=16, attention_mode=mode))
            t0 = time.monotonic()
            result = train(cfg)
            model = load_checkpoint(result.checkpoint_path).build_model()
            psnrs, l1s = [], []
            for clean, dist in test_pairs:
                out, _ = restore_image(model, dist)
                psnrs.append(psnr(clean, out))
                l1s.append(np.abs(out - clean).sum())
            results[(mode, seed)] = {
                "psnr": float(np.mean(psnrs)),
                "l1": float(np.mean(l1s)),
                "minutes": (time.monotonic() - t0) / 60.0,
            }
            print(f"  desk run {mode}/seed{seed}: held-out PSNR "
                  f"{results[(mode, seed)]['psnr']:.2f} dB "
                  f"(base {base_psnr:.2f}), {results[(mode, seed)]['minutes']:.1f} min",
                  flush=True)
    return {"base_psnr": base_psnr, "runs": results}


@pytest.mark.slow
def test_criterion_6_generalization(desk_runs):
    base = desk_runs["base_psnr"]
    gains = [desk_runs["runs"][("learned", s)]["psnr"] - base for s in DESK_SEEDS]
    passing = sum(g >= 1.0 for g in gains)
    check(6, "held-out PSNR gain >= 1 dB on >= 2 of 3 seeds (L=8, 200 patches, 50 epochs)",
          passing >= 2, "gains: " + ", ".join(f"{g:+.2f}" for g in gains))


@pytest.mark.slow
def test_criterion_7_ablation_direction(desk_runs):
    wins = []
    for s in DESK_SEEDS:
        learned = desk_runs["runs"][("learned", s)]["l1"]
        none = desk_runs["runs"][("none", s)]["l1"]
        wins.append(learned <= none)
    check(7, "learned attention held-out L1 <= none-attention on >= 2 of 3 seeds",
          sum(wins) >= 2, f"wins: {wins}")
