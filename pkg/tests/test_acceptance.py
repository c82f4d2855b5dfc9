"""Acceptance gate: one printed pass/fail line per criterion.

Each test prints `[PASS]`/`[FAIL] <criterion>: <measured numbers>` outside
pytest's capture so the line always reaches the console, then asserts.
Thresholds and sizes are stated inline; training configs are desk-scale.
"""

import dataclasses
import math
import struct
import time

import numpy as np
import pytest

from dtihead.data import (
    SPLIT_TRAIN,
    SyntheticConfig,
    binarize_labels,
    generate_synthetic,
    load_store,
    make_batches,
    save_store,
)
from dtihead.errors import StoreFormatError, StoreValidationError
from dtihead.metrics import aupr, auroc, export_distance_curve, pcc
from dtihead.model import (
    Gradients,
    cosine_distance,
    forward_pairs,
    grad_check_sweep,
    random_params,
)
from dtihead.objectives import bce_logit_loss, huber_loss, triplet_loss
from dtihead.optim import OptimState, apply_update, init_optim_state, lr_at
from dtihead.training import (
    RunConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

_CACHE = {}


def announce(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def recovery_run():
    """Shared by the recovery and curve criteria: train once."""
    if "recovery" not in _CACHE:
        cfg = SyntheticConfig(n_drugs=200, n_prots=50, records_per_prot=40,
                              noise=0.0, emb_noise=0.0, mod_strength=0.0)
        store = generate_synthetic(cfg, seed=11)
        rc = RunConfig(epochs=80, batch_size=24, peak_lr=5e-3,
                       warmup_steps=300, weight_decay=0.01, d_shared=32,
                       k=16, seed=7, triplet_weight=0.2)
        t0 = time.perf_counter()
        ckpt, _ = train(store, rc)
        elapsed = time.perf_counter() - t0
        _CACHE["recovery"] = (store, ckpt, elapsed)
    return _CACHE["recovery"]


class TestAcceptance:
    def test_01_gradient_correctness(self, capsys):
        t0 = time.perf_counter()
        worst = grad_check_sweep(n_seeds=100, d_drug=5, d_prot=5,
                                 d_shared=4, k=4, step=1e-5)
        elapsed = time.perf_counter() - t0
        peak = max(worst.values())
        ok = peak < 1e-4 and elapsed < 10.0
        announce(capsys, "gradient-correctness", ok,
                 f"100 seeds, max_rel_err={peak:.2e} (<1e-4), "
                 f"regression={worst['regression']:.2e}, "
                 f"classification={worst['classification']:.2e}, "
                 f"runtime={elapsed:.1f}s (<10s)")

    def test_02_closed_form_examples(self, capsys):
        checks = []
        u = np.array([1.0, 0.0, 0.0])
        checks.append(cosine_distance(u, u) == 0.0)
        checks.append(cosine_distance(u, np.array([0.0, 1.0, 0.0])) == 1.0)
        checks.append(cosine_distance(u, -u) == 2.0)

        # Huber branch continuity at |r| = delta: both forms give d^2/2, d
        delta = 0.5
        loss, grad = huber_loss(delta, 0.0, delta)
        checks.append(loss == 0.5 * delta * delta and grad == delta)
        inner, _ = huber_loss(delta - 1e-12, 0.0, delta)
        outer, _ = huber_loss(delta + 1e-12, 0.0, delta)
        checks.append(abs(inner - loss) < 1e-11 and abs(outer - loss) < 1e-11)

        checks.append(triplet_loss(0.1, 1.5, 0.9) == (0.0, 0.0, 0.0))
        checks.append(triplet_loss(0.5, 0.9, 0.9) == (0.5, 1.0, -1.0))
        checks.append(triplet_loss(0.4, 1.3, 0.9) == (0.0, 0.0, 0.0))

        sched = OptimState(total_steps=1000, warmup_steps=100, peak_lr=3e-4,
                           m=None, v=None)
        checks.append(lr_at(0, sched) == 0.0)
        checks.append(lr_at(100, sched) == 3e-4)
        checks.append(lr_at(1000, sched) == 0.0)

        params = random_params(3, 3, 2, 2, seed=0)
        state = init_optim_state(params, total_steps=10**12, peak_lr=0.1,
                                 warmup_steps=0)
        grads = Gradients.zeros_like(params)
        grads.head_b = 1.0
        stepped, _ = apply_update(params, grads, state)
        want = params.head_b - 0.1 * 1.0 / (1.0 + 1e-6)
        checks.append(stepped.head_b == want)

        loss0, grad0 = bce_logit_loss(0.0, 1.0)
        checks.append(loss0 == math.log(2.0) and grad0 == -0.5)

        ok = all(checks)
        announce(capsys, "closed-form-examples", ok,
                 f"{sum(checks)}/{len(checks)} exact checks "
                 "(cosine endpoints, Huber boundary, triplet hinge, "
                 "lr schedule endpoints, first optimizer step, BCE at 0)")

    def test_03_metric_oracles(self, capsys):
        rng = np.random.default_rng(77)
        worst_auroc = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, size=n).astype(np.float64)
            if labels.min() == labels.max():
                labels[0] = 1.0 - labels[0]
            if rng.random() < 0.5:
                scores = rng.integers(0, 5, size=n).astype(np.float64)
            else:
                scores = rng.normal(size=n)
            got = auroc(labels, scores)
            pos = scores[labels == 1.0]
            neg = scores[labels == 0.0]
            wins = np.sum(pos[:, None] > neg[None, :])
            ties = np.sum(pos[:, None] == neg[None, :])
            want = (wins + 0.5 * ties) / (pos.size * neg.size)
            worst_auroc = max(worst_auroc, abs(got - want))

        # hand-swept step-curve values on enumerated orderings
        desc = np.array([4.0, 3.0, 2.0, 1.0])
        aupr_cases = [
            (np.array([1.0, 1.0, 0.0, 0.0]), desc, 1.0),
            (np.array([0.0, 0.0, 1.0, 1.0]), desc, 5.0 / 12.0),
            (np.array([1.0, 0.0, 1.0, 0.0]), desc, 5.0 / 6.0),
            (np.array([1.0, 1.0, 1.0, 0.0, 0.0]), np.ones(5), 3.0 / 5.0),
        ]
        worst_aupr = max(abs(aupr(lab, sc) - want)
                         for lab, sc, want in aupr_cases)

        worst_pcc = 0.0
        for _ in range(200):
            n = int(rng.integers(3, 201))
            x = rng.normal(size=n)
            y = 0.5 * x + rng.normal(size=n)
            got = pcc(x, y)
            sx, sy = np.sum(x), np.sum(y)
            num = n * np.sum(x * y) - sx * sy
            den = math.sqrt(n * np.sum(x * x) - sx * sx) * \
                math.sqrt(n * np.sum(y * y) - sy * sy)
            worst_pcc = max(worst_pcc, abs(got - num / den))

        ok = worst_auroc <= 1e-12 and worst_aupr <= 1e-12 and \
            worst_pcc <= 1e-12
        announce(capsys, "metric-oracles", ok,
                 f"auroc max|diff|={worst_auroc:.1e} over 1000 instances, "
                 f"aupr max|diff|={worst_aupr:.1e} on enumerated cases, "
                 f"pcc max|diff|={worst_pcc:.1e} (all <=1e-12)")

    def test_04_synthetic_recovery(self, capsys):
        store, ckpt, elapsed = recovery_run()
        test_pcc = evaluate(ckpt, store, "test").pcc
        ok = test_pcc >= 0.95 and elapsed < 60.0
        announce(capsys, "synthetic-recovery", ok,
                 f"200x50 noise-free store, 2000 pairs, 80 epochs: "
                 f"test_pcc={test_pcc:.4f} (>=0.95), "
                 f"train_time={elapsed:.1f}s (<60s)")

    def test_05_ablation_ordering(self, capsys):
        cfg = SyntheticConfig(n_drugs=120, n_prots=30, records_per_prot=12,
                              noise=0.25, emb_noise=0.01, mod_strength=1.3,
                              domain_shift=True, shift_strength=0.8,
                              interaction_quantile=0.2)
        means = {}
        for ablation in ("full", "no_film", "no_triplet"):
            vals = []
            for seed in range(5):
                store = generate_synthetic(cfg, seed=100 + seed)
                rc = RunConfig(epochs=100, batch_size=24, peak_lr=5e-3,
                               warmup_steps=200, weight_decay=0.01,
                               d_shared=32, k=16, seed=seed,
                               ablation=ablation, triplet_weight=1.0)
                ckpt, _ = train(store, rc)
                vals.append(evaluate(ckpt, store, "test").pcc)
            means[ablation] = float(np.mean(vals))
        d1 = means["full"] - means["no_film"]
        d2 = means["no_film"] - means["no_triplet"]
        ok = d1 >= 0.02 and d2 >= 0.05
        announce(capsys, "ablation-ordering", ok,
                 f"mean test_pcc over 5 seeds: full={means['full']:.3f} "
                 f">= no_film={means['no_film']:.3f}+0.02 "
                 f">= no_triplet={means['no_triplet']:.3f}+0.05 "
                 f"(gaps {d1:+.3f}, {d2:+.3f})")

    def test_06_distance_curve(self, capsys):
        store, ckpt, _ = recovery_run()
        idx = store.split_record_indices(2)
        Z_d = store.drug_matrix[store.rec_drug[idx]].astype(np.float64)
        Z_t = store.prot_matrix[store.rec_prot[idx]].astype(np.float64)
        bt = forward_pairs(ckpt.params, Z_d, Z_t)
        preds = bt.pred * ckpt.label_std + ckpt.label_mean

        curve = export_distance_curve(ckpt.params, n_points=201,
                                      label_mean=ckpt.label_mean,
                                      label_std=ckpt.label_std)
        at_dist = np.interp(bt.dist, curve[:, 0], curve[:, 1])
        corr = pcc(at_dist, preds)

        # one Gaussian bump's slope is bounded by |w| e^{-1/2} / sigma
        grid_step = curve[1, 0] - curve[0, 0]
        w_inf = float(np.max(np.abs(ckpt.params.head_w)))
        bump = ckpt.params.k * w_inf * math.exp(-0.5) / ckpt.params.rbf_sigma
        bound = 5.0 * bump * grid_step * ckpt.label_std
        max_jump = float(np.max(np.abs(np.diff(curve[:, 1]))))

        ok = corr >= 0.999 and max_jump < bound and \
            bool(np.all(np.isfinite(curve)))
        announce(capsys, "distance-curve", ok,
                 f"corr(curve@test_distances, test_preds)={corr:.6f} "
                 f"(>=0.999), max_jump={max_jump:.4f} < bound={bound:.4f}")

    def test_07_determinism_and_resume(self, capsys, tmp_path):
        cfg = SyntheticConfig(n_drugs=30, n_prots=8, records_per_prot=15,
                              d_drug=12, d_prot=10, d_latent=4)
        store = generate_synthetic(cfg, seed=3)
        rc = RunConfig(epochs=3, batch_size=16, peak_lr=1e-3,
                       warmup_steps=2, d_shared=8, k=6, seed=1)
        a, _ = train(store, rc)
        b, _ = train(store, rc)
        save_checkpoint(a, str(tmp_path / "a.fdtc"))
        save_checkpoint(b, str(tmp_path / "b.fdtc"))
        same_bytes = (tmp_path / "a.fdtc").read_bytes() == \
            (tmp_path / "b.fdtc").read_bytes()

        half, _ = train(store, rc, stop_after_epoch=1)
        save_checkpoint(half, str(tmp_path / "half.fdtc"))
        resumed, _ = train(store, rc,
                           resume=load_checkpoint(str(tmp_path / "half.fdtc")))
        resume_equal = (
            np.array_equal(a.params.to_vector(), resumed.params.to_vector())
            and np.array_equal(a.optim.m.to_vector(),
                               resumed.optim.m.to_vector())
            and np.array_equal(a.optim.v.to_vector(),
                               resumed.optim.v.to_vector())
        )
        ok = same_bytes and resume_equal
        announce(capsys, "determinism-and-resume", ok,
                 f"identical runs byte-equal={same_bytes}, "
                 f"resume-at-epoch-1 bitwise-equal={resume_equal}")

    def test_08_classification_mode(self, capsys):
        cfg = SyntheticConfig(n_drugs=200, n_prots=50, records_per_prot=40,
                              noise=0.0, emb_noise=0.0, mod_strength=0.0)
        store = generate_synthetic(cfg, seed=21)
        cut = float(np.quantile(store.rec_label, 0.6))
        binary = binarize_labels(store, threshold=cut, positive_below=False)
        rc = RunConfig(mode="classification", epochs=60, batch_size=24,
                       peak_lr=5e-3, warmup_steps=300, weight_decay=0.01,
                       d_shared=32, k=16, seed=5, triplet_weight=0.2)
        ckpt, _ = train(binary, rc)
        report = evaluate(ckpt, binary, "test")

        def neg_map(epoch):
            out = {}
            for batch in make_batches(binary, SPLIT_TRAIN, 24, seed=5,
                                      epoch=epoch):
                for a, p, n in zip(batch.trip_anchor_prot,
                                   batch.trip_pos_drug,
                                   batch.trip_neg_drug):
                    out.setdefault((int(a), int(p)), set()).add(int(n))
            return out

        m0, m1 = neg_map(0), neg_map(1)
        resampled = sum(1 for key in m0 if key in m1 and m0[key] != m1[key])
        ok = report.auroc >= 0.95 and report.aupr >= 0.90 and resampled > 0
        announce(capsys, "classification-mode", ok,
                 f"60 epochs (<=100): auroc={report.auroc:.4f} (>=0.95), "
                 f"aupr={report.aupr:.4f} (>=0.90), "
                 f"{resampled} anchors drew different negatives across epochs")

    def test_09_format_robustness(self, capsys, tmp_path):
        cfg = SyntheticConfig(n_drugs=2, n_prots=1, records_per_prot=2,
                              d_drug=3, d_prot=2, d_latent=2)
        store = generate_synthetic(cfg, seed=9)
        good_path = tmp_path / "good.fdti"
        save_store(store, str(good_path))
        buf = bytearray(good_path.read_bytes())

        ids_len = sum(2 + len(i.encode()) for i in store.drug_ids) + \
            sum(2 + len(i.encode()) for i in store.prot_ids)
        mat_off = 40 + ids_len
        rec_off = mat_off + 4 * (store.n_drugs * store.d_drug
                                 + store.n_prots * store.d_prot)

        def mutate(tag, expected, edit):
            bad = bytearray(buf)
            edit(bad)
            path = tmp_path / f"{tag}.fdti"
            path.write_bytes(bytes(bad))
            try:
                load_store(str(path))
            except Exception as exc:
                return type(exc) is expected
            return False

        def set_u32(b, off, v):
            b[off : off + 4] = struct.pack("<I", v)

        nan32 = struct.pack("<f", float("nan"))
        cases = [
            ("bad-magic", StoreFormatError,
             lambda b: b.__setitem__(slice(0, 4), b"XXXX")),
            ("bad-version", StoreFormatError, lambda b: set_u32(b, 4, 9)),
            ("reserved-bits", StoreFormatError,
             lambda b: b.__setitem__(36, 1)),
            ("truncated-matrix", StoreFormatError,
             lambda b: b.__delitem__(slice(mat_off + 4, len(b)))),
            ("trailing-bytes", StoreFormatError,
             lambda b: b.extend(b"\x00")),
            ("non-utf8-id", StoreFormatError,
             lambda b: b.__setitem__(slice(42, 44), b"\xff\xfe")),
            ("record-count-overrun", StoreFormatError,
             lambda b: b.__setitem__(slice(24, 32), struct.pack("<Q", 99))),
            ("out-of-range-index", StoreValidationError,
             lambda b: set_u32(b, rec_off, 99)),
            ("nan-embedding", StoreValidationError,
             lambda b: b.__setitem__(slice(mat_off, mat_off + 4), nan32)),
            ("bad-split-tag", StoreValidationError,
             lambda b: b.__setitem__(rec_off + 12, 7)),
        ]
        results = [(tag, mutate(tag, expected, edit))
                   for tag, expected, edit in cases]
        n_ok = sum(1 for _, good in results if good)
        failed = [tag for tag, good in results if not good]
        ok = n_ok == 10 and load_store(str(good_path)).n_records == \
            store.n_records
        announce(capsys, "format-robustness", ok,
                 f"{n_ok}/10 crafted corruptions rejected with the exact "
                 f"expected error class"
                 + (f"; failed: {failed}" if failed else ""))
