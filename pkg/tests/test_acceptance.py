"""Acceptance suite: one summary line per criterion, printed at the end of the run.

Training criteria need ``DEFRAG_DATA_DIR``; the full-scale ones also need ``--runslow``.
"""

import time

import numpy as np
import pytest

from conftest import DATA_DIR, record_criterion, synthetic_digits
from defrag import cli, grassmann, losses, metrics, oracles
from defrag import tensor as T
from defrag.config import RunConfig
from defrag.errors import DegeneracyError
from defrag.gradcheck import check_gradients
from defrag.model import build_model
from defrag.selftest import GRAD_TOL, _away_from_zero, gradient_checks
from defrag.train import load_datasets, train

INSTANCES = 20
EPOCHS = 10
SEEDS = (0, 1, 2)

# ---------------------------------------------------------------------------
# 1. gradients
# ---------------------------------------------------------------------------


def primitive_cases(rng):
    nonzero = lambda shape: _away_from_zero(rng, shape)
    positive = lambda shape: rng.uniform(0.5, 2.0, size=shape)
    labels = rng.integers(0, 5, size=4)
    mask = rng.random((4, 5)) < 0.6
    mask[np.arange(4), labels] = True

    def spaced(shape):
        # distinct row entries so the minimiser is unambiguous
        base = np.argsort(rng.random(shape), axis=1).astype(float)
        return base + rng.uniform(-0.3, 0.3, size=shape)

    return {
        "add": (T.add, [rng.normal(size=(3, 4)), rng.normal(size=(4,))]),
        "sub": (T.sub, [rng.normal(size=(3, 1)), rng.normal(size=(3, 4))]),
        "mul": (T.mul, [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        "div": (T.div, [rng.normal(size=(3, 4)), positive((3, 4))]),
        "power": (lambda a: T.power(a, 1.5), [positive((3, 4))]),
        "square": (T.square, [rng.normal(size=(3, 4))]),
        "abs": (T.tabs, [nonzero((3, 4))]),
        "sum": (lambda a: T.tsum(a, axis=1), [rng.normal(size=(3, 4))]),
        "mean": (lambda a: T.mean(a, axis=0), [rng.normal(size=(3, 4))]),
        "reshape": (lambda a: T.reshape(a, (2, 6)), [rng.normal(size=(3, 4))]),
        "pick": (lambda a: T.pick(a, labels), [rng.normal(size=(4, 5))]),
        "masked_row_min": (lambda a: T.masked_row_min(a, mask), [spaced((4, 5))]),
    }


def test_criterion_1_gradients():
    started = time.perf_counter()
    worst = {}
    for check in gradient_checks(instances=INSTANCES, seed=11):
        worst[check.name] = float(check.detail.split()[3].rstrip(","))
    rng = np.random.default_rng(12)
    for _ in range(INSTANCES):
        for name, (fn, inputs) in primitive_cases(rng).items():
            worst[name] = max(worst.get(name, 0.0), max(check_gradients(fn, inputs, seed=int(rng.integers(1 << 30)))))
    for _ in range(INSTANCES):
        x = rng.normal(size=(6, 3))
        y = rng.integers(0, 3, size=6)
        bank = losses.CenterBank.from_centers(rng.normal(size=(3, 3)))
        combo = lambda t: losses.combined_loss(losses.l2_reg(t), losses.center_loss(t, y, bank), 0.3)
        worst["combined_loss"] = max(worst.get("combined_loss", 0.0), max(check_gradients(combo, [x])))
    seconds = time.perf_counter() - started
    bad = {k: v for k, v in worst.items() if v >= GRAD_TOL}
    passed = not bad and seconds < 120
    detail = (
        f"{len(worst)} ops/losses x {INSTANCES} instances, worst rel err {max(worst.values()):.1e} "
        f"(limit 1e-04) in {seconds:.0f}s" + (f"; failing: {bad}" if bad else "")
    )
    assert record_criterion(1, "gradient correctness", passed, detail)


# ---------------------------------------------------------------------------
# 2. retraction
# ---------------------------------------------------------------------------


def test_criterion_2_retraction():
    rng = np.random.default_rng(21)
    started = time.perf_counter()
    worst = dict(ortho=0.0, idempotence=0.0, scale=0.0, polar=0.0)
    for _ in range(100):
        m = rng.normal(size=(256, 8))
        r = grassmann.retract(m)
        worst["ortho"] = max(worst["ortho"], grassmann.orthonormality_error(r))
        worst["idempotence"] = max(worst["idempotence"], np.linalg.norm(grassmann.retract(r) - r))
        scale = float(rng.uniform(1e-3, 1e3))
        worst["scale"] = max(worst["scale"], np.linalg.norm(grassmann.retract(scale * m) - r))
        worst["polar"] = max(worst["polar"], np.linalg.norm(r - oracles.polar_factor(m)))
    seconds = time.perf_counter() - started
    limits = dict(ortho=1e-10, idempotence=1e-10, scale=1e-10, polar=1e-9)
    passed = all(worst[k] < limits[k] for k in limits) and seconds < 10
    detail = ", ".join(f"{k} {v:.1e}<{limits[k]:.0e}" for k, v in worst.items()) + f"; {seconds:.1f}s"
    assert record_criterion(2, "retraction correctness, 100 random 256x8", passed, detail)


# ---------------------------------------------------------------------------
# 3. loss oracles
# ---------------------------------------------------------------------------


def test_criterion_3_loss_oracles():
    rng = np.random.default_rng(31)
    worst = dict(center=0.0, contrastive_center=0.0, silhouette=0.0)
    for _ in range(200):
        m, d = int(rng.integers(1, 65)), int(rng.integers(1, 17))
        x = rng.normal(size=(m, d)) * rng.uniform(0.1, 5)
        y = rng.integers(0, 10, size=m)
        c = rng.normal(size=(10, d))
        bank = losses.CenterBank.from_centers(c)
        pairs = {
            "center": (losses.center_loss(x, y, bank), oracles.center_loss_loop(x, y, c)),
            "contrastive_center": (
                losses.contrastive_center_loss(x, y, bank, 1e-6),
                oracles.contrastive_center_loss_loop(x, y, c, 1e-6),
            ),
            "silhouette": (losses.silhouette_loss(x, y, bank, 1e-6), oracles.silhouette_loss_loop(x, y, c, 1e-6)),
        }
        for k, (fast, slow) in pairs.items():
            # float64 cannot resolve 1e-12 absolute on values above ~1e4, so the bound scales with the loss
            worst[k] = max(worst[k], abs(fast.item() - slow) / max(1.0, abs(slow)))
    passed = all(v < 1e-12 for v in worst.values())
    detail = (
        "200 batches, m<=64 k=10 d<=16, error / max(1, |oracle|): "
        + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
        + " (limit 1e-12)"
    )
    assert record_criterion(3, "loss-oracle equivalence", passed, detail)


# ---------------------------------------------------------------------------
# training helpers
# ---------------------------------------------------------------------------

needs_data = pytest.mark.skipif(not DATA_DIR, reason="set DEFRAG_DATA_DIR to run training criteria")


def fit(dataset, method, seed=0, d_feat=8, train_n=0, test_n=0, epochs=EPOCHS):
    """Train with default hyperparameters and measure test accuracy plus clustering metrics once at the end."""
    cfg = RunConfig(
        dataset=dataset, data_dir=DATA_DIR, method=method, seed=seed, d_feat=d_feat,
        train_n=train_n, test_n=test_n, epochs=epochs,
    )
    train_set, test_set = load_datasets(cfg)
    started = time.perf_counter()
    model, _ = train(cfg, train_set, None)
    dump = metrics.extract_features(model, test_set)
    try:
        ratio = metrics.distance_ratio(dump)
    except DegeneracyError:
        # every test sample mapped to one point: the run collapsed and the ratio is undefined
        ratio = float("nan")
    return dict(
        seed=seed,
        accuracy=metrics.accuracy(model, test_set),
        silhouette_loss=metrics.silhouette_loss_metric(dump, cfg.delta),
        distance_ratio=ratio,
        collapsed=bool(np.ptp(dump.features, axis=0).max() == 0.0),
        minutes=(time.perf_counter() - started) / 60,
    )


def summary(runs, key):
    return float(np.mean([r[key] for r in runs]))


def per_seed(name, runs):
    cells = [
        f"s{r['seed']} acc {r['accuracy']:.4f} sil {r['silhouette_loss']:.3g} ratio {r['distance_ratio']:.3g}"
        + (" COLLAPSED" if r["collapsed"] else "")
        for r in runs
    ]
    return f"{name} [" + "; ".join(cells) + "]"


# ---------------------------------------------------------------------------
# 4. MNIST desk scale
# ---------------------------------------------------------------------------

SOFTPLUS_D_FEAT = 8


@needs_data
def test_criterion_4_mnist_10k_subset():
    run = fit("mnist", "linear", train_n=10000)
    passed = run["accuracy"] >= 0.95 and run["minutes"] < 10
    detail = f"linear, 10k train, {EPOCHS} epochs: test acc {run['accuracy']:.4f} (>= 0.95) in {run['minutes']:.1f} min (< 10)"
    assert record_criterion("4a", "MNIST 10k-subset variant", passed, detail)


@needs_data
@pytest.mark.slow
def test_criterion_4_mnist_full():
    linear = fit("mnist", "linear", d_feat=SOFTPLUS_D_FEAT)
    softplus = fit("mnist", "softplus", d_feat=SOFTPLUS_D_FEAT)
    gap = linear["accuracy"] - softplus["accuracy"]
    passed = linear["accuracy"] >= 0.985 and gap >= 0.02
    detail = (
        f"60k train, {EPOCHS} epochs, d_feat={SOFTPLUS_D_FEAT}: linear {linear['accuracy']:.4f} (>= 0.985, "
        f"{linear['minutes']:.0f} min), softplus {softplus['accuracy']:.4f}, gap {100 * gap:.2f} points (>= 2)"
    )
    assert record_criterion("4b", "MNIST full scale + softplus direction", passed, detail)


# ---------------------------------------------------------------------------
# 5. Fashion-MNIST ordering
# ---------------------------------------------------------------------------


@needs_data
@pytest.mark.slow
def test_criterion_5_fashion_ordering():
    defrag = [fit("fashion_mnist", "defrag", seed=s, train_n=10000, test_n=2000) for s in SEEDS]
    relu = [fit("fashion_mnist", "sparse_relu", seed=s, train_n=10000, test_n=2000) for s in SEEDS]
    acc = summary(defrag, "accuracy"), summary(relu, "accuracy")
    sil = summary(defrag, "silhouette_loss"), summary(relu, "silhouette_loss")
    passed = acc[0] >= acc[1] and sil[0] < sil[1]
    detail = (
        f"3 seeds, 10k/2k, {EPOCHS} epochs: accuracy defrag {acc[0]:.4f} vs sparse_relu {acc[1]:.4f}; "
        f"silhouette-loss metric defrag {sil[0]:.4f} vs sparse_relu {sil[1]:.4f}; "
        f"{sum(r['minutes'] for r in defrag + relu):.0f} min; "
        + per_seed("defrag", defrag) + " " + per_seed("sparse_relu", relu)
    )
    assert record_criterion(5, "Fashion-MNIST ordering", passed, detail)


# ---------------------------------------------------------------------------
# 6. separability direction
# ---------------------------------------------------------------------------


@needs_data
@pytest.mark.slow
def test_criterion_6_separability_direction():
    defrag = [fit("mnist", "defrag", seed=s, d_feat=2, train_n=10000, test_n=2000) for s in SEEDS]
    center = [fit("mnist", "center", seed=s, d_feat=2, train_n=10000, test_n=2000) for s in SEEDS]
    sil = summary(defrag, "silhouette_loss"), summary(center, "silhouette_loss")
    ratio = summary(defrag, "distance_ratio"), summary(center, "distance_ratio")
    passed = sil[0] <= sil[1] and ratio[0] <= ratio[1]
    detail = (
        f"d_feat=2, 3 seeds, 10k/2k, {EPOCHS} epochs: silhouette-loss metric defrag {sil[0]:.4f} vs center {sil[1]:.4f}; "
        f"distance ratio defrag {ratio[0]:.4f} vs center {ratio[1]:.4f} (nan = a collapsed run); "
        + per_seed("defrag", defrag) + " " + per_seed("center", center)
    )
    assert record_criterion(6, "clustering separability vs center loss", passed, detail)


# ---------------------------------------------------------------------------
# 7. determinism
# ---------------------------------------------------------------------------


def _write_idx(dataset, root, split):
    from test_cli import write_idx

    write_idx(dataset, root, split)


def test_criterion_7_determinism(tmp_path):
    root = tmp_path / "data"
    _write_idx(synthetic_digits(96, 0), root / "mnist", "train")
    _write_idx(synthetic_digits(40, 1), root / "mnist", "test")
    identical = []
    for method in ("defrag", "center", "softplus"):
        outputs = []
        for attempt in ("a", "b"):
            out = tmp_path / f"{method}-{attempt}"
            code = cli.main(["train", "--data_dir", str(root), "--out", str(out), "--method", method,
                             "--epochs", "3", "--batch_size", "32", "--seed", "5"])
            assert code == 0
            outputs.append(((out / "history.csv").read_bytes(), (out / "model.ckpt").read_bytes()))
        identical.append(outputs[0] == outputs[1])
    passed = all(identical)
    detail = "history CSV and checkpoint bytes equal across two runs for defrag, center, softplus: " + str(identical)
    assert record_criterion(7, "determinism", passed, detail)


# ---------------------------------------------------------------------------
# 8. parameter count
# ---------------------------------------------------------------------------


def test_criterion_8_parameter_count():
    count = build_model(RunConfig(d_feat=8)).parameter_count()
    passed = count == 1_257_426
    detail = f"build_model(d_feat=8) has {count:,} parameters; expected 1,257,426"
    assert record_criterion(8, "parameter count", passed, detail)
