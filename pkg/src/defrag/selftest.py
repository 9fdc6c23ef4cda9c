"""Built-in verification suite: gradients, SVD/retraction properties, loss oracles."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import functional as F
from . import grassmann, losses, oracles
from .config import RunConfig
from .gradcheck import check_gradients, relative_error
from .model import build_model
from .tensor import backward, matmul, no_grad

GRAD_TOL = 1e-4
KINK_GAP = 1e-3


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _away_from_zero(rng, shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < KINK_GAP, np.copysign(KINK_GAP * 10, x), x)


def _pool_input(rng, shape):
    """Random input whose 2×2 windows have a unique maximum by a margin."""
    x = rng.normal(size=shape)
    while True:
        n, c, h, w = shape
        blocks = np.sort(x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(-1, 4), axis=1)
        if np.min(blocks[:, 3] - blocks[:, 2]) > KINK_GAP:
            return x
        x = rng.normal(size=shape)


def _bank_inputs(rng, m, d, k):
    x = rng.normal(size=(m, d))
    y = np.arange(m) % k
    rng.shuffle(y)
    centers = rng.normal(size=(k, d))
    return x, y, losses.CenterBank.from_centers(centers)


def _min_gap(x, y, centers):
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
    d2[np.arange(len(y)), y] = np.inf
    part = np.sort(d2, axis=1)
    return float(np.min(part[:, 1] - part[:, 0]))


def gradient_checks(instances: int = 3, seed: int = 0) -> Iterable[CheckResult]:
    rng = np.random.default_rng(seed)
    cases: dict[str, Callable[[], list[float]]] = {
        "matmul": lambda: check_gradients(matmul, [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]),
        "conv2d": lambda: check_gradients(
            F.conv2d, [rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(4, 3, 5, 5)), rng.normal(size=4)]
        ),
        "maxpool2": lambda: check_gradients(F.maxpool2, [_pool_input(rng, (1, 2, 6, 6))]),
        "relu": lambda: check_gradients(F.relu, [_away_from_zero(rng, (5, 4))]),
        "softplus": lambda: check_gradients(F.softplus, [rng.normal(scale=3, size=(5, 4))]),
        "linear": lambda: check_gradients(F.linear, [rng.normal(size=(5, 4))]),
        "softmax_cross_entropy": lambda: check_gradients(
            lambda z: F.softmax_cross_entropy(z, rng_labels), [rng.normal(size=(4, 10))]
        ),
        "l2_reg": lambda: check_gradients(losses.l2_reg, [rng.normal(size=(6, 4))]),
        "l1_reg": lambda: check_gradients(losses.l1_reg, [_away_from_zero(rng, (6, 4))]),
    }
    rng_labels = np.array([3, 0, 9, 3])

    def center_family(kind):
        def run():
            while True:
                x, y, bank = _bank_inputs(rng, 8, 4, 5)
                if kind != "silhouette" or _min_gap(x, y, bank.centers) > KINK_GAP:
                    break
            fn = {
                "center": lambda t: losses.center_loss(t, y, bank),
                "contrastive_center": lambda t: losses.contrastive_center_loss(t, y, bank, 1e-6),
                "silhouette": lambda t: losses.silhouette_loss(t, y, bank, 1e-6),
            }[kind]
            return check_gradients(fn, [x])

        return run

    for kind in ("center", "contrastive_center", "silhouette"):
        cases[kind] = center_family(kind)

    for name, case in cases.items():
        worst = max(max(case()) for _ in range(instances))
        yield CheckResult("gradients", name, worst < GRAD_TOL, f"max rel err {worst:.2e}")

    yield network_gradient_check(seed)


def _activation_pattern(model, images) -> list[np.ndarray]:
    """Relu signs and pooling winners: the piecewise-linear region the network sits in."""
    trace: list = []
    with no_grad():
        model.forward(images, trace=trace)
    pattern = []
    for kind, a in trace:
        if kind == "relu":
            pattern.append(a > 0)
        elif kind == "pool":
            n, c, h, w = a.shape
            windows = a.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
            pattern.append(windows.argmax(axis=-1))
    return pattern


def network_gradient_check(seed: int = 0, coords: int = 6, h: float = 1e-5) -> CheckResult:
    """Backprop through the full network on a 2-sample batch vs sampled central differences.

    A coordinate whose ``±h`` perturbation changes any relu sign or pooling
    winner straddles a kink; it is skipped and counted.
    """
    rng = np.random.default_rng(seed)
    model = build_model(RunConfig(method="center", seed=seed))
    images = rng.uniform(size=(2, 1, 28, 28))
    labels = np.array([1, 7])
    bank = losses.CenterBank.from_centers(rng.normal(size=(10, model.d_feat)))

    def loss():
        feats, logits = model.forward(images)
        return losses.combined_loss(F.softmax_cross_entropy(logits, labels), losses.center_loss(feats, labels, bank), 0.1)

    backward(loss())
    base = _activation_pattern(model, images)
    worst, skipped = 0.0, 0
    for name, param in model.params.items():
        flat = param.data.reshape(-1)
        picks = np.sort(rng.choice(flat.size, size=min(coords, flat.size), replace=False))
        analytic, numeric = [], []
        for i in picks:
            keep = flat[i]
            values, same = [], True
            for step in (h, -h):
                flat[i] = keep + step
                with no_grad():
                    values.append(loss().item())
                same = same and all(np.array_equal(a, b) for a, b in zip(base, _activation_pattern(model, images)))
            flat[i] = keep
            if not same:
                skipped += 1
                continue
            analytic.append(param.grad.reshape(-1)[i])
            numeric.append((values[0] - values[1]) / (2 * h))
        if analytic:
            worst = max(worst, relative_error(np.array(analytic), np.array(numeric)))
    detail = f"max rel err {worst:.2e}, {skipped} kink-straddling coords skipped"
    return CheckResult("gradients", "network (sampled coords)", worst < GRAD_TOL, detail)


def retraction_checks(count: int = 20, seed: int = 1) -> Iterable[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = {"reconstruction": 0.0, "orthonormality": 0.0, "idempotence": 0.0, "scale": 0.0, "polar": 0.0}
    for _ in range(count):
        m = rng.normal(size=(256, 8))
        u, s, v = grassmann.svd_thin(m)
        worst["reconstruction"] = max(worst["reconstruction"], np.linalg.norm(u * s @ v.T - m) / np.linalg.norm(m))
        r = grassmann.retract(m)
        worst["orthonormality"] = max(worst["orthonormality"], grassmann.orthonormality_error(r))
        worst["idempotence"] = max(worst["idempotence"], np.linalg.norm(grassmann.retract(r) - r))
        worst["scale"] = max(worst["scale"], np.linalg.norm(grassmann.retract(3.7 * m) - r))
        worst["polar"] = max(worst["polar"], np.linalg.norm(oracles.polar_factor(m) - r))
    limits = {"reconstruction": 1e-10, "orthonormality": 1e-10, "idempotence": 1e-10, "scale": 1e-10, "polar": 1e-9}
    for key, value in worst.items():
        yield CheckResult("retraction", key, value < limits[key], f"{value:.2e} (limit {limits[key]:.0e})")


def loss_oracle_checks(count: int = 10, seed: int = 2) -> Iterable[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = {"center": 0.0, "contrastive_center": 0.0, "silhouette": 0.0}
    for _ in range(count):
        x, y, bank = _bank_inputs(rng, int(rng.integers(1, 65)), int(rng.integers(1, 17)), 10)
        c = bank.centers
        worst["center"] = max(worst["center"], abs(losses.center_loss(x, y, bank).item() - oracles.center_loss_loop(x, y, c)))
        worst["contrastive_center"] = max(
            worst["contrastive_center"],
            abs(losses.contrastive_center_loss(x, y, bank, 1e-6).item() - oracles.contrastive_center_loss_loop(x, y, c, 1e-6)),
        )
        worst["silhouette"] = max(
            worst["silhouette"],
            abs(losses.silhouette_loss(x, y, bank, 1e-6).item() - oracles.silhouette_loss_loop(x, y, c, 1e-6)),
        )
    for key, value in worst.items():
        yield CheckResult("loss oracle", key, value < 1e-12, f"abs err {value:.2e}")


def run_selftest(out=print) -> bool:
    """Run every suite, print a pass/fail table and return whether everything passed."""
    started = time.perf_counter()
    results: list[CheckResult] = []
    for suite in (gradient_checks, retraction_checks, loss_oracle_checks):
        try:
            results.extend(suite())
        except Exception as exc:  # a crashing suite counts as a failure
            results.append(CheckResult(suite.__name__, "crashed", False, repr(exc)))
    width = max(len(r.name) for r in results)
    out(f"{'suite':<12} {'check':<{width}}  result  detail")
    for r in results:
        out(f"{r.suite:<12} {r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    ok = all(r.passed for r in results)
    out(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {time.perf_counter() - started:.1f}s")
    return ok
