"""Executable property suites: metric axioms, risk bound, gradients, HD95.

Each suite returns a machine-readable result with a counterexample dump
on failure. The Jaccard term function is injectable so corrupted
implementations are caught by the same checks (mutation testing).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.spatial.distance import cdist

from .core.types import ClassTaxonomy
from .errors import PropertyCheckFailure
from .eval.metrics import hd95, surface_voxels
from .losses import binary_jaccard, per_class_jaccard, prob_jaccard, tissue_loss


@dataclass
class CheckResult:
    name: str
    passed: bool
    n_checked: int
    detail: str = ""
    counterexample: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "passed": self.passed,
            "n_checked": self.n_checked,
            "detail": self.detail,
        }
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out


def _random_simplex(rng, n_channels, shape):
    g = rng.gamma(1.0, 1.0, size=(n_channels,) + shape)
    return g / g.sum(axis=0, keepdims=True)


def _random_taxonomy(rng) -> ClassTaxonomy:
    n_t = int(rng.integers(1, 5))
    n_l = int(rng.integers(1, 4))
    tissue = tuple(range(1, n_t + 1))
    lesion = tuple(range(n_t + 1, n_t + 1 + n_l))
    w_t = rng.dirichlet(np.ones(n_t)) * 0.5
    w_l = rng.dirichlet(np.ones(n_l)) * 0.5
    weights = {0: 0.0}
    weights.update({c: float(w) for c, w in zip(tissue, w_t)})
    weights.update({c: float(w) for c, w in zip(lesion, w_l)})
    return ClassTaxonomy(tissue_classes=tissue, lesion_classes=lesion, weights=weights)


def check_metric_axioms(
    n_triples: int = 1000, seed: int = 0, per_class_fn=per_class_jaccard,
    max_channels: int = 8, tol: float = 1e-9,
) -> CheckResult:
    """Symmetry, identity of indiscernibles, triangle inequality."""
    rng = np.random.default_rng(seed)
    for i in range(n_triples):
        c = int(rng.integers(2, max_channels + 1))
        shape = tuple(rng.integers(1, 5, size=3))
        u, v, w = (_random_simplex(rng, c, shape) for _ in range(3))
        weights = rng.dirichlet(np.ones(c))
        d = lambda a, b: float((weights * per_class_fn(a, b).numpy()).sum())  # noqa: E731
        duv, dvu = d(u, v), d(v, u)
        duw, dvw = d(u, w), d(v, w)
        ce = {
            "triple_index": i,
            "shape": [int(s) for s in shape],
            "u": u.tolist(), "v": v.tolist(), "w": w.tolist(),
            "weights": weights.tolist(),
        }
        if duv != dvu:
            return CheckResult("metric_axioms", False, i + 1,
                               f"symmetry violated: {duv} vs {dvu}", ce)
        if d(u, u) > tol:
            return CheckResult("metric_axioms", False, i + 1,
                               f"d(u,u) = {d(u, u)}", ce)
        if duw > duv + dvw + tol:
            return CheckResult(
                "metric_axioms", False, i + 1,
                f"triangle violated: {duw} > {duv} + {dvw}", ce)
    return CheckResult("metric_axioms", True, n_triples,
                       "symmetry exact, identity and triangle within 1e-9")


def check_binary_coincidence(
    n_pairs: int = 1000, seed: int = 1, per_class_fn=per_class_jaccard,
    tol: float = 1e-12,
) -> CheckResult:
    """Class-1 term on categorical encodings equals the binary Jaccard."""
    rng = np.random.default_rng(seed)
    for i in range(n_pairs):
        n = int(rng.integers(1, 65))
        a = (rng.random(n) > rng.uniform(0.2, 0.8)).astype(np.float64)
        b = (rng.random(n) > rng.uniform(0.2, 0.8)).astype(np.float64)
        u = np.stack([1 - a, a])
        v = np.stack([1 - b, b])
        term = float(per_class_fn(u, v)[1])
        ref = binary_jaccard(a, b)
        if abs(term - ref) > tol:
            return CheckResult(
                "binary_coincidence", False, i + 1,
                f"term {term} != binary {ref}",
                {"a": a.tolist(), "b": b.tolist(), "term": term, "binary": ref},
            )
    return CheckResult("binary_coincidence", True, n_pairs, "equality within 1e-12")


def check_decomposition(
    n_pairs: int = 1000, seed: int = 2, tol: float = 1e-12,
) -> CheckResult:
    """tissue_loss + lesion_loss reconstructs the full distance exactly."""
    from .losses import lesion_loss

    rng = np.random.default_rng(seed)
    for i in range(n_pairs):
        tax = _random_taxonomy(rng)
        shape = tuple(rng.integers(1, 5, size=3))
        u = _random_simplex(rng, tax.n_channels, shape)
        v = _random_simplex(rng, tax.n_channels, shape)
        total = float(prob_jaccard(u, v, tax).total)
        split = float(tissue_loss(u, v, tax)) + float(lesion_loss(u, v, tax))
        if abs(total - split) > tol:
            return CheckResult(
                "decomposition", False, i + 1,
                f"{split} != {total}",
                {"u": u.tolist(), "v": v.tolist(),
                 "weights": {str(k): w for k, w in tax.weights.items()}},
            )
    return CheckResult("decomposition", True, n_pairs, "identity within 1e-12")


def check_bound(n_triples: int = 500, seed: int = 3, tol: float = 1e-9) -> CheckResult:
    """Triangle instantiation of the tissue-risk bound under random weights."""
    rng = np.random.default_rng(seed)
    for i in range(n_triples):
        tax = _random_taxonomy(rng)
        shape = tuple(rng.integers(1, 5, size=3))
        u, v, w = (_random_simplex(rng, tax.n_channels, shape) for _ in range(3))
        direct = float(tissue_loss(u, w, tax))
        via = float(tissue_loss(u, v, tax)) + float(tissue_loss(v, w, tax))
        if direct > via + tol:
            return CheckResult(
                "bound", False, i + 1,
                f"bound violated: {direct} > {via}",
                {"u": u.tolist(), "v": v.tolist(), "w": w.tolist(),
                 "weights": {str(k): x for k, x in tax.weights.items()}},
            )
    return CheckResult("bound", True, n_triples,
                       "per-sample tissue bound holds for random weights")


def check_gradients(
    n_inputs: int = 50, seed: int = 4, rel_tol: float = 1e-4, h: float = 1e-6,
) -> CheckResult:
    """Autograd gradient of the distance vs central finite differences."""
    rng = np.random.default_rng(seed)
    for i in range(n_inputs):
        tax = _random_taxonomy(rng)
        shape = (2, 2, 2)
        u0 = _random_simplex(rng, tax.n_channels, shape)
        v0 = _random_simplex(rng, tax.n_channels, shape)
        u = torch.tensor(u0, dtype=torch.float64, requires_grad=True)
        out = prob_jaccard(u, torch.tensor(v0, dtype=torch.float64), tax)
        out.total.backward()
        analytic = u.grad.numpy()
        flat = u0.reshape(-1)
        num = np.zeros_like(flat)
        for j in range(flat.size):
            up, dn = flat.copy(), flat.copy()
            up[j] += h
            dn[j] -= h
            fp = float(prob_jaccard(up.reshape(u0.shape), v0, tax).total)
            fm = float(prob_jaccard(dn.reshape(u0.shape), v0, tax).total)
            num[j] = (fp - fm) / (2 * h)
        num = num.reshape(u0.shape)
        scale = np.maximum(np.abs(num), np.abs(analytic))
        mask = scale > 1e-8
        if mask.any():
            rel = (np.abs(analytic - num)[mask] / scale[mask]).max()
            if rel > rel_tol:
                return CheckResult(
                    "gradients", False, i + 1,
                    f"relative gradient error {rel:.2e}",
                    {"u": u0.tolist(), "v": v0.tolist()},
                )
    return CheckResult("gradients", True, n_inputs, "relative error < 1e-4")


def brute_force_hd95(pred: np.ndarray, gt: np.ndarray, spacing=(1.0, 1.0, 1.0)):
    """O(n^2) oracle using dense pairwise distances."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if not pred.any() and not gt.any():
        return 0.0
    if not pred.any() or not gt.any():
        return None
    sp = np.asarray(spacing, dtype=np.float64)
    a = surface_voxels(pred) * sp
    b = surface_voxels(gt) * sp
    d = cdist(a, b)
    return float(np.percentile(np.concatenate([d.min(axis=1), d.min(axis=0)]), 95))


def check_hd95_oracle(n_pairs: int = 200, seed: int = 5) -> CheckResult:
    """KD-tree HD95 must match the dense-distance oracle exactly."""
    rng = np.random.default_rng(seed)
    checked = 0
    for i in range(n_pairs):
        shape = tuple(rng.integers(2, 9, size=3))
        spacing = tuple(rng.choice([1.0, 1.0, 3.0], size=3))
        a = rng.random(shape) > rng.uniform(0.4, 0.9)
        b = rng.random(shape) > rng.uniform(0.4, 0.9)
        expected = brute_force_hd95(a, b, spacing)
        got = hd95(a, b, spacing)
        if (expected is None) != (got is None) or (
            expected is not None and abs(expected - got) > 1e-12
        ):
            return CheckResult(
                "hd95_oracle", False, i + 1,
                f"hd95 {got} != oracle {expected}",
                {"a": a.tolist(), "b": b.tolist(), "spacing": list(spacing)},
            )
        if expected is not None:
            checked += 1
    return CheckResult("hd95_oracle", True, n_pairs,
                       f"exact agreement on {checked} defined pairs")


SUITES = {
    "metric_axioms": check_metric_axioms,
    "coincidence": check_binary_coincidence,
    "decomposition": check_decomposition,
    "bound": check_bound,
    "gradients": check_gradients,
    "oracle": check_hd95_oracle,
}


def run_checks(names=None, out_dir=None) -> dict:
    """Run suites; raises PropertyCheckFailure if any fails."""
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise PropertyCheckFailure(f"unknown check suites: {unknown}")
    results = [SUITES[n]() for n in names]
    report = {
        "passed": all(r.passed for r in results),
        "results": [r.to_dict() for r in results],
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "checks.json").write_text(json.dumps(report, indent=2))
    return report
