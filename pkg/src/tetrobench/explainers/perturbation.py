"""Perturbation explainers over square pixel patches.

Every method here treats the model as a black box through ``model.logits``.
Features are ``patch`` x ``patch`` tiles (see :func:`patch_ids`); a patch that
is "off" takes the baseline value, and per-patch scores are broadcast back to
their pixels.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .base import as_batch, method_stream, patch_ids, target_logits


def _patches(shape, patch):
    ids = patch_ids(shape, patch)
    return ids, int(ids.max()) + 1


def _compose(x, b, ids, on):
    """Images where patch j comes from x if on[:, j] else from b; on is (K, M)."""
    keep = np.asarray(on, dtype=bool)[:, ids]
    return np.where(keep, x[None], b[None])


def _per_sample(x, targets, baseline, sample_ids):
    xb, single = as_batch(x)
    n = len(xb)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (n,))
    b = np.zeros_like(xb) if baseline is None else np.broadcast_to(
        np.asarray(baseline, dtype=np.float64), xb.shape)
    ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids)
    return xb, single, targets, b, ids


def _cross_entropy(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(len(z)), labels]


def permutation_feature_importance(model, X, targets, repeats: int = 5, seed: int = 0,
                                   patch: int = 1) -> np.ndarray:
    """Mean increase in cross-entropy of ``targets`` when one patch is shuffled across ``X``.

    A batch-level map: each repeat draws one permutation of the batch rows and
    applies it to every pixel of the patch being probed.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or len(X) < 1:
        raise ValueError(f"expected a non-empty (N, H, W) reference batch, got shape {X.shape}")
    labels = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(X),))
    ids, M = _patches(X.shape[1:], patch)
    rng = method_stream(seed, "pfi", 0)
    base = _cross_entropy(np.asarray(model.logits(X)), labels).mean()
    scores = np.zeros(M)
    for _ in range(repeats):
        for j in range(M):
            sel = ids == j
            perm = rng.permutation(len(X))
            Xp = X.copy()
            Xp[:, sel] = X[perm][:, sel]
            scores[j] += _cross_entropy(np.asarray(model.logits(Xp)), labels).mean() - base
    return (scores / repeats)[ids]


def shapley_value_sampling(model, x, targets, permutations: int = 25, baseline=None,
                           seed: int = 0, sample_ids=None, patch: int = 1,
                           return_stderr: bool = False):
    """Monte-Carlo Shapley values of the target logit over patches.

    Each sampled ordering switches patches from baseline to input one at a
    time; a patch's estimate is the mean logit change it causes. With
    ``return_stderr`` the per-pixel standard error of that mean is returned too.
    """
    if permutations < 1:
        raise ValueError(f"permutations must be at least 1, got {permutations}")
    xb, single, targets, b, sids = _per_sample(x, targets, baseline, sample_ids)
    ids, M = _patches(xb.shape[1:], patch)
    out = np.empty_like(xb)
    err = np.empty_like(xb)
    for n in range(len(xb)):
        rng = method_stream(seed, "shapley_sampling", sids[n])
        contrib = np.empty((permutations, M))
        for p in range(permutations):
            order = rng.permutation(M)
            on = np.zeros((M + 1, M), dtype=bool)
            for step, j in enumerate(order):
                on[step + 1:, j] = True
            f = target_logits(model, _compose(xb[n], b[n], ids, on), targets[n])
            contrib[p, order] = np.diff(f)
        out[n] = contrib.mean(axis=0)[ids]
        se = contrib.std(axis=0, ddof=1) / math.sqrt(permutations) if permutations > 1 else np.zeros(M)
        err[n] = se[ids]
    if single:
        out, err = out[0], err[0]
    return (out, err) if return_stderr else out


def shapley_kernel_weight(M: int, s: int) -> float:
    """Weight of a size-``s`` coalition among ``M`` players in the Shapley regression."""
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def _coalitions(M, budget, rng):
    """Interior coalitions (neither empty nor full) and their regression weights."""
    if M <= 20 and 2 ** M - 2 <= budget:
        rows = [c for c in itertools.product((0, 1), repeat=M) if 0 < sum(c) < M]
        Z = np.array(rows, dtype=bool)
        w = np.array([shapley_kernel_weight(M, int(r.sum())) for r in Z])
        return Z, w
    sizes = np.arange(1, M)
    p = (M - 1) / (sizes * (M - sizes))
    p /= p.sum()
    Z = np.zeros((budget, M), dtype=bool)
    # paired sampling: each drawn coalition is followed by its complement
    for k in range(0, budget, 2):
        s = rng.choice(sizes, p=p)
        Z[k, rng.choice(M, size=s, replace=False)] = True
        if k + 1 < budget:
            Z[k + 1] = ~Z[k]
    return Z, np.ones(budget)


def kernel_shap(model, x, targets, coalitions: int | None = None, baseline=None, seed: int = 0,
                sample_ids=None, patch: int = 1) -> np.ndarray:
    """Shapley values from a weighted linear regression on patch coalitions.

    ``coalitions`` counts the empty and full coalitions too; they pin the
    intercept to f(b) and force the estimates to sum to f(x) - f(b). When all
    interior coalitions fit in the budget they are enumerated with exact
    kernel weights, which reproduces the exact Shapley values.
    """
    xb, single, targets, b, sids = _per_sample(x, targets, baseline, sample_ids)
    ids, M = _patches(xb.shape[1:], patch)
    C = 2 * M + 16 if coalitions is None else int(coalitions)
    if C < M + 2:
        raise ValueError(f"kernel_shap needs at least {M + 2} coalitions for {M} patches, got {C}")
    out = np.empty_like(xb)
    for n in range(len(xb)):
        rng = method_stream(seed, "kernel_shap", sids[n])
        if M == 1:
            f = target_logits(model, np.stack([b[n], xb[n]]), targets[n])
            out[n] = f[1] - f[0]
            continue
        Z, w = _coalitions(M, C - 2, rng)
        ends = np.zeros((2, M), dtype=bool)
        ends[1] = True
        f = target_logits(model, _compose(xb[n], b[n], ids, np.vstack([ends, Z])), targets[n])
        delta, y = f[1] - f[0], f[2:] - f[0]
        # substitute phi_last = delta - sum(others) and solve the reduced system
        Zf = Z.astype(np.float64)
        A = Zf[:, :-1] - Zf[:, -1:]
        r = y - Zf[:, -1] * delta
        sw = np.sqrt(w)
        sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], r * sw, rcond=None)
        if rank < M - 1:
            raise np.linalg.LinAlgError(
                f"kernel_shap: singular regression (rank {rank} < {M - 1}) with {len(Z)} interior "
                f"coalitions for {M} patches; increase the coalition count")
        phi = np.append(sol, delta - sol.sum())
        out[n] = phi[ids]
    return out[0] if single else out


def lime(model, x, targets, perturbations: int = 1000, ridge: float = 1e-3,
         kernel_width: float | None = None, baseline=None, seed: int = 0, sample_ids=None,
         patch: int = 1) -> np.ndarray:
    """Coefficients of a weighted ridge surrogate fitted on random patch on/off masks.

    Masks switch each patch off (to baseline) with probability one half; the
    unperturbed input is always included. A mask with d patches off gets weight
    exp(-d / width^2), the exponential kernel on Euclidean distance in mask
    space. The intercept is not penalised.
    """
    xb, single, targets, b, sids = _per_sample(x, targets, baseline, sample_ids)
    ids, M = _patches(xb.shape[1:], patch)
    Q = int(perturbations)
    if Q < M + 2:
        raise ValueError(f"lime needs at least {M + 2} perturbations for {M} patches, got {Q}")
    width = 0.25 * math.sqrt(M) if kernel_width is None else float(kernel_width)
    if width <= 0:
        raise ValueError("kernel width must be positive")
    out = np.empty_like(xb)
    for n in range(len(xb)):
        rng = method_stream(seed, "lime", sids[n])
        Z = rng.random((Q, M)) < 0.5
        Z[0] = True
        off = (~Z).sum(axis=1)
        w = np.exp(-off / width ** 2)
        Zf = Z.astype(np.float64)
        varies = (Zf * w[:, None]).sum(0) / w.sum()
        if w.sum() <= 0 or np.any((varies <= 0) | (varies >= 1)):
            raise ValueError(f"lime: degenerate perturbation set ({Q} masks, {M} patches); "
                             "some patch is never toggled")
        y = target_logits(model, _compose(xb[n], b[n], ids, Z), targets[n])
        # weighted centring removes the intercept from the penalised system
        zm = (w @ Zf) / w.sum()
        ym = (w @ y) / w.sum()
        Zc, yc = Zf - zm, y - ym
        G = (Zc * w[:, None]).T @ Zc + ridge * np.eye(M)
        coef = np.linalg.solve(G, (Zc * w[:, None]).T @ yc)
        out[n] = coef[ids]
    return out[0] if single else out
