"""Independent straight-line oracles used by the test suite.

Everything here is deliberately written as naive, loop-based code with no
imports from the package's numerical internals, so it can disagree with the
engine when the engine is wrong.
"""

import math

import numpy as np


def reward_oracle(prev, curr, events, cfg, anchors, storage_anchor):
    """Per-agent reward components for one env transition, evaluated literally.

    prev/curr: dicts with pos [N][2], has_part [N], ready [M], ns [M].
    events: dict with picks [(agent, machine)], places [agent],
    onsets [(id_a, id_b)] where ids < N are agents.
    Returns a dict of per-agent component lists plus "total".
    """
    n = len(prev["pos"])
    picks = list(events["picks"])
    places = list(events["places"])
    onsets = list(events["onsets"])

    r_pick = [0.0] * n
    r_place = [0.0] * n
    for i in range(n):
        if cfg["share_pick_place"]:
            r_pick[i] = cfg["pick_reward"] * len(picks)
            r_place[i] = cfg["place_reward"] * len(places)
        else:
            r_pick[i] = cfg["pick_reward"] * sum(1 for a, _ in picks if a == i)
            r_place[i] = cfg["place_reward"] * sum(1 for a in places if a == i)

    r_coll = [0.0] * n
    for a, b in onsets:
        if a < n:
            r_coll[a] += cfg["collision_penalty"]
        if b < n:
            r_coll[b] += cfg["collision_penalty"]

    # progress toward the closest ready machine (target chosen on the
    # pre-step state) when the agent holds no part
    r_pm = [0.0] * n
    r_ps = [0.0] * n
    ready_machines = [m for m in range(len(prev["ready"])) if prev["ready"][m]]
    for i in range(n):
        px, py = prev["pos"][i]
        cx, cy = curr["pos"][i]
        if cfg["enable_distance_shaping"]:
            if not prev["has_part"][i] and ready_machines:
                best, best_d = None, None
                for m in ready_machines:
                    d = math.hypot(px - anchors[m][0], py - anchors[m][1])
                    if best is None or d < best_d:
                        best, best_d = m, d
                d_curr = math.hypot(cx - anchors[best][0], cy - anchors[best][1])
                r_pm[i] = cfg["progress_scale"] * (best_d - d_curr)
            if prev["has_part"][i]:
                d_prev = math.hypot(px - storage_anchor[0], py - storage_anchor[1])
                d_curr = math.hypot(cx - storage_anchor[0], cy - storage_anchor[1])
                r_ps[i] = cfg["progress_scale"] * (d_prev - d_curr)

    r_u = 0.0
    if cfg["enable_uncollected_penalty"]:
        if cfg["uncollected_mode"] == "fixed":
            r_u = cfg["uncollected_scale"] * sum(1 for r in curr["ready"] if r)
        else:
            r_u = cfg["uncollected_scale"] * float(sum(curr["ns"]))
    r_unc = [r_u] * n

    r_time = [0.0] * n
    if cfg["enable_time_penalty"]:
        for i in range(n):
            if r_pick[i] == 0.0 and r_place[i] == 0.0 and r_unc[i] == 0.0:
                r_time[i] = cfg["time_penalty"]

    total = [
        r_pick[i] + r_place[i] + r_coll[i] + r_pm[i] + r_ps[i] + r_unc[i] + r_time[i]
        for i in range(n)
    ]
    return {
        "pick": r_pick, "place": r_place, "collision": r_coll,
        "progress_machine": r_pm, "progress_storage": r_ps,
        "uncollected": r_unc, "time": r_time, "total": total,
    }


def matmul_oracle(a, b):
    """Naive triple-loop matrix product for 2D inputs."""
    n, k = len(a), len(a[0])
    k2, m = len(b), len(b[0])
    assert k == k2
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i][t] * b[t][j]
            out[i][j] = acc
    return np.array(out)


def gru_oracle(x, h, weights):
    """Second straight-line GRU cell: update/reset gates, tanh candidate.

    weights: dict with w_ir, w_iz, w_in [H, D], w_hr, w_hz, w_hn [H, H],
    b_ir, b_iz, b_in, b_hr, b_hz, b_hn [H]. Convention matches the common
    formulation h' = (1 - z) * n + z * h.
    """
    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    H = len(h)
    out = [0.0] * H
    for k in range(H):
        r_k = sig(
            sum(weights["w_ir"][k][d] * x[d] for d in range(len(x))) + weights["b_ir"][k]
            + sum(weights["w_hr"][k][j] * h[j] for j in range(H)) + weights["b_hr"][k]
        )
        z_k = sig(
            sum(weights["w_iz"][k][d] * x[d] for d in range(len(x))) + weights["b_iz"][k]
            + sum(weights["w_hz"][k][j] * h[j] for j in range(H)) + weights["b_hz"][k]
        )
        n_k = math.tanh(
            sum(weights["w_in"][k][d] * x[d] for d in range(len(x))) + weights["b_in"][k]
            + r_k * (sum(weights["w_hn"][k][j] * h[j] for j in range(H)) + weights["b_hn"][k])
        )
        out[k] = (1.0 - z_k) * n_k + z_k * h[k]
    return np.array(out)


def discounted_advantage_oracle(rewards, values, dones, bootstrap, gamma, lam):
    """O(T^2) double-sum GAE: A_t = sum_l (gamma*lam)^l delta_{t+l}, cut at dones."""
    T = len(rewards)
    deltas = []
    for t in range(T):
        v_next = bootstrap if t == T - 1 else values[t + 1]
        deltas.append(rewards[t] + gamma * v_next * (1.0 - dones[t]) - values[t])
    adv = []
    for t in range(T):
        acc, scale = 0.0, 1.0
        for l in range(t, T):
            acc += scale * deltas[l]
            if dones[l]:
                break
            scale *= gamma * lam
        adv.append(acc)
    return np.array(adv)


def finite_difference_gradients(f, params, eps=1e-5, max_entries=None, rng=None):
    """Central finite differences of scalar f() w.r.t. each parameter tensor.

    ``f`` takes no arguments and reads the parameters in place. Returns a list
    of gradient arrays aligned with ``params``. With ``max_entries`` set, only
    a random subset of entries per tensor is evaluated; the rest are NaN.
    """
    def scalar():
        out = f()
        return float(out.data) if hasattr(out, "data") else float(out)

    grads = []
    for p in params:
        g = np.full(p.data.size, np.nan)
        idx = np.arange(p.data.size)
        if max_entries is not None and p.data.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(p.data.size, max_entries, replace=False)
        for i in idx:
            # index via unravel so non-contiguous parameter arrays still mutate
            pos = np.unravel_index(i, p.data.shape)
            orig = p.data[pos]
            p.data[pos] = orig + eps
            up = scalar()
            p.data[pos] = orig - eps
            down = scalar()
            p.data[pos] = orig
            g[i] = (up - down) / (2 * eps)
        grads.append(g.reshape(p.data.shape))
    return grads


def check_gradients(f, params, eps=1e-5, rtol=1e-4, max_entries=None, seed=0):
    """Assert autodiff gradients of scalar f() match central differences.

    Entries where both gradients are below 1e-10 are treated as matching
    zeros; otherwise |ad - fd| / max(|ad|, |fd|, 1e-6) must be <= rtol.
    """
    from tendbench.nn.tensor import Tensor  # local import: oracle stays engine-free

    for p in params:
        p.grad = None
    out = f()
    assert isinstance(out, Tensor) and out.data.size == 1
    out.backward()
    ad = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    fd = finite_difference_gradients(
        f, params, eps=eps, max_entries=max_entries, rng=np.random.default_rng(seed)
    )
    for p, g_ad, g_fd in zip(params, ad, fd):
        mask = ~np.isnan(g_fd)
        a, b = g_ad[mask], g_fd[mask]
        tiny = (np.abs(a) < 1e-10) & (np.abs(b) < 1e-10)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
        rel = np.abs(a - b) / denom
        rel[tiny] = 0.0
        worst = float(rel.max()) if rel.size else 0.0
        assert worst <= rtol, f"gradient mismatch for {p.name}: rel err {worst:.3e}"
