"""Exact privacy-utility solver on tiny discrete instances.

Optimizes a tabular encoder against the exact objective
E[d(S, S_MAP)] - I(S;Y_B) + lambda * I(T;Y_E) by Adam on row-softmax
logits with analytically enumerated gradients. The decoder is the exact
MAP rule, so the decoder-side bound holds with equality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore, adam_step
from .channel import ChannelSpec
from .mi import ENUMERATION_LIMIT, EnumerationLimitError, _band_projection
from .source import DiscreteSystem


@dataclass(frozen=True)
class FrontierPoint:
    lam: float
    distortion: float
    mi_bob: float
    mi_eve: float
    objective: float
    restarts_used: int


class TabularEncoder:
    """Row-softmax logits over (source symbol, codeword) pairs."""

    def __init__(self, logits: np.ndarray):
        self.logits = np.asarray(logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a 2-D table")

    def table(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        t = e / e.sum(axis=1, keepdims=True)
        return t / t.sum(axis=1, keepdims=True)


def _check_size(sys: DiscreteSystem) -> None:
    if sys.n_s * (1 << sys.n_bits) > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"|S| * 2^n = {sys.n_s * (1 << sys.n_bits)} exceeds {ENUMERATION_LIMIT}"
        )


def _terms_and_grad(table: np.ndarray, sys: DiscreteSystem, spec: ChannelSpec,
                    lam: float, want_grad: bool):
    """Exact (distortion, I_B, I_E) and, optionally, d(objective)/d(table)."""
    p_s = sys.p_s
    p_ts = sys.joint
    c_b = _band_projection(spec, "bob")[0]
    c_e = _band_projection(spec, "eve")[0]

    a_b = table @ c_b                      # P(y_b | s)
    j_sy = p_s[:, None] * a_b              # P(s, y_b)
    p_yb = j_sy.sum(axis=0)
    post_cols = np.where(p_yb > 0, j_sy, -1.0)
    s_map = np.argmax(post_cols, axis=0)   # MAP source per output
    d_map = sys.distortion[:, s_map]       # D[s, s_map[y]] as (ns, ny)
    distortion = float((j_sy * d_map).sum())

    mask_b = j_sy > 0
    lr_b = np.zeros_like(j_sy)
    np.divide(a_b, p_yb[None, :], out=lr_b, where=mask_b)
    np.log2(lr_b, out=lr_b, where=mask_b)
    mi_bob = float((j_sy[mask_b] * lr_b[mask_b]).sum())

    a_e = table @ c_e
    j_ty = p_ts @ a_e                      # P(t, y_e)
    p_t = p_ts.sum(axis=1)
    p_ye = j_ty.sum(axis=0)
    mask_e = j_ty > 0
    lr_e = np.zeros_like(j_ty)
    denom = p_t[:, None] * p_ye[None, :]
    np.divide(j_ty, denom, out=lr_e, where=mask_e)
    np.log2(lr_e, out=lr_e, where=mask_e)
    mi_eve = float((j_ty[mask_e] * lr_e[mask_e]).sum())

    objective = distortion - mi_bob + lam * mi_eve
    if not want_grad:
        return distortion, mi_bob, mi_eve, objective, None

    g_dist = p_s[:, None] * (d_map @ c_b.T)
    g_ib = p_s[:, None] * (lr_b @ c_b.T)
    g_ie = (p_ts.T @ lr_e) @ c_e.T
    g_table = g_dist - g_ib + lam * g_ie
    inner = (g_table * table).sum(axis=1, keepdims=True)
    g_logits = table * (g_table - inner)
    return distortion, mi_bob, mi_eve, objective, g_logits


def exact_objective(enc, sys: DiscreteSystem, spec: ChannelSpec, lam: float) -> float:
    """Exact objective value for a TabularEncoder or a raw probability table."""
    _check_size(sys)
    table = enc.table() if isinstance(enc, TabularEncoder) else np.asarray(enc, dtype=np.float64)
    return _terms_and_grad(table, sys, spec, lam, want_grad=False)[3]


def objective_terms(enc, sys: DiscreteSystem, spec: ChannelSpec) -> tuple[float, float, float]:
    """(exact distortion, exact I(S;Y_B), exact I(T;Y_E)) for an encoder."""
    _check_size(sys)
    table = enc.table() if isinstance(enc, TabularEncoder) else np.asarray(enc, dtype=np.float64)
    d, ib, ie, _, _ = _terms_and_grad(table, sys, spec, 0.0, want_grad=False)
    return d, ib, ie


def objective_gradient(logits: np.ndarray, sys: DiscreteSystem, spec: ChannelSpec,
                       lam: float) -> np.ndarray:
    """Analytic d(objective)/d(logits) with the MAP rule held fixed."""
    _check_size(sys)
    table = TabularEncoder(logits).table()
    return _terms_and_grad(table, sys, spec, lam, want_grad=True)[4]


def optimize_exact(sys: DiscreteSystem, spec: ChannelSpec, lam: float, restarts: int = 16,
                   seed: int = 0, steps: int = 600, lr: float = 0.08,
                   extra_inits=None) -> tuple[TabularEncoder, FrontierPoint]:
    """Best-of-restarts Adam descent of the exact objective over encoder logits."""
    _check_size(sys)
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if spec.n != sys.n_bits:
        raise ValueError(f"channel n={spec.n} does not match system n_bits={sys.n_bits}")
    ns, nx = sys.n_s, 1 << sys.n_bits
    inits = [np.asarray(x, dtype=np.float64).copy() for x in (extra_inits or [])]
    ss = np.random.SeedSequence(entropy=(int(seed), 0x6F7261636C65))
    for child in ss.spawn(restarts):
        rng = np.random.default_rng(child)
        inits.append(rng.normal(0.0, 1.0, size=(ns, nx)))

    best_logits, best_obj = None, np.inf
    for init in inits:
        store = ParamStore()
        entry = store.add("logits", init)
        for _ in range(steps):
            table = TabularEncoder(entry.value).table()
            g = _terms_and_grad(table, sys, spec, lam, want_grad=True)[4]
            entry.grad[...] = g
            adam_step(store, lr=lr)
        final = exact_objective(TabularEncoder(entry.value), sys, spec, lam)
        if final < best_obj:
            best_obj = final
            best_logits = entry.value.copy()

    enc = TabularEncoder(best_logits)
    d, ib, ie = objective_terms(enc, sys, spec)
    point = FrontierPoint(
        lam=float(lam), distortion=d, mi_bob=ib, mi_eve=ie,
        objective=d - ib + lam * ie, restarts_used=len(inits),
    )
    return enc, point


def frontier_sweep(sys: DiscreteSystem, spec: ChannelSpec, lambdas, restarts: int = 16,
                   seed: int = 0, steps: int = 600, lr: float = 0.08) -> list[FrontierPoint]:
    """One optimized trade-off point per lambda; the previous optimum seeds the next."""
    points: list[FrontierPoint] = []
    warm = None
    for i, lam in enumerate(lambdas):
        extra = [warm] if warm is not None else None
        enc, point = optimize_exact(
            sys, spec, float(lam), restarts=restarts, seed=seed + 7919 * i,
            steps=steps, lr=lr, extra_inits=extra,
        )
        warm = enc.logits
        points.append(point)
    return points
