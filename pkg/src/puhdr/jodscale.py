"""Thurstone Case V scaling of pairwise comparison counts into JOD units.

P(i preferred over j) = Phi((q_i - q_j) / SIGMA_JOD), with SIGMA_JOD chosen so
that a one-unit difference predicts 75% preference.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.special import log_ndtr, ndtri

from .errors import ContractError, DomainError

log = logging.getLogger(__name__)

SIGMA_JOD = 1.0 / float(ndtri(0.75))
GRAD_TOL = 1e-8
MAX_ITER = 200_000
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)

Anchor = Union[str, int]   # "mean" or the index of the reference condition


@dataclass
class ComparisonMatrix:
    counts: np.ndarray
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ContractError(f"counts must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c != np.round(c)):
            raise ContractError("counts must be finite non-negative integers")
        if np.any(np.diag(c) != 0):
            raise ContractError("counts diagonal must be zero")
        self.counts = c.astype(np.int64)
        if not self.labels:
            self.labels = [str(i) for i in range(self.k)]
        if len(self.labels) != self.k:
            raise ContractError("one label per condition required")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def from_csv(cls, text: str) -> "ComparisonMatrix":
        rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
        if not rows:
            raise ContractError("empty CSV")
        labels = [c.strip() for c in rows[0]]
        try:
            counts = [[int(c) for c in r] for r in rows[1:]]
        except ValueError as e:
            raise ContractError(f"non-integer count in CSV: {e}") from None
        if len(counts) != len(labels) or any(len(r) != len(labels) for r in counts):
            raise ContractError("CSV must hold a header of K labels and K rows of K counts")
        return cls(np.array(counts, dtype=np.int64).reshape(len(labels), len(labels)), labels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.labels)
        w.writerows(self.counts.tolist())
        return buf.getvalue()

    def resolve_anchor(self, anchor: Anchor) -> Anchor:
        """Normalize "mean", an int index, or "ref:LABEL"."""
        if isinstance(anchor, (int, np.integer)):
            if not 0 <= anchor < self.k:
                raise ContractError(f"reference index {anchor} out of range")
            return int(anchor)
        if anchor == "mean":
            return "mean"
        if isinstance(anchor, str) and anchor.startswith("ref:"):
            name = anchor[4:]
            if name not in self.labels:
                raise ContractError(f"unknown reference label {name!r}")
            return self.labels.index(name)
        raise ContractError(f"anchor must be 'mean', an index or 'ref:LABEL', got {anchor!r}")


@dataclass
class JodResult:
    scores: np.ndarray
    labels: List[str]
    anchor: Anchor
    ci_low: Optional[np.ndarray] = None
    ci_high: Optional[np.ndarray] = None
    iterations: int = 0

    def anchor_name(self) -> str:
        return "mean" if self.anchor == "mean" else f"ref:{self.labels[self.anchor]}"

    def to_json(self) -> dict:
        lst = lambda a: None if a is None else [float(v) for v in a]
        return {"labels": list(self.labels), "scores": lst(self.scores),
                "ci_low": lst(self.ci_low), "ci_high": lst(self.ci_high),
                "anchor": self.anchor_name()}


def components(counts: np.ndarray) -> List[List[int]]:
    """Connected components of the graph with an edge wherever a pair was compared."""
    k = counts.shape[0]
    adj = (counts + counts.T) > 0
    seen = np.zeros(k, bool)
    comps = []
    for s in range(k):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.flatnonzero(adj[u] & ~seen):
                seen[v] = True
                stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def smooth_unanimous(counts: np.ndarray) -> np.ndarray:
    """Add 0.5 to both cells of every compared pair with a unanimous outcome."""
    c = np.asarray(counts, dtype=np.float64)
    ct = np.swapaxes(c, -1, -2)
    unanimous = ((c == 0) ^ (ct == 0))
    return c + 0.5 * (unanimous | np.swapaxes(unanimous, -1, -2))


def log_likelihood(q, counts) -> np.ndarray:
    """Sum of counts[i, j] * log Phi((q_i - q_j) / SIGMA_JOD); batched over leading axes."""
    q = np.asarray(q, np.float64)
    d = (q[..., :, None] - q[..., None, :]) / SIGMA_JOD
    return np.sum(np.where(counts > 0, counts * log_ndtr(d), 0.0), axis=(-1, -2))


def _grad(q, counts):
    d = (q[..., :, None] - q[..., None, :]) / SIGMA_JOD
    lphi = log_ndtr(d)
    # counts * phi(d) / Phi(d), computed in log space for large |d|
    g = np.where(counts > 0, counts * np.exp(-0.5 * d * d - _LOG_SQRT_2PI - lphi), 0.0)
    ll = np.sum(np.where(counts > 0, counts * lphi, 0.0), axis=(-1, -2))
    return (g.sum(-1) - g.sum(-2)) / SIGMA_JOD, ll


def _ascend(counts: np.ndarray, q0: Optional[np.ndarray] = None,
            tol: float = GRAD_TOL, max_iter: int = MAX_ITER):
    """Gradient ascent with backtracking (Armijo) steps, batched over axis 0.

    Each accepted step proposes the next trial length by the Barzilai-Borwein
    rule; rejected trials are halved. ``counts`` is (B, K, K). Returns the
    (B, K) maximizers and the iteration count.
    """
    b, k = counts.shape[:2]
    q = np.zeros((b, k)) if q0 is None else np.array(q0, dtype=np.float64).reshape(b, k)
    g, ll = _grad(q, counts)
    step = np.full(b, 1.0 / max(1.0, float(counts.sum(axis=(1, 2)).max())))
    it = 0
    while it < max_iter:
        gn2 = np.sum(g * g, axis=1)
        active = gn2 >= tol * tol
        if not active.any():
            break
        it += 1
        qt = q + step[:, None] * g
        gt, llt = _grad(qt, counts)
        armijo = llt >= ll + 1e-4 * step * gn2
        # near the optimum ll stops resolving the ascent; fall back on the gradient
        slack = 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(ll))
        stalled = (llt >= ll - slack) & (np.sum(gt * gt, axis=1) < gn2)
        ok = active & (armijo | stalled)
        dq = qt - q
        dg = gt - g
        curv = -np.sum(dq * dg, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.sum(dq * dq, axis=1) / curv
        bb = np.where(np.isfinite(bb) & (bb > 0), np.minimum(bb, 1e6), step)
        q = np.where(ok[:, None], qt, q)
        g = np.where(ok[:, None], gt, g)
        ll = np.where(ok, llt, ll)
        step = np.where(ok, bb, step * 0.5)
        if np.any(active & (step < 1e-300)):
            raise DomainError("line search failed to make progress")
    else:
        log.warning("JOD fit hit %d iterations before reaching gradient norm %g", max_iter, tol)
    return q, it


def _apply_anchor(q: np.ndarray, anchor: Anchor) -> np.ndarray:
    if anchor == "mean":
        return q - q.mean(axis=-1, keepdims=True)
    out = q - q[..., anchor:anchor + 1]
    out[..., anchor] = 0.0
    return out


def _check_connected(m: ComparisonMatrix):
    comps = components(m.counts)
    if len(comps) > 1:
        named = "; ".join("{" + ", ".join(m.labels[i] for i in c) + "}" for c in comps)
        raise DomainError(f"comparison graph is disconnected: {named}")


def fit_jod(m: ComparisonMatrix, anchor: Anchor = "mean", smooth: bool = True,
            q0: Optional[np.ndarray] = None) -> JodResult:
    """Maximum-likelihood JOD scores.

    Pairs with unanimous outcomes get 0.5 added to both cells unless
    ``smooth`` is False (the MLE then diverges for such pairs).
    """
    anchor = m.resolve_anchor(anchor)
    _check_connected(m)
    c = smooth_unanimous(m.counts) if smooth else m.counts.astype(np.float64)
    q, it = _ascend(c[None], None if q0 is None else np.asarray(q0)[None])
    return JodResult(_apply_anchor(q[0], anchor), list(m.labels), anchor, iterations=it)


def resample_counts(m: ComparisonMatrix, n_boot: int, seed: int) -> np.ndarray:
    """(n_boot, K, K) binomial resamples of every compared pair.

    Replicate b draws from its own stream spawned from ``seed``.
    """
    c = m.counts
    iu, ju = np.triu_indices(m.k, 1)
    n = c[iu, ju] + c[ju, iu]
    sel = n > 0
    iu, ju, n = iu[sel], ju[sel], n[sel]
    p = c[iu, ju] / n
    out = np.zeros((n_boot, m.k, m.k), dtype=np.int64)
    for b, ss in enumerate(np.random.SeedSequence(seed).spawn(n_boot)):
        wins = np.random.default_rng(ss).binomial(n, p)
        out[b, iu, ju] = wins
        out[b, ju, iu] = n - wins
    return out


def bootstrap_ci(m: ComparisonMatrix, anchor: Anchor = "mean", n_boot: int = 500,
                 seed: int = 0, smooth: bool = True, level: float = 0.95) -> JodResult:
    """Point estimate plus percentile-bootstrap confidence bounds."""
    base = fit_jod(m, anchor, smooth)
    boots = resample_counts(m, n_boot, seed)
    c = smooth_unanimous(boots) if smooth else boots.astype(np.float64)
    q, _ = _ascend(c)
    q = _apply_anchor(q, base.anchor)
    tail = 50.0 * (1.0 - level)
    lo, hi = np.percentile(q, [tail, 100.0 - tail], axis=0)
    base.ci_low, base.ci_high = lo, hi
    return base


def simulate_counts(scores: Sequence[float], trials: int, rng: np.random.Generator,
                    labels: Optional[List[str]] = None) -> ComparisonMatrix:
    """Draw ``trials`` Case V outcomes for every pair of planted scores."""
    from scipy.special import ndtr

    q = np.asarray(scores, dtype=np.float64)
    k = len(q)
    c = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(i + 1, k):
            w = rng.binomial(trials, ndtr((q[i] - q[j]) / SIGMA_JOD))
            c[i, j], c[j, i] = w, trials - w
    return ComparisonMatrix(c, labels or [])


def result_json(res: JodResult) -> str:
    return json.dumps(res.to_json(), indent=1)
