"""Mixture of factorized logistic densities.

Each component is a product of independent one-dimensional logistic
densities. The fitting routine is an EM loop whose M-step uses guarded
Newton updates for the logistic location and (log-)scale, so every update
is accepted only if it raises the expected complete-data log-likelihood.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import InsufficientData, ParseError

logger = logging.getLogger(__name__)

S_MIN = 1e-4
FORMAT_VERSION = 1
_LN3 = np.log(3.0)
_NEWTON_STEPS = 5
_MAX_HALVINGS = 30
_EMPTY_MASS = 1e-8
_MIN_STEP = 1e-10


@dataclass(frozen=True)
class LogisticComponent:
    mu: np.ndarray
    s: np.ndarray


@dataclass(frozen=True, eq=False)
class MixtureOfLogistics:
    """``weights`` has shape ``(K,)``; ``loc`` and ``scale`` have shape ``(K, D)``."""

    weights: np.ndarray
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        loc = np.array(self.loc, dtype=float)
        scale = np.array(self.scale, dtype=float)
        if loc.ndim == 1:
            loc = loc[None, :]
        if scale.ndim == 1:
            scale = scale[None, :]
        if w.size < 1:
            raise ValueError("mixture needs at least one component")
        if loc.shape != scale.shape or loc.shape[0] != w.size:
            raise ValueError(
                f"shape mismatch: weights {w.shape}, loc {loc.shape}, scale {scale.shape}"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must lie on the simplex, got sum {w.sum()!r}")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(scale))):
            raise ValueError("locations and scales must be finite")
        if np.any(scale <= 0):
            raise ValueError("scales must be strictly positive")
        scale = np.maximum(scale, S_MIN)
        for name, arr in (("weights", w), ("loc", loc), ("scale", scale)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.loc.shape[1]

    @property
    def components(self) -> list[LogisticComponent]:
        return [LogisticComponent(m, s) for m, s in zip(self.loc, self.scale)]

    def allclose(self, other: "MixtureOfLogistics", atol: float = 1e-12) -> bool:
        return (
            self.weights.shape == other.weights.shape
            and self.loc.shape == other.loc.shape
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
            and np.allclose(self.loc, other.loc, rtol=0, atol=atol)
            and np.allclose(self.scale, other.scale, rtol=0, atol=atol)
        )

    def identical(self, other: "MixtureOfLogistics") -> bool:
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.loc, other.loc)
            and np.array_equal(self.scale, other.scale)
        )


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


def logistic_logpdf(x, mu, s):
    """Elementwise log of ``exp(-z) / (s (1 + exp(-z))^2)`` with ``z = (x - mu) / s``."""
    a = np.abs((x - mu) / s)
    # the density is symmetric in z, so use |z| for a stable softplus
    return -a - 2.0 * np.log1p(np.exp(-a)) - np.log(s)


def _component_logpdf(theta: MixtureOfLogistics, x: np.ndarray) -> np.ndarray:
    # (N, K): log pi_k + sum_d log f(x_d | mu_kd, s_kd)
    lp = logistic_logpdf(x[:, None, :], theta.loc[None], theta.scale[None]).sum(-1)
    with np.errstate(divide="ignore"):
        return lp + np.log(theta.weights)[None]


def log_density(theta: MixtureOfLogistics, x) -> float | np.ndarray:
    """Log density at a single point ``(D,)`` or at each row of ``(N, D)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x[None] if single else x
    if xs.shape[1] != theta.dim:
        raise ValueError(f"expected dimension {theta.dim}, got {xs.shape[1]}")
    out = _logsumexp(_component_logpdf(theta, xs), axis=1)
    return float(out[0]) if single else out


def nll(theta: MixtureOfLogistics, x) -> float | np.ndarray:
    return -log_density(theta, x)


def entropy_term(weights) -> float:
    """``sum_k pi_k log pi_k`` (with ``0 log 0 = 0``); lies in ``[-log K, 0]``."""
    w = np.asarray(weights, dtype=float)
    nz = w[w > 0]
    return float(np.sum(nz * np.log(nz)))


def total_loss(theta: MixtureOfLogistics, x, lam: float) -> float | np.ndarray:
    return nll(theta, x) + lam * entropy_term(theta.weights)


def mean_nll(theta: MixtureOfLogistics, samples) -> float:
    return float(np.mean(nll(theta, np.atleast_2d(samples))))


def sample_from_uniforms(theta: MixtureOfLogistics, component: int, u) -> np.ndarray:
    """Inverse-CDF draw from one component given per-dimension uniforms."""
    u = np.asarray(u, dtype=float)
    return theta.loc[component] + theta.scale[component] * (np.log(u) - np.log1p(-u))


def sample(theta: MixtureOfLogistics, rng: np.random.Generator, size: int | None = None):
    """Ancestral sampling: a component from the weights, then inverse CDF per dimension."""
    n = 1 if size is None else int(size)
    comps = rng.choice(theta.n_components, size=n, p=theta.weights)
    u = rng.random((n, theta.dim))
    tiny = np.finfo(float).tiny
    u = np.clip(u, tiny, 1.0 - np.finfo(float).eps / 2)
    x = theta.loc[comps] + theta.scale[comps] * (np.log(u) - np.log1p(-u))
    return x[0] if size is None else x


# ---------------------------------------------------------------------------
# fitting


def _weighted_q(x, resp, loc, scale):
    """Expected complete-data log-likelihood per (component, dimension)."""
    return np.einsum("nk,nkd->kd", resp, logistic_logpdf(x[:, None, :], loc[None], scale[None]))


def _newton_loc(x, resp, loc, scale):
    loc = loc.copy()
    q = _weighted_q(x, resp, loc, scale)
    for _ in range(_NEWTON_STEPS):
        z = (x[:, None, :] - loc[None]) / scale[None]
        t = np.tanh(z / 2.0)
        grad = np.einsum("nk,nkd->kd", resp, t)
        curv = 0.5 * np.einsum("nk,nkd->kd", resp, 1.0 - t * t)
        step = scale * grad / np.maximum(curv, 1e-300)
        if not np.any(np.abs(step) > _MIN_STEP * scale):
            break
        loc, q = _guarded_update(
            lambda m: _weighted_q(x, resp, m, scale), loc, step, q, _MIN_STEP * scale
        )
    return loc


def _newton_scale(x, resp, loc, scale):
    log_s = np.log(scale)
    log_min = np.log(S_MIN)
    q = _weighted_q(x, resp, loc, scale)
    for _ in range(_NEWTON_STEPS):
        s = np.exp(log_s)
        z = (x[:, None, :] - loc[None]) / s[None]
        t = np.tanh(z / 2.0)
        zt = z * t
        grad = np.einsum("nk,nkd->kd", resp, zt - 1.0)
        hess = -np.einsum("nk,nkd->kd", resp, zt + 0.5 * z * z * (1.0 - t * t))
        step = -grad / np.minimum(hess, -1e-300)
        target = np.maximum(log_s + step, log_min)
        if not np.any(np.abs(target - log_s) > _MIN_STEP):
            break
        log_s, q = _guarded_update(
            lambda ls: _weighted_q(x, resp, loc, np.exp(ls)), log_s, target - log_s, q, _MIN_STEP
        )
    return np.maximum(np.exp(log_s), S_MIN)


def _guarded_update(objective, params, step, q_old, min_step):
    """Apply ``step`` elementwise, halving where the objective would drop."""
    out = params.copy()
    # below min_step the change in the objective is lost in rounding
    pending = np.abs(step) > min_step
    q_new = q_old.copy()
    if not pending.any():
        return out, q_new
    for _ in range(_MAX_HALVINGS):
        trial = np.where(pending, params + step, out)
        q_trial = objective(trial)
        ok = pending & np.isfinite(q_trial) & (q_trial >= q_old)
        out = np.where(ok, trial, out)
        q_new = np.where(ok, q_trial, q_new)
        pending &= ~ok
        if not pending.any():
            break
        step = step / 2.0
        pending &= np.abs(step) > min_step
        if not pending.any():
            break
    return out, q_new


def _robust_scale(x: np.ndarray) -> np.ndarray:
    med = np.median(x, axis=0)
    return np.median(np.abs(x - med), axis=0) / _LN3


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding in per-dimension standardized units; returns sample indices."""
    unit = np.maximum(_robust_scale(x), S_MIN)
    xs = x / unit
    first = int(rng.integers(len(xs)))
    chosen = [first]
    d2 = np.sum((xs - xs[first]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(len(xs)))
        else:
            idx = int(rng.choice(len(xs), p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((xs - xs[idx]) ** 2, axis=1))
    return np.array(chosen)


def _initialize(x, k, rng):
    n, _ = x.shape
    global_scale = np.maximum(_robust_scale(x), S_MIN)
    centers = x[_kmeans_pp(x, k, rng)]
    unit = global_scale
    dist = np.sum(((x[:, None, :] - centers[None]) / unit) ** 2, axis=2)
    labels = np.argmin(dist, axis=1)
    loc = np.empty_like(centers)
    scale = np.empty_like(centers)
    counts = np.zeros(k)
    for j in range(k):
        members = x[labels == j]
        counts[j] = len(members)
        if len(members) == 0:
            loc[j] = centers[j]
            scale[j] = global_scale
            continue
        loc[j] = np.median(members, axis=0)
        mad = np.median(np.abs(members - loc[j]), axis=0) / _LN3
        scale[j] = np.where(mad > S_MIN, mad, global_scale)
    weights = (counts + 1.0) / (n + k)
    return weights, loc, np.maximum(scale, S_MIN)


def fit_em(
    samples: Iterable,
    k: int = 4,
    lam: float = 0.0,
    max_iters: int = 200,
    tol: float = 1e-6,
    rng: np.random.Generator | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> MixtureOfLogistics:
    """Fit a K-component logistic mixture by EM.

    ``lam`` realizes the entropy bonus on the mixing weights as additive
    smoothing toward uniform: ``pi = (N_k / N + lam / K) / (1 + lam)``. With
    ``lam = 0`` every iteration is a generalized EM step and the mean NLL never
    increases.

    Args:
        samples: ``(N, D)`` array-like of observations.
        k: number of components.
        lam: weight smoothing strength (>= 0).
        max_iters: iteration cap.
        tol: stop once the mean NLL improves by less than this.
        rng: generator for the k-means++ seeding.
        callback: called as ``callback(iteration, mean_nll)`` after each iteration.
            Iteration 0 reports the initial parameters.

    Raises:
        InsufficientData: fewer samples than components, or ``k < 1``.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if k < 1:
        raise InsufficientData(f"need at least one component, got K={k}")
    if x.shape[0] < k or x.shape[0] == 0:
        raise InsufficientData(f"need at least K={k} samples, got {x.shape[0]}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    rng = np.random.default_rng(0) if rng is None else rng
    n = x.shape[0]

    weights, loc, scale = _initialize(x, k, rng)
    theta = MixtureOfLogistics(weights / weights.sum(), loc, scale)
    prev = mean_nll(theta, x)
    if callback is not None:
        callback(0, prev)

    for it in range(1, max_iters + 1):
        comp = _component_logpdf(theta, x)
        ll = _logsumexp(comp, axis=1)
        resp = np.exp(comp - ll[:, None])
        nk = resp.sum(axis=0)

        loc, scale = theta.loc.copy(), theta.scale.copy()
        empty = nk < _EMPTY_MASS
        if empty.any():
            worst = np.argsort(ll)
            global_scale = np.maximum(_robust_scale(x), S_MIN)
            for slot, j in enumerate(np.flatnonzero(empty)):
                logger.debug("reinitializing empty component %d", j)
                loc[j] = x[worst[slot % n]]
                scale[j] = global_scale
                resp[:, j] = 0.0
                resp[worst[slot % n], :] = 0.0
                resp[worst[slot % n], j] = 1.0
            nk = resp.sum(axis=0)

        weights = (nk / n + lam / k) / (1.0 + lam)
        weights = weights / weights.sum()
        loc = _newton_loc(x, resp, loc, scale)
        scale = _newton_scale(x, resp, loc, scale)
        theta = MixtureOfLogistics(weights, loc, scale)

        cur = mean_nll(theta, x)
        if callback is not None:
            callback(it, cur)
        if prev - cur < tol:
            break
        prev = cur
    return theta


# ---------------------------------------------------------------------------
# text serialization


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def format_mixture(theta: MixtureOfLogistics) -> list[str]:
    lines = [f"K {theta.n_components}", f"dim {theta.dim}"]
    for w, mu, s in zip(theta.weights, theta.loc, theta.scale):
        lines.append(f"component {fmt(w)}")
        lines.append("mu " + " ".join(fmt(v) for v in mu))
        lines.append("s " + " ".join(fmt(v) for v in s))
    return lines


class LineReader:
    """Cursor over ``(line_no, tokens)`` pairs, skipping blanks and comments."""

    def __init__(self, lines: Iterable[str]):
        self._items = []
        for i, raw in enumerate(lines, start=1):
            text = raw.strip()
            if text and not text.startswith("#"):
                self._items.append((i, text.split()))
        self._pos = 0

    @property
    def exhausted(self) -> bool:
        return self._pos >= len(self._items)

    @property
    def line_no(self) -> int | None:
        if self.exhausted:
            return self._items[-1][0] if self._items else None
        return self._items[self._pos][0]

    def expect(self, keyword: str, n_values: int | None = None) -> tuple[int, list[str]]:
        if self.exhausted:
            raise ParseError("unexpected end of file", line=self.line_no, field=keyword)
        line, tokens = self._items[self._pos]
        if tokens[0] != keyword:
            raise ParseError(f"expected '{keyword}', found '{tokens[0]}'", line=line, field=keyword)
        values = tokens[1:]
        if n_values is not None and len(values) != n_values:
            raise ParseError(
                f"expected {n_values} value(s), found {len(values)}", line=line, field=keyword
            )
        self._pos += 1
        return line, values

    def expect_int(self, keyword: str) -> int:
        line, (value,) = self.expect(keyword, 1)
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"not an integer: {value!r}", line=line, field=keyword) from None

    def expect_floats(self, keyword: str, n: int) -> np.ndarray:
        line, values = self.expect(keyword, n)
        try:
            arr = np.array([float(v) for v in values])
        except ValueError as exc:
            raise ParseError(str(exc), line=line, field=keyword) from None
        if not np.all(np.isfinite(arr)):
            raise ParseError("non-finite value", line=line, field=keyword)
        return arr


def parse_mixture(reader: LineReader) -> MixtureOfLogistics:
    start = reader.line_no
    k = reader.expect_int("K")
    d = reader.expect_int("dim")
    if k < 1 or d < 1:
        raise ParseError("K and dim must be positive", line=start, field="K")
    weights, locs, scales = [], [], []
    for _ in range(k):
        (w,) = reader.expect_floats("component", 1)
        weights.append(w)
        locs.append(reader.expect_floats("mu", d))
        line = reader.line_no
        s = reader.expect_floats("s", d)
        if np.any(s <= 0):
            raise ParseError("scales must be positive", line=line, field="s")
        scales.append(s)
    weights = np.array(weights)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ParseError(
            f"component weights must be nonnegative and sum to 1, got {weights.sum()!r}",
            line=start,
            field="component",
        )
    return MixtureOfLogistics(weights, np.array(locs), np.array(scales))


def dumps_mixture(theta: MixtureOfLogistics) -> str:
    return "\n".join(["mol-params", f"format_version {FORMAT_VERSION}", *format_mixture(theta)]) + "\n"


def loads_mixture(text: str) -> MixtureOfLogistics:
    reader = LineReader(text.splitlines())
    reader.expect("mol-params", 0)
    check_version(reader)
    theta = parse_mixture(reader)
    if not reader.exhausted:
        raise ParseError("trailing content", line=reader.line_no)
    return theta


def check_version(reader: LineReader) -> None:
    line = reader.line_no
    version = reader.expect_int("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(
            f"unsupported format version {version} (expected {FORMAT_VERSION})",
            line=line,
            field="format_version",
        )
