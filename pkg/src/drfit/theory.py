"""Population-level analysis of weighted logistic regression under label noise.

Everything here works with distributions rather than samples. The model is
the single-parameter logistic P(y=1 | x) = e^{s x} / (e^{s x} + e^{-s x})
(multivariate: s^T x). Three population estimators are provided:

  * the clean estimator s*, fitted as if labels were never flipped,
  * the noisy estimator s(0), plain logistic regression on flipped labels,
  * the weighted estimator s_w(b), which maximises

        O_b(s) = p_1 log E[(sigma2(s X_1))^b] + p_0 log E[(sigma2(-s X_0))^b]

    where sigma2(t) = e^t / (e^t + e^{-t}), X_k is the covariate
    distribution conditional on the (possibly wrong) label k, and
    b = 1/alpha is the reciprocal of the weight-penalty strength.

Expectations are evaluated by Gauss-Hermite / Gauss-Legendre quadrature or
exact summation for discrete distributions; all root searches use
geometric bracket expansion followed by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, special


class HypothesisViolation(RuntimeError):
    """A driver was asked to verify a statement whose premises fail."""


class DivergenceError(RuntimeError):
    """A score equation had no root inside the search bracket."""


class OptimisationError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


DIVERGENT = math.inf

_BRACKET_LO = 1e-6
_BRACKET_CAP = 1e4


# ---------------------------------------------------------------------------
# covariate distributions

@dataclass(frozen=True)
class Discrete:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("need matching nonempty atom and probability lists")
        if abs(sum(self.probs) - 1.0) > 1e-12 or min(self.probs) < 0:
            raise ValueError("atom probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("uniform interval must have positive length")


@dataclass(frozen=True)
class Gaussian:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class MvGaussian:
    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (m.size, m.size) or not np.allclose(c, c.T):
            raise ValueError("covariance must be square and symmetric")
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        object.__setattr__(self, "mean", tuple(float(v) for v in m))
        object.__setattr__(self, "cov", tuple(tuple(float(v) for v in row) for row in c))

    @property
    def dim(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class MvUniformBox:
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(d)) for a, d in self.intervals)
        if any(not a < d for a, d in ivs):
            raise ValueError("every interval must have positive length")
        object.__setattr__(self, "intervals", ivs)

    @property
    def dim(self) -> int:
        return len(self.intervals)


def negate(dist):
    """Distribution of -X."""
    if isinstance(dist, Discrete):
        return Discrete(tuple(-v for v in dist.values), dist.probs)
    if isinstance(dist, Uniform):
        return Uniform(-dist.hi, -dist.lo)
    if isinstance(dist, Gaussian):
        return Gaussian(-dist.mean, dist.var)
    if isinstance(dist, MvGaussian):
        return MvGaussian(tuple(-v for v in dist.mean), dist.cov)
    if isinstance(dist, MvUniformBox):
        return MvUniformBox(tuple((-hi, -lo) for lo, hi in dist.intervals))
    raise TypeError(f"cannot negate {type(dist).__name__}")


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Node budget for numeric expectations.

    kind "auto" picks Gauss-Hermite for Gaussians, Gauss-Legendre for
    bounded intervals, exact summation for discrete atoms, and tensor
    products of the 1-D rules in two dimensions.
    """

    kind: str = "auto"
    nodes: int = 64

    def __post_init__(self):
        kinds = ("auto", "gauss-hermite", "gauss-legendre", "discrete-sum", "tensor-product")
        if self.kind not in kinds:
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.nodes < 32:
            raise ValueError("continuous rules need at least 32 nodes")


DEFAULT_RULE = QuadratureRule()


# scipy's rules stay numerically stable at node counts where the
# polynomial-module versions overflow
@lru_cache(maxsize=32)
def _hermite(n: int):
    return special.roots_hermite(n)


@lru_cache(maxsize=32)
def _legendre(n: int):
    return special.roots_legendre(n)


def _check_kind(rule: QuadratureRule, allowed: str):
    if rule.kind not in ("auto", allowed):
        raise ValueError(f"rule kind {rule.kind!r} does not apply here")


def nodes_weights(dist, rule: QuadratureRule = DEFAULT_RULE):
    """Quadrature nodes and weights such that E[f(X)] ~= sum w_i f(x_i).

    One-dimensional distributions give a vector of nodes; two-dimensional
    ones give an (m, 2) array. Discrete distributions are exact.
    """
    if isinstance(dist, Discrete):
        _check_kind(rule, "discrete-sum")
        return np.asarray(dist.values, dtype=float), np.asarray(dist.probs, dtype=float)
    if isinstance(dist, Uniform):
        _check_kind(rule, "gauss-legendre")
        t, w = _legendre(rule.nodes)
        mid, half = 0.5 * (dist.lo + dist.hi), 0.5 * (dist.hi - dist.lo)
        return mid + half * t, 0.5 * w
    if isinstance(dist, Gaussian):
        _check_kind(rule, "gauss-hermite")
        t, w = _hermite(rule.nodes)
        return dist.mean + math.sqrt(2.0 * dist.var) * t, w / math.sqrt(math.pi)
    if isinstance(dist, MvGaussian):
        _check_kind(rule, "tensor-product")
        if dist.dim != 2:
            raise ValueError("tensor-product quadrature is limited to two dimensions")
        t, w = _hermite(rule.nodes)
        ti, tj = np.meshgrid(t, t, indexing="ij")
        z = np.column_stack([ti.ravel(), tj.ravel()]) * math.sqrt(2.0)
        chol = np.linalg.cholesky(np.asarray(dist.cov))
        pts = np.asarray(dist.mean) + z @ chol.T
        wts = np.outer(w, w).ravel() / math.pi
        return pts, wts
    if isinstance(dist, MvUniformBox):
        _check_kind(rule, "tensor-product")
        if dist.dim != 2:
            raise ValueError("tensor-product quadrature is limited to two dimensions")
        t, w = _legendre(rule.nodes)
        (a0, b0), (a1, b1) = dist.intervals
        x0 = 0.5 * (a0 + b0) + 0.5 * (b0 - a0) * t
        x1 = 0.5 * (a1 + b1) + 0.5 * (b1 - a1) * t
        xi, xj = np.meshgrid(x0, x1, indexing="ij")
        pts = np.column_stack([xi.ravel(), xj.ravel()])
        wts = 0.25 * np.outer(w, w).ravel()
        return pts, wts
    raise TypeError(f"no quadrature for {type(dist).__name__}")


def expect(dist, f, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """E[f(X)] by quadrature (exact for discrete X). f must accept arrays."""
    x, w = nodes_weights(dist, rule)
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise FloatingPointError("integrand evaluated non-finite at a quadrature node")
    return float(w @ fx)


# ---------------------------------------------------------------------------
# numerically safe pieces of the logistic objective

def softplus(t):
    t = np.asarray(t, dtype=float)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def log_sigma2(t):
    """log of sigma2(t) = e^t / (e^t + e^{-t}), stable for large |t|."""
    return -softplus(-2.0 * np.asarray(t, dtype=float))


def weight_kernel(t, b):
    """g(t, b) = e^{-2t} / (1 + e^{-2t})^{b+1}, stable for large |t|."""
    t = np.asarray(t, dtype=float)
    return np.exp(-2.0 * t - (b + 1.0) * softplus(-2.0 * t))


# ---------------------------------------------------------------------------
# population problems

@dataclass(frozen=True)
class PopulationProblem:
    """Clean class distributions plus a label-flip model.

    dist1 is the clean class-1 covariate distribution. dist0 defaults to
    the negation of dist1 (symmetric_negation); pass it explicitly for
    asymmetric constructions. q is the flip probability, either one
    number for both classes or a (q_1, q_0) pair. p_star_1 is the clean
    prior of class 1.
    """

    dist1: object
    dist0: object | None = None
    symmetric_negation: bool = True
    p_star_1: float = 0.5
    q: float | tuple[float, float] = 0.0
    nodes: int = 64

    def __post_init__(self):
        if self.dist0 is not None and self.symmetric_negation:
            raise ValueError("explicit dist0 contradicts symmetric_negation")
        if self.dist0 is None and not self.symmetric_negation:
            raise ValueError("dist0 required when symmetric_negation is off")
        if not 0 < self.p_star_1 < 1:
            raise ValueError("p_star_1 must lie strictly between 0 and 1")
        q1, q0 = self.rates
        if not (0 <= q1 < 0.5 and 0 <= q0 < 0.5):
            raise ValueError("flip rates must lie in [0, 0.5)")

    @property
    def rates(self) -> tuple[float, float]:
        if isinstance(self.q, tuple):
            return float(self.q[0]), float(self.q[1])
        return float(self.q), float(self.q)

    @property
    def clean0(self):
        return self.dist0 if self.dist0 is not None else negate(self.dist1)

    @property
    def label_priors(self) -> tuple[float, float]:
        """(p_1, p_0): marginal probabilities of the noisy labels."""
        q1, q0 = self.rates
        p1s, p0s = self.p_star_1, 1.0 - self.p_star_1
        p1 = p1s * (1 - q1) + p0s * q0
        return p1, 1.0 - p1

    def label_mixture(self, label: int) -> list[tuple[object, float]]:
        """Components (clean dist, weight) of X conditional on noisy label."""
        q1, q0 = self.rates
        p1s, p0s = self.p_star_1, 1.0 - self.p_star_1
        p1, p0 = self.label_priors
        if label == 1:
            return [(self.dist1, p1s * (1 - q1) / p1), (self.clean0, p0s * q0 / p1)]
        return [(self.dist1, p1s * q1 / p0), (self.clean0, p0s * (1 - q0) / p0)]

    @property
    def is_fully_symmetric(self) -> bool:
        q1, q0 = self.rates
        return self.dist0 is None and q1 == q0 and self.p_star_1 == 0.5

    @property
    def rule(self) -> QuadratureRule:
        return QuadratureRule(nodes=self.nodes)

    def with_q(self, q) -> "PopulationProblem":
        return PopulationProblem(
            self.dist1, self.dist0, self.symmetric_negation, self.p_star_1, q, self.nodes
        )


def _mixture_expect(components, f, rule) -> float:
    return sum(w * expect(d, f, rule) for d, w in components)


# ---------------------------------------------------------------------------
# one-dimensional estimators

def _root_by_bisection(f, lo, hi, f_lo, tol=1e-10):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _positive_root(score, what: str) -> float:
    """Smallest positive root of a score that starts positive near 0 and
    eventually turns negative; geometric expansion then bisection."""
    lo = _BRACKET_LO
    f_lo = score(lo)
    if f_lo <= 0:
        # root sits below the expansion start; the score is positive at 0+
        return _root_by_bisection(score, 0.0, lo, None)
    hi = lo
    while hi < _BRACKET_CAP:
        hi *= 2.0
        if score(hi) <= 0:
            return _root_by_bisection(score, hi / 2.0, hi, f_lo)
    raise DivergenceError(f"{what}: score has no sign change below {_BRACKET_CAP:g}")


def _score_function(prob: PopulationProblem, constant: float):
    """s -> constant - E[x tanh(s x)] with X the overall covariate mixture."""
    rule = prob.rule
    overall = [(prob.dist1, prob.p_star_1), (prob.clean0, 1.0 - prob.p_star_1)]

    def score(s: float) -> float:
        return constant - _mixture_expect(overall, lambda x: x * np.tanh(s * x), rule)

    return score


def clean_estimator_1d(prob: PopulationProblem) -> float:
    """Population logistic estimate with uncontaminated labels."""
    rule = prob.rule
    m1 = expect(prob.dist1, lambda x: x, rule)
    m0 = expect(prob.clean0, lambda x: x, rule)
    if not m1 > 0:
        raise HypothesisViolation("clean class-1 covariate must have positive mean")
    if m0 > m1:
        raise HypothesisViolation("class means are ordered the wrong way")
    constant = prob.p_star_1 * m1 - (1.0 - prob.p_star_1) * m0
    return _positive_root(_score_function(prob, constant), "clean estimator")


def noisy_estimator_1d(prob: PopulationProblem) -> float:
    """Population logistic estimate with flipped labels: same score
    equation with the label-conditional means replacing the clean ones."""
    rule = prob.rule
    p1, p0 = prob.label_priors
    m1 = _mixture_expect(prob.label_mixture(1), lambda x: x, rule)
    m0 = _mixture_expect(prob.label_mixture(0), lambda x: x, rule)
    constant = p1 * m1 - p0 * m0
    if constant <= 0:
        return 0.0
    return _positive_root(_score_function(prob, constant), "noisy estimator")


def _safe_log(e: float) -> float:
    return math.log(e) if e > 0.0 else -math.inf


def weighted_objective_1d(prob: PopulationProblem, b: float, s):
    """O_b(s), vectorised over s. For b = 0 this is the (shifted) expected
    log-likelihood, i.e. the b -> 0 limit of (1/b) O_b up to constants."""
    rule = prob.rule
    p1, p0 = prob.label_priors
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s)
    mix1, mix0 = prob.label_mixture(1), prob.label_mixture(0)
    for i, si in enumerate(s):
        if b == 0.0:
            e1 = _mixture_expect(mix1, lambda x: log_sigma2(si * x), rule)
            e0 = _mixture_expect(mix0, lambda x: log_sigma2(-si * x), rule)
            out[i] = p1 * e1 + p0 * e0
        else:
            e1 = _mixture_expect(mix1, lambda x: np.exp(b * log_sigma2(si * x)), rule)
            e0 = _mixture_expect(mix0, lambda x: np.exp(b * log_sigma2(-si * x)), rule)
            out[i] = p1 * _safe_log(e1) + p0 * _safe_log(e0)
    return float(out[0]) if scalar else out


def _m_function(prob: PopulationProblem, b: float):
    """M(b, s) = E[X_1 g(s X_1, b)] for the fully symmetric case; its
    smallest positive root is the weighted estimator."""
    rule = prob.rule
    mix1 = prob.label_mixture(1)

    def m(s: float) -> float:
        return _mixture_expect(mix1, lambda x: x * weight_kernel(s * x, b), rule)

    return m


def weighted_estimator_1d(prob: PopulationProblem, b: float) -> float:
    """s_w(b); returns DIVERGENT (math.inf) when no finite maximiser
    exists below the search cap, which is the expected outcome for b >= 1
    in the symmetric setting."""
    if b < 0:
        raise ValueError("b must be nonnegative")
    if prob.is_fully_symmetric:
        m = _m_function(prob, b)
        try:
            return _positive_root(m, "weighted estimator")
        except DivergenceError:
            return DIVERGENT
    # general case: maximise O_b on a dense grid, then refine
    grid = np.concatenate([np.linspace(_BRACKET_LO, 30.0, 3001),
                           np.geomspace(30.0, _BRACKET_CAP, 200)])
    vals = weighted_objective_1d(prob, b, grid)
    k = int(np.argmax(vals))
    if k >= len(grid) - 2:
        return DIVERGENT
    lo, hi = grid[max(k - 1, 0)], grid[k + 1]
    return _golden_max(lambda s: float(weighted_objective_1d(prob, b, s)), lo, hi)[0]


def _golden_max(f, lo, hi, tol=1e-11):
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = f(d)
    mid = 0.5 * (lo + hi)
    return mid, f(mid)


def find_bstar_1d(prob: PopulationProblem, tol: float = 1e-6) -> float:
    """The b in [0, 1) at which the weighted estimator recovers the clean
    one. Uses that s_w(b) is increasing in b for symmetric problems.

    The prose around the uniqueness result says "b* > 1" in one spot, but
    its own limit b -> 1 forces the crossing inside [0, 1) (equivalently
    alpha* > 1), so the search runs over [0, 1).
    """
    s_star = clean_estimator_1d(prob)
    s0 = weighted_estimator_1d(prob, 0.0)
    if s0 > s_star + tol:
        raise HypothesisViolation("unweighted estimate already exceeds the clean one")
    lo, hi = 0.0, None
    b = 0.5
    while hi is None:
        sw = weighted_estimator_1d(prob, b)
        if sw >= s_star:
            hi = b
        else:
            lo = b
            b = 0.5 * (1.0 + b)
            if 1.0 - b < 1e-12:
                raise DivergenceError("no b < 1 reaches the clean estimate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        sw = weighted_estimator_1d(prob, mid)
        if abs(sw - s_star) < tol:
            return mid
        if sw < s_star:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# multivariate Gaussian case

@dataclass(frozen=True)
class MvGaussianCase:
    """Closed-form pieces for Gaussian class-1 covariates with negated
    class 0: the common direction u of every weighted estimate, the clean
    optimum s_star = cov^{-1} mu, and the 1-D reduction along u."""

    u: tuple[float, ...]
    s_star: tuple[float, ...]
    reduction: PopulationProblem

    def c_hat(self, b: float) -> float:
        """Coefficient of the weighted estimate on u. As b approaches 1
        the defining integrand develops a boundary layer of width
        ~1/(2bs) and the default node budget under-resolves it; trust
        this route for b up to around the clean-recovery point."""
        return weighted_estimator_1d(self.reduction, b)

    def estimate(self, b: float) -> np.ndarray:
        return self.c_hat(b) * np.asarray(self.u)

    def find_bstar(self, tol: float = 1e-6) -> float:
        return find_bstar_1d(self.reduction, tol)


def mv_gaussian_case(mu, cov, q, nodes: int = 64) -> MvGaussianCase:
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    try:
        s_star = np.linalg.solve(cov, mu)
    except np.linalg.LinAlgError:
        raise ValueError("covariance matrix is singular") from None
    u = s_star / np.linalg.norm(s_star)
    # projection u^T X*_1 is Gaussian, so the whole problem collapses to 1-D
    reduction = PopulationProblem(
        Gaussian(float(u @ mu), float(u @ cov @ u)), q=q, nodes=nodes
    )
    return MvGaussianCase(tuple(u), tuple(s_star), reduction)


def w_identity_residual(mu, cov, nodes: int = 64) -> float:
    """E[W e^{-W} / (e^W + e^{-W})] for W = (cov^{-1} mu)^T X*_1, which is
    zero because W has equal mean and variance mu^T cov^{-1} mu."""
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    m = float(mu @ np.linalg.solve(cov, mu))
    dist = Gaussian(m, m)
    return expect(dist, lambda w: w * np.exp(log_sigma2(-w)), QuadratureRule(nodes=nodes))


# ---------------------------------------------------------------------------
# general multivariate estimator (r = 2)

def _mv_points(prob: PopulationProblem):
    d1 = prob.dist1
    if not isinstance(d1, (MvGaussian, MvUniformBox)):
        raise TypeError("multivariate estimation needs a 2-D covariate distribution")
    if d1.dim != 2:
        raise ValueError("only r = 2 is supported")
    pts1, wts1 = nodes_weights(d1, prob.rule)
    pts0, wts0 = nodes_weights(prob.clean0, prob.rule)
    return pts1, wts1, pts0, wts0


def _mv_neg_objective(prob: PopulationProblem, b: float):
    """Returns f(s) = -O_b(s) and its gradient, for scipy minimisation."""
    pts1, wts1, pts0, wts0 = _mv_points(prob)
    q1, q0 = prob.rates
    p1s, p0s = prob.p_star_1, 1.0 - prob.p_star_1
    p1, p0 = prob.label_priors
    m11, m10 = p1s * (1 - q1) / p1, p0s * q0 / p1
    m01, m00 = p1s * q1 / p0, p0s * (1 - q0) / p0

    def fg(s):
        t1 = pts1 @ s
        t0 = pts0 @ s
        if b == 0.0:
            e1 = m11 * (wts1 @ log_sigma2(t1)) + m10 * (wts0 @ log_sigma2(t0))
            e0 = m01 * (wts1 @ log_sigma2(-t1)) + m00 * (wts0 @ log_sigma2(-t0))
            # d/dt log sigma2(t) = 2 sigma2(-t)
            g1 = 2.0 * (m11 * (wts1 * np.exp(log_sigma2(-t1))) @ pts1
                        + m10 * (wts0 * np.exp(log_sigma2(-t0))) @ pts0)
            g0 = -2.0 * (m01 * (wts1 * np.exp(log_sigma2(t1))) @ pts1
                         + m00 * (wts0 * np.exp(log_sigma2(t0))) @ pts0)
            return -(p1 * e1 + p0 * e0), -(p1 * g1 + p0 * g0)
        w1p = np.exp(b * log_sigma2(t1))
        w0p = np.exp(b * log_sigma2(t0))
        w1n = np.exp(b * log_sigma2(-t1))
        w0n = np.exp(b * log_sigma2(-t0))
        e1 = m11 * (wts1 @ w1p) + m10 * (wts0 @ w0p)
        e0 = m01 * (wts1 @ w1n) + m00 * (wts0 @ w0n)
        de1 = 2.0 * b * (m11 * (wts1 * w1p * np.exp(log_sigma2(-t1))) @ pts1
                         + m10 * (wts0 * w0p * np.exp(log_sigma2(-t0))) @ pts0)
        de0 = -2.0 * b * (m01 * (wts1 * w1n * np.exp(log_sigma2(t1))) @ pts1
                          + m00 * (wts0 * w0n * np.exp(log_sigma2(t0))) @ pts0)
        val = p1 * math.log(e1) + p0 * math.log(e0)
        grad = p1 * de1 / e1 + p0 * de0 / e0
        return -val, -grad

    return fg


_MV_START_SCALES = (0.1, 1.0, 5.0)


def general_mv_estimator(
    prob: PopulationProblem,
    b: float,
    starts=None,
    gtol: float = 1e-12,
) -> np.ndarray:
    """Maximise O_b(s) over s in R^2 by quasi-Newton ascent from several
    starting points; returns the best stationary point found."""
    fg = _mv_neg_objective(prob, b)
    if starts is None:
        starts = [c * np.ones(2) for c in _MV_START_SCALES]
    best, best_val, converged = None, math.inf, False
    for x0 in starts:
        res = optimize.minimize(fg, np.asarray(x0, dtype=float), jac=True,
                                method="BFGS",
                                options={"gtol": gtol, "maxiter": 1000})
        grad_norm = float(np.linalg.norm(res.jac))
        if res.fun < best_val:
            best, best_val = res.x, res.fun
        # BFGS often stops on "precision loss" at an excellent point, so
        # judge convergence by the gradient rather than the status flag
        if grad_norm < 1e-6:
            converged = True
    if best is None or float(np.linalg.norm(best)) > _BRACKET_CAP:
        raise OptimisationError("no finite maximiser found", best=best)
    if not converged:
        raise OptimisationError("quasi-Newton ascent did not reach a stationary point",
                                best=best)
    return best


@dataclass(frozen=True)
class MvBstarResult:
    b_star: float
    ratio: float
    s_star: tuple[float, ...]
    s_noisy: tuple[float, ...]
    s_best: tuple[float, ...]


def find_mv_bstar(prob: PopulationProblem, b_hi: float = 0.95, tol: float = 1e-4) -> MvBstarResult:
    """Search b in [0, b_hi] for the weighted estimate closest to the
    clean optimum; reports the distance ratio against the unweighted one."""
    clean = prob.with_q(0.0)
    s_star = general_mv_estimator(clean, 0.0)
    s0 = general_mv_estimator(prob, 0.0)
    d0 = float(np.linalg.norm(s0 - s_star))
    if d0 == 0.0:
        return MvBstarResult(0.0, 0.0, tuple(s_star), tuple(s0), tuple(s0))

    def dist(b: float) -> float:
        sb = general_mv_estimator(prob, b, starts=[s_star, 0.5 * s_star + 0.5 * s0])
        return float(np.linalg.norm(sb - s_star))

    b_star, _ = _golden_max(lambda b: -dist(b), 0.0, b_hi, tol=tol)
    s_best = general_mv_estimator(prob, b_star, starts=[s_star])
    ratio = float(np.linalg.norm(s_best - s_star)) / d0
    return MvBstarResult(float(b_star), ratio, tuple(s_star), tuple(s0), tuple(s_best))


# ---------------------------------------------------------------------------
# discontinuity scan over alpha for discrete problems

@dataclass(frozen=True)
class ScanEntry:
    alpha: float
    b: float
    argmax: float
    value: float
    local_maxima: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ScanReport:
    entries: tuple[ScanEntry, ...]
    jump_alpha: float | None

    @property
    def max_local_maxima(self) -> int:
        return max(len(e.local_maxima) for e in self.entries)


def discontinuity_scan(
    prob: PopulationProblem,
    alpha_grid,
    s_max: float = 30.0,
    grid_points: int = 6001,
) -> ScanReport:
    """Track the global maximiser of O_{1/alpha} over an alpha grid and
    report where (if anywhere) it jumps between local-maximum branches.

    A dense s grid locates candidate maxima; each is refined by golden
    section. An argmax move of more than max(0.05, 25%) between
    neighbouring alphas counts as a jump.

    The profile is evaluated through the problem's own quadrature rule.
    For continuous distributions the integrand's transition layer narrows
    like 1/(2bs), so far tails need a node budget that resolves it;
    discrete mixtures are summed exactly and are safe at any range.
    """
    alphas = [float(a) for a in alpha_grid]
    if any(a <= 0 for a in alphas):
        raise ValueError("alpha grid must be positive")
    grid = np.linspace(_BRACKET_LO, s_max, grid_points)
    entries = []
    for a in alphas:
        b = 1.0 / a
        vals = weighted_objective_1d(prob, b, grid)
        peaks = []
        for i in range(1, len(grid) - 1):
            if vals[i] > vals[i - 1] + 1e-13 and vals[i] > vals[i + 1] + 1e-13:
                s_ref, v_ref = _golden_max(
                    lambda s: float(weighted_objective_1d(prob, b, s)),
                    grid[i - 1], grid[i + 1],
                )
                peaks.append((float(s_ref), float(v_ref)))
        # Still rising at the edge of the grid means a divergent branch,
        # but the far tail of a settled profile is flat to machine noise,
        # so demand a rise that clears the quadrature noise floor.
        if vals[-1] > vals[-2] and vals[-1] - np.min(vals[-32:]) > 1e-9:
            peaks.append((math.inf, float(vals[-1])))
        if not peaks:
            k = int(np.argmax(vals))
            peaks.append((float(grid[k]), float(vals[k])))
        argmax, value = max(peaks, key=lambda p: p[1])
        entries.append(ScanEntry(a, b, argmax, value, tuple(peaks)))

    jump_alpha = None
    for prev, cur in zip(entries, entries[1:]):
        x, y = prev.argmax, cur.argmax
        if math.isinf(x) != math.isinf(y):
            jump_alpha = 0.5 * (prev.alpha + cur.alpha)
            break
        if not math.isinf(x) and abs(y - x) > max(0.05, 0.25 * abs(x)):
            jump_alpha = 0.5 * (prev.alpha + cur.alpha)
            break
    return ScanReport(tuple(entries), jump_alpha)
