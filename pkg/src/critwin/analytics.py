"""Closed-form window functions, hitting-time PGF, exact H^±, and moment formulas.

Coordinates. Everything named ``*_rw`` or documented as "random-walk units"
lives on the scale of the Laplace(1) walk; branching-random-walk positions
``y`` correspond to walk positions ``2 β_c y``. Use :func:`to_rw_units` and
:func:`to_brw_units` instead of inlining the factor.

Every evaluator calls :func:`si_xy` / :func:`co_xy` through the module
namespace so that a mutation test can swap them out.
"""

from __future__ import annotations

import math

from .model import ContractError, critical_beta

SERIES_CUTOFF = 1e-8
PI2 = math.pi ** 2
WINDOW_MARGIN = 1e-6


# ---------------------------------------------------------------- window functions

def si_xy(alpha: float, y: float) -> float:
    """Si(α, y): sin(√α y)/√α, y at α = 0, sinh(√|α| y)/√|α| for α < 0."""
    if abs(alpha) < SERIES_CUTOFF:
        y2 = y * y
        return y * (1.0 - alpha * y2 / 6.0 + alpha * alpha * y2 * y2 / 120.0)
    if alpha > 0:
        r = math.sqrt(alpha)
        return math.sin(r * y) / r
    r = math.sqrt(-alpha)
    return math.sinh(r * y) / r


def co_xy(alpha: float, y: float) -> float:
    """Co(α, y): cos(√α y), 1 at α = 0, cosh(√|α| y) for α < 0."""
    if abs(alpha) < SERIES_CUTOFF:
        y2 = y * y
        return 1.0 - alpha * y2 / 2.0 + alpha * alpha * y2 * y2 / 24.0
    if alpha > 0:
        return math.cos(math.sqrt(alpha) * y)
    return math.cosh(math.sqrt(-alpha) * y)


def si(alpha: float) -> float:
    """Si(α) = Si(α, 1)."""
    return si_xy(alpha, 1.0)


_SCALE_ABOVE = 300.0


def _scale(alpha: float) -> float:
    """Exponent e such that Si·e^{-e}, Co·e^{-e} stay finite on y in [0, 1]."""
    return math.sqrt(-alpha) if alpha < -_SCALE_ABOVE ** 2 else 0.0


def _si_s(alpha: float, y: float, e: float) -> float:
    """Si(α, y)·e^{-e} with e from :func:`_scale`."""
    if e == 0.0:
        return si_xy(alpha, y)
    return (math.exp(e * (y - 1.0)) - math.exp(-e * (y + 1.0))) / (2.0 * e)


def _co_s(alpha: float, y: float, e: float) -> float:
    """Co(α, y)·e^{-e} with e from :func:`_scale`."""
    if e == 0.0:
        return co_xy(alpha, y)
    return 0.5 * (math.exp(e * (y - 1.0)) + math.exp(-e * (y + 1.0)))


# ---------------------------------------------------------------- unit converters

def to_rw_units(y: float, gamma: float) -> float:
    """Branching-walk position/length -> Laplace-walk position/length."""
    return 2.0 * critical_beta(gamma) * y


def to_brw_units(s: float, gamma: float) -> float:
    """Laplace-walk position/length -> branching-walk position/length."""
    return s / (2.0 * critical_beta(gamma))


def rho_from_beta(gamma: float, beta: float) -> float:
    """Walk discount ρ = β/β_c - 1 matching edge density β."""
    return beta / critical_beta(gamma) - 1.0


# ---------------------------------------------------------------- hitting time

def _pgf_denominator(s: float, L: float) -> float:
    return math.cos(s * L / 2.0) - s * math.sin(s * L / 2.0)


def rho_star(L: float) -> float:
    """Smallest ρ > 0 with cos(√ρ L/2) = √ρ sin(√ρ L/2) (walk units)."""
    if not L > 0:
        raise ContractError(f"L must be positive, got {L}")
    lo, hi = 0.0, math.pi / L
    # f(lo) = 1 > 0, f(hi) = -π/L < 0, and f is strictly decreasing on the bracket
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if _pgf_denominator(mid, L) > 0.0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    return s * s


def rho_star_residual(L: float) -> float:
    return _pgf_denominator(math.sqrt(rho_star(L)), L)


def hitting_pgf(rho: float, L: float) -> float:
    """E_{L/2}[(1+ρ)^τ] for the Laplace walk exiting [0, L]; +inf past ρ*_L."""
    if rho < -1.0:
        raise ContractError(f"rho must be >= -1, got {rho}")
    if rho <= 0.0:
        r = math.sqrt(-rho)
        return (1.0 + rho) / (math.cosh(r * L / 2.0) + r * math.sinh(r * L / 2.0))
    if rho >= rho_star(L):
        return math.inf
    r = math.sqrt(rho)
    d = _pgf_denominator(r, L)
    return (1.0 + rho) / d if d > 0.0 else math.inf


# ---------------------------------------------------------------- exact H^±

def _h_plus_terms(b: float, x: float, rho: float, L: float) -> tuple[float, float]:
    """(s, M) with h_plus = s·e^M.

    The closed form is A·right·e^{bL} - B·left + C·e^{bx}; when Si/Co are
    scaled, right and left carry exponents e(y-1) and -ey. Each term keeps its
    own exponent and the largest is factored out.
    """
    a = rho * L * L
    y = x / L
    e = _scale(a)
    den = (1.0 - rho) * _si_s(a, 1.0, e) + 2.0 / L * _co_s(a, 1.0, e)
    if e == 0.0:
        right = (si_xy(a, y) + co_xy(a, y) / L) / den
        left = (si_xy(a, 1.0 - y) + co_xy(a, 1.0 - y) / L) / den
        er = el = 0.0
    else:
        # Si(a, y) = e^{ey}(1 - e^{-2ey})/(2e), Co(a, y) = e^{ey}(1 + e^{-2ey})/2
        def mant(t):
            q = math.exp(-2.0 * e * t)
            return (-math.expm1(-2.0 * e * t) / (2.0 * e) + (1.0 + q) / (2.0 * L)) / den
        right, er = mant(y), e * (y - 1.0)
        left, el = mant(1.0 - y), -e * y
    c = b * b + rho
    terms = ((((1.0 + rho) / c) * (1.0 + b) * right, b * L + er),
             (-((1.0 + rho) / c) * (b - 1.0) * left, el),
             ((b * b - 1.0) / c, b * x))
    M = max(ex for m, ex in terms if m != 0.0) if any(m != 0.0 for m, _ in terms) else 0.0
    return sum(m * math.exp(ex - M) for m, ex in terms), M


_REMOVABLE_BAND = 3e-5


def _log_h_plus_parts(b: float, x: float, rho: float, L: float) -> tuple[float, float]:
    """(s, M) with h_plus = s·e^M.

    At ρ = -b² the closed form is 0/0 and cancellation spoils it nearby, so
    inside a band of half-width δ the value is interpolated linearly between
    ρ = -b² ± δ (interpolation error O(δ²) balances rounding error O(ε/δ)).
    """
    c = b * b + rho
    d = _REMOVABLE_BAND * max(1.0, abs(rho))
    if abs(c) < d:
        s1, m1 = _h_plus_terms(b, x, -b * b - d, L)
        s2, m2 = _h_plus_terms(b, x, -b * b + d, L)
        M = max(m1, m2)
        t = (c + d) / (2.0 * d)
        return (1.0 - t) * s1 * math.exp(m1 - M) + t * s2 * math.exp(m2 - M), M
    return _h_plus_terms(b, x, rho, L)


def _times_exp(s: float, e: float) -> float:
    if s == 0.0:
        return 0.0
    le = math.log(abs(s)) + e
    return math.copysign(math.exp(le) if le < 709.0 else math.inf, s)


def _check_h_args(b, x, rho, L):
    if b < 0:
        raise ContractError(f"b must be >= 0, got {b}")
    if not (0.0 <= x <= L):
        raise ContractError(f"need 0 <= x <= L, got x={x}, L={L}")
    if rho < -1.0:
        raise ContractError(f"rho must be >= -1, got {rho}")


def h_plus(b: float, x: float, rho: float, L: float) -> float:
    """E_x[Σ_{k<τ} (1+ρ)^k e^{b S_k}] for the Laplace walk killed outside [0, L]."""
    _check_h_args(b, x, rho, L)
    if rho == -1.0:
        return math.exp(b * x)
    if rho > 0.0 and rho >= rho_star(L):
        return math.inf
    return _times_exp(*_log_h_plus_parts(b, x, rho, L))


def h_minus(b: float, x: float, rho: float, L: float) -> float:
    """E_x[Σ_{k<τ} (1+ρ)^k e^{-b S_k}], by reflection x -> L - x."""
    return math.exp(-L * b) * h_plus(b, L - x, rho, L)


# ---------------------------------------------------------------- progeny moments

def _window_alpha(gamma: float, beta: float, K: float) -> tuple[float, float]:
    bc = critical_beta(gamma)
    if bc <= 0:
        raise ContractError("need gamma < 1/2")
    return bc, 4.0 * bc * (beta - bc) * K * K


def expected_progeny(gamma: float, beta: float, K: float, x: float) -> float:
    """Exact E_x[T_[0,K]] of the branching walk killed outside [0, K].

    Obtained from the many-to-one identity: the sum over particles becomes a
    discounted exponential functional of the Laplace walk, which is h_plus in
    walk units.
    """
    bc = critical_beta(gamma)
    if bc <= 0:
        raise ContractError("need gamma < 1/2")
    b, xw, rho, L = 1.0 / (4.0 * bc), 2.0 * bc * x, beta / bc - 1.0, 2.0 * bc * K
    _check_h_args(b, xw, rho, L)
    if rho > 0.0 and rho >= rho_star(L):
        return math.inf
    # e^{-x/2} h_plus, with the e^{bL} scale applied once so large K stays finite
    s, e = _log_h_plus_parts(b, xw, rho, L)
    return _times_exp(s, e - x / 2.0)


def progeny_top_limit(gamma: float, y: float) -> float:
    """lim_{K->inf} E_{K-y}[T_[0,K]] at β = β_c (exact, from the large-L form of h_plus).

    Equals 4β_c(1+4β_c)e^{y/2} + 1 - 16β_c².
    """
    bc = critical_beta(gamma)
    if bc <= 0:
        raise ContractError("need gamma < 1/2")
    if y < 0:
        raise ContractError("need y >= 0")
    return 4.0 * bc * (1.0 + 4.0 * bc) * math.exp(y / 2.0) + 1.0 - 16.0 * bc * bc


def local_limit_mean(gamma: float) -> float:
    """Exact E_0[T_(-inf, X]] for the critical local limit, X ~ Exp(1).

    Averaging :func:`progeny_top_limit` over y ~ Exp(1) (E e^{y/2} = 2) gives
    (1 + 4β_c)² = 4(1-γ)².
    """
    bc = critical_beta(gamma)
    if bc <= 0:
        raise ContractError("need gamma < 1/2")
    return (1.0 + 4.0 * bc) ** 2


def killed_local_limit_mean(gamma: float, beta: float, left: float) -> float:
    """E_0[T_[-left, X]]: local-limit progeny with an extra kill barrier at -left.

    X ~ Exp(1) is integrated out numerically over the exact
    :func:`expected_progeny`. For β < β_c and large ``left`` this is the
    local-limit mean at β; at β = β_c it approaches :func:`local_limit_mean`
    only like O(1/left). With ``left = ln n`` it is a finite-size proxy for
    the graph susceptibility.
    """
    from scipy.integrate import quad

    if not left > 0:
        raise ContractError("left must be positive")
    val, _ = quad(lambda X: math.exp(-X) * expected_progeny(gamma, beta, left + X, left),
                  0.0, 80.0, limit=400)
    return val


def susceptibility_proxy(gamma: float, beta: float, n: int) -> float:
    """First-moment proxy for the size-n susceptibility.

    A uniform vertex sits at distance y ≈ Exp(1) below the top of [0, ln n];
    averaging the exact E_{ln n - y}[T_[0, ln n]] over y ignores collisions
    only. It converges to the susceptibility limit like O(1/ln n), which is
    why moderate n fall well short of the limit.
    """
    from scipy.integrate import quad

    if n < 2:
        raise ContractError("need n >= 2")
    K = math.log(n)
    val, _ = quad(lambda y: math.exp(-y) * expected_progeny(gamma, beta, K, K - y),
                  0.0, K, limit=400)
    return val


def first_moment_predictor(gamma: float, beta: float, K: float, x: float) -> float:
    """Large-K approximation of E_x[T_[0,K]] written with the window functions.

    It matches :func:`expected_progeny` to within a (1±ε) factor for large K
    only at γ = 0; for γ > 0 the exact
    leading term carries an extra factor 4β_c (see :func:`progeny_top_limit`),
    so use :func:`expected_progeny` wherever exact values are needed.
    """
    if not (0.0 <= x <= K):
        raise ContractError(f"need 0 <= x <= K, got x={x}, K={K}")
    bc, a = _window_alpha(gamma, beta, K)
    if a >= PI2 - WINDOW_MARGIN:
        return math.inf
    e = _scale(a)
    lead = (1.0 + 4.0 * bc) * (_si_s(a, x / K, e) + math.exp(-e) / (2.0 * bc * K)) / _si_s(a, 1.0, e)
    return _times_exp(lead, (K - x) / 2.0) + 1.0 - (4.0 * bc) ** 2


def second_moment_bound(gamma: float, beta: float, K: float, x: float) -> float:
    """Shape of the second-moment envelope of T_[0,K], without its constant."""
    if not (0.0 <= x <= K):
        raise ContractError(f"need 0 <= x <= K, got x={x}, K={K}")
    _, a = _window_alpha(gamma, beta, K)
    if a >= PI2 - WINDOW_MARGIN:
        return math.inf
    e = _scale(a)
    lead = (_si_s(a, 1.0 - x / K, e) + math.exp(-e) / K) / (K * K * _si_s(a, 1.0, e) ** 3)
    return _times_exp(lead, K - x / 2.0 - 2.0 * e)


# ---------------------------------------------------------------- inequality checks

_SLACK = 1e-12


def si_bound_check(rho: float, L: float, x: float) -> bool:
    """Check Si(ρL², x/L) <= (x/L)(2 + 1{ρ<0}e^{√|ρ|x}) and the matching Co bound."""
    a = rho * L * L
    y = x / L
    grow = math.exp(math.sqrt(abs(rho)) * x) if rho < 0 else 0.0
    s_bound = y * (2.0 + grow)
    c_bound = grow if rho < 0 else 1.0
    s_ok = si_xy(a, y) <= s_bound * (1.0 + _SLACK)
    c_ok = co_xy(a, y) <= c_bound * (1.0 + _SLACK)
    return bool(s_ok and c_ok)


def si_ratio_check(rho_n: float, n: int) -> float:
    """Si(ρ_n (ln 2n)²) / Si(ρ_n (ln n)²)."""
    if n < 2:
        raise ContractError("need n >= 2")
    return si(rho_n * math.log(2 * n) ** 2) / si(rho_n * math.log(n) ** 2)


def q_ab(x: float, a: float, b: float) -> float:
    """Smoothed cell indicator 1 - cos(2π(x-a)/(b-a)) on [a, b], else 0."""
    if b <= a or x < a or x > b:
        return 0.0
    return 1.0 - math.cos(2.0 * math.pi * (x - a) / (b - a))


def f_ab_bound(a: float, b: float, x: float, rho: float, L: float) -> float:
    """Upper bound on F_{a,b}(x, ρ, L); +inf where the bound does not apply."""
    w = b - a
    q = q_ab(x, a, b)
    if rho <= 0.0:
        return w * (x + 1.0) + q
    if rho >= rho_star(L) or (w > 0 and rho >= 4.0 * PI2 / (w * w)):
        return math.inf
    al = rho * L * L
    s, c = si(al), co_xy(al, 1.0)
    return (w * (1.0 + rho) * (4.0 * PI2 / (4.0 * PI2 - rho * w * w))
            * (s + (b + 1.0) / L) / ((1.0 - rho) * s + 2.0 * c / L) * (x + 1.0) + q)


def resolvent_bound(a: float, b: float, x: float) -> float:
    """3 (b - a)(b + 2)(x + 2)."""
    return 3.0 * (b - a) * (b + 2.0) * (x + 2.0)
