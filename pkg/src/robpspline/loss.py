"""Loss functions, their scores and the IRLS weights ``w(r) = psi(r) / r``.

All functions are vectorised over ``x``. The kinds are

    ls          rho = x**2                      psi = 2x
    huber       Huber, tuning ``k``
    tukey       Tukey bisquare, tuning ``c``
    hampel      three-part redescending, ``a <= b < c``
    check       quantile loss, level ``alpha``
    expectile   asymmetric squared loss, level ``alpha``
    lq          |x|**exponent with 1 < exponent < 2
    absolute    |x|
    logcosh     log(cosh(x))
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "EPS_WEIGHT",
    "LossSpec",
    "least_squares",
    "huber",
    "tukey",
    "hampel",
    "check",
    "expectile",
    "lq",
    "absolute",
    "logcosh",
    "rho",
    "psi",
    "weight",
    "psi_bound",
    "make_loss",
]

# threshold on standardized residuals below which weights use their limit
EPS_WEIGHT = 1e-8

KINDS = ("ls", "huber", "tukey", "hampel", "check", "expectile", "lq", "absolute", "logcosh")


@dataclass(frozen=True)
class LossSpec:
    """
    An immutable member of the loss catalogue.

    Only the parameters relevant to ``kind`` are set. Use the module-level
    constructors (``huber(1.345)``, ``check(0.25)``, ...) rather than
    instantiating directly.
    """

    kind: str
    k: float = None
    c: float = None
    a: float = None
    b: float = None
    alpha: float = None
    exponent: float = None
    normalized: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown loss kind {self.kind!r}")
        for name in ("k", "c", "a", "b", "alpha", "exponent"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"loss parameter {name} must be finite and positive")
        if self.kind == "hampel" and not (self.a <= self.b < self.c):
            raise InvalidParameterError("hampel parameters must satisfy a <= b < c")
        if self.kind in ("check", "expectile") and not 0 < self.alpha < 1:
            raise InvalidParameterError("alpha must lie in (0, 1)")
        if self.kind == "lq" and not 1 < self.exponent < 2:
            raise InvalidParameterError("lq exponent must lie in (1, 2)")

    @property
    def convex(self):
        return self.kind not in ("tukey", "hampel")

    @property
    def symmetric(self):
        return self.kind not in ("check", "expectile")

    @property
    def name(self):
        names = {
            "huber": ("k",), "tukey": ("c",), "hampel": ("a", "b", "c"),
            "check": ("alpha",), "expectile": ("alpha",), "lq": ("exponent",),
        }.get(self.kind)
        if not names:
            return self.kind
        params = ",".join(f"{p}={getattr(self, p):g}" for p in names)
        return f"{self.kind}({params})"

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None and v is not False}


def least_squares():
    return LossSpec("ls")


def huber(k=1.345):
    return LossSpec("huber", k=float(k))


def tukey(c=4.685, normalized=False):
    """
    Tukey bisquare loss.

    With ``normalized=False`` (the regression form) ``rho`` rises to
    ``c**2 / 6`` so that ``psi(x) ~ x`` near zero; with ``normalized=True``
    it is bounded by 1, the form used by the M-scale equation.
    """
    return LossSpec("tukey", c=float(c), normalized=bool(normalized))


def hampel(a=2.0, b=4.0, c=8.0):
    return LossSpec("hampel", a=float(a), b=float(b), c=float(c))


def check(alpha=0.5):
    return LossSpec("check", alpha=float(alpha))


def expectile(alpha=0.5):
    return LossSpec("expectile", alpha=float(alpha))


def lq(exponent=1.5):
    return LossSpec("lq", exponent=float(exponent))


def absolute():
    return LossSpec("absolute")


def logcosh():
    return LossSpec("logcosh")


def make_loss(kind, **params):
    """Build a loss from its kind name and any of its tuning parameters."""
    aliases = {"least-squares": "ls", "log-cosh": "logcosh", "abs": "absolute"}
    kind = aliases.get(kind, kind)
    factories = {
        "ls": least_squares, "huber": huber, "tukey": tukey, "hampel": hampel,
        "check": check, "expectile": expectile, "lq": lq, "absolute": absolute,
        "logcosh": logcosh,
    }
    if kind not in factories:
        raise InvalidParameterError(f"unknown loss kind {kind!r}")
    params = {key: value for key, value in params.items() if value is not None}
    try:
        return factories[kind](**params)
    except TypeError as exc:
        raise InvalidParameterError(f"bad parameters for loss {kind!r}: {exc}") from None


def rho(loss, x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    kind = loss.kind
    if kind == "ls":
        return x * x
    if kind == "huber":
        k = loss.k
        return np.where(ax <= k, 0.5 * x * x, k * ax - 0.5 * k * k)
    if kind == "tukey":
        c = loss.c
        top = 1.0 if loss.normalized else c * c / 6.0
        u = np.minimum(ax / c, 1.0)
        return top * (1.0 - (1.0 - u * u) ** 3)
    if kind == "hampel":
        a, b, c = loss.a, loss.b, loss.c
        plateau = 0.5 * a * (b + c - a)
        return np.select(
            [ax <= a, ax < b, ax < c],
            [0.5 * x * x, a * (ax - 0.5 * a), a * (ax - c) ** 2 / (2.0 * (b - c)) + plateau],
            plateau,
        )
    if kind == "check":
        return x * (loss.alpha - (x < 0))
    if kind == "expectile":
        return 0.5 * x * x * np.abs(loss.alpha - (x <= 0))
    if kind == "lq":
        return ax ** loss.exponent
    if kind == "absolute":
        return ax
    # log(cosh(x)) without overflow
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def psi(loss, x):
    """
    Score function, the a.e. derivative of ``rho``.

    At zero the check score returns ``alpha`` and the absolute score 0; IRLS
    only reaches these kinks through ``weight``.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    kind = loss.kind
    if kind == "ls":
        return 2.0 * x
    if kind == "huber":
        return np.clip(x, -loss.k, loss.k)
    if kind == "tukey":
        c = loss.c
        u2 = (x / c) ** 2
        core = x * (1.0 - u2) ** 2
        if loss.normalized:
            core = core * 6.0 / (c * c)
        return np.where(ax <= c, core, 0.0)
    if kind == "hampel":
        a, b, c = loss.a, loss.b, loss.c
        s = np.sign(x)
        return np.select(
            [ax <= a, ax < b, ax < c],
            [x, a * s, a * (ax - c) / (b - c) * s],
            0.0,
        )
    if kind == "check":
        return loss.alpha - (x < 0).astype(float)
    if kind == "expectile":
        return np.where(x <= 0, (1.0 - loss.alpha) * x, loss.alpha * x)
    if kind == "lq":
        return loss.exponent * ax ** (loss.exponent - 1.0) * np.sign(x)
    if kind == "absolute":
        return np.sign(x)
    return np.tanh(x)


def weight(loss, r):
    """
    IRLS weight ``psi(r) / r``.

    For ``|r| <= EPS_WEIGHT`` the analytic limit ``psi'(0)`` is used where it
    exists; otherwise the weight is ``psi(s * EPS_WEIGHT) / EPS_WEIGHT`` with
    ``s`` the sign of ``r`` (positive at zero).
    """
    r = np.asarray(r, dtype=float)
    ar = np.abs(r)
    small = ar <= EPS_WEIGHT
    kind = loss.kind
    if kind == "ls":
        return np.full_like(r, 2.0)
    if kind == "expectile":
        return np.where(r <= 0, 1.0 - loss.alpha, loss.alpha) + 0.0 * r
    limits = {"huber": 1.0, "hampel": 1.0, "logcosh": 1.0}
    if kind == "tukey":
        limits["tukey"] = 6.0 / loss.c ** 2 if loss.normalized else 1.0
    safe = np.where(small, np.where(r < 0, -EPS_WEIGHT, EPS_WEIGHT), r)
    w = psi(loss, safe) / safe
    if kind in limits:
        w = np.where(small, limits[kind], w)
    return w


def psi_bound(loss):
    """``sup |psi|`` for the bounded-score members, ``inf`` otherwise."""
    kind = loss.kind
    if kind == "huber":
        return loss.k
    if kind == "tukey":
        # max of x (1 - x^2/c^2)^2 is at x = c / sqrt(5)
        peak = loss.c / np.sqrt(5.0) * (1.0 - 0.2) ** 2
        return peak * 6.0 / loss.c ** 2 if loss.normalized else peak
    if kind == "hampel":
        return loss.a
    if kind == "absolute":
        return 1.0
    if kind == "check":
        return max(loss.alpha, 1.0 - loss.alpha)
    if kind == "logcosh":
        return 1.0
    return np.inf
