"""Bivariate Gaussian process models on [0,1] with analytic derivatives.

A model is a pair of unit-variance stationary marginal kernels plus a
cross-correlation surface r(t,s) = E{X(t)Y(s)}.  Everything downstream
needs covariances of (X, Y) and their first two derivatives, so each
kernel family supplies closed-form derivatives up to order four and each
cross form supplies all partials with total order up to four.  No finite
differences anywhere in the computational path; they appear only in
tests as an independent check.

Supported cross forms:

* ShiftMixture: Y(s) = c*X(s+d) + sqrt(1-c^2)*Z(s) with Z an
  independent process with the same kernel, giving r(t,s) = c*C(t-s-d).
* PointAnchor: Y is coupled to X through the single value X(t*),
  Y(s) = a(s)*X(t*) + orthogonal remainder with a(s) = c*C_Y(s-s*), so
  r(t,s) = c * C_X(t-t*) * C_Y(s-s*).  The anchor points may lie outside
  [0,1]; that only moves where r peaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .common import ArgumentError, DegeneracyError, DEFAULT_TOL


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class Kernel:
    """Base class: stationary correlation function C with C(0)=1."""

    def deriv(self, lag, order: int):
        raise NotImplementedError

    @property
    def spectral_moment2(self) -> float:
        """lambda = Var of the derivative process = -C''(0)."""
        return -float(self.deriv(0.0, 2))


@dataclass(frozen=True)
class SquaredExponential(Kernel):
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ArgumentError("scale must be positive")

    def deriv(self, lag, order: int):
        tau = np.asarray(lag, dtype=float)
        ell2 = self.scale * self.scale
        c = np.exp(-0.5 * tau * tau / ell2)
        if order == 0:
            poly = 1.0
        elif order == 1:
            poly = -tau / ell2
        elif order == 2:
            poly = tau * tau / ell2 ** 2 - 1.0 / ell2
        elif order == 3:
            poly = 3.0 * tau / ell2 ** 2 - tau ** 3 / ell2 ** 3
        elif order == 4:
            poly = 3.0 / ell2 ** 2 - 6.0 * tau * tau / ell2 ** 3 + tau ** 4 / ell2 ** 4
        else:
            raise ArgumentError(f"derivative order must be 0..4, got {order}")
        return poly * c


@dataclass(frozen=True)
class CosineMixture(Kernel):
    """C(tau) = sum_i w_i cos(omega_i tau); spectral atoms at +-omega_i."""

    weights: tuple[float, ...]
    frequencies: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        om = np.asarray(self.frequencies, dtype=float)
        if w.size != om.size or w.size == 0:
            raise ArgumentError("weights and frequencies must have equal nonzero length")
        if np.any(w <= 0):
            raise ArgumentError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ArgumentError("weights must sum to 1")
        if float(w @ (om * om)) <= 0:
            raise ArgumentError("second spectral moment must be positive (some frequency nonzero)")

    def deriv(self, lag, order: int):
        if order not in (0, 1, 2, 3, 4):
            raise ArgumentError(f"derivative order must be 0..4, got {order}")
        tau = np.asarray(lag, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        om = np.asarray(self.frequencies, dtype=float)
        # d^k/dtau^k cos(om*tau) = om^k * cos(om*tau + k*pi/2)
        arg = np.multiply.outer(tau, om) + 0.5 * math.pi * order
        vals = np.cos(arg) @ (w * om ** order)
        return vals if vals.shape else float(vals)


def kernel_eval(kernel: Kernel, lag, order: int):
    """d^order C / d tau^order at lag; broadcasts over array inputs."""
    if order not in (0, 1, 2, 3, 4):
        raise ArgumentError(f"derivative order must be 0..4, got {order}")
    out = kernel.deriv(lag, order)
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# cross-correlation forms

@dataclass(frozen=True)
class CrossCorrelation:
    def partial(self, t, s, a: int, b: int):
        """d^a/dt^a d^b/ds^b of r at (t, s); broadcasts over arrays."""
        raise NotImplementedError


@dataclass(frozen=True)
class ShiftMixture(CrossCorrelation):
    c: float
    d: float
    base: Kernel

    def __post_init__(self):
        # c = 0 (independent fields) is allowed; c = 1 would make the joint
        # law degenerate and is not.
        if not (0.0 <= self.c < 1.0):
            raise ArgumentError("mixture coefficient c must lie in [0, 1)")

    def partial(self, t, s, a: int, b: int):
        if a + b > 4 or a < 0 or b < 0:
            raise ArgumentError("total cross-derivative order must be 0..4")
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        # r(t,s) = c*C(t-s-d): each s-derivative flips the sign of C'
        return self.c * (-1.0) ** b * self.base.deriv(t - s - self.d, a + b)


@dataclass(frozen=True)
class PointAnchor(CrossCorrelation):
    c: float
    t_star: float
    s_star: float
    t_kernel: Kernel
    s_kernel: Kernel

    def __post_init__(self):
        if not (0.0 <= self.c < 1.0):
            raise ArgumentError("anchor coefficient c must lie in [0, 1)")

    def partial(self, t, s, a: int, b: int):
        if a + b > 4 or a < 0 or b < 0:
            raise ArgumentError("total cross-derivative order must be 0..4")
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return (self.c * self.t_kernel.deriv(t - self.t_star, a)
                * self.s_kernel.deriv(s - self.s_star, b))


# ---------------------------------------------------------------------------
# the model itself

@dataclass(frozen=True)
class BivariateModel:
    kernel_x: Kernel
    kernel_y: Kernel
    cross: CrossCorrelation
    label: str = ""

    @property
    def lambda1(self) -> float:
        return self.kernel_x.spectral_moment2

    @property
    def lambda2(self) -> float:
        return self.kernel_y.spectral_moment2


def cross_eval(model: BivariateModel, t, s, order_t: int, order_s: int):
    """d^a/dt^a d^b/ds^b of r at (t, s); broadcasts over array inputs."""
    if order_t < 0 or order_s < 0 or order_t + order_s > 4:
        raise ArgumentError("total cross-derivative order must be 0..4")
    out = model.cross.partial(t, s, order_t, order_s)
    if np.ndim(out) == 0:
        return float(out)
    return out


def transpose(model: BivariateModel) -> BivariateModel:
    """Swap the two processes: (X, Y, r(t,s)) -> (Y, X, r(s,t))."""
    cr = model.cross
    if isinstance(cr, ShiftMixture):
        new_cross = ShiftMixture(cr.c, -cr.d, cr.base)
    elif isinstance(cr, PointAnchor):
        new_cross = PointAnchor(cr.c, cr.s_star, cr.t_star, cr.s_kernel, cr.t_kernel)
    else:
        raise ArgumentError(f"cannot transpose cross form {type(cr).__name__}")
    return BivariateModel(model.kernel_y, model.kernel_x, new_cross,
                          label=model.label + "-transposed" if model.label else "")


def joint_cov(model: BivariateModel, specs) -> np.ndarray:
    """Covariance matrix of the listed derivative values.

    specs: sequence of (tag, point, order) with tag in {"X", "Y"} and
    order 0..2.  Sign conventions for a stationary kernel:
    Cov(X^(a)(t), X^(b)(t')) = (-1)^a C^(a+b)(t'-t); cross terms are the
    straight partials of r.
    """
    specs = list(specs)
    for tag, _, order in specs:
        if tag not in ("X", "Y"):
            raise ArgumentError(f"process tag must be 'X' or 'Y', got {tag!r}")
        if order not in (0, 1, 2):
            raise ArgumentError("derivative order in joint_cov must be 0..2")
    n = len(specs)
    out = np.empty((n, n))
    for i, (tag_i, p_i, a) in enumerate(specs):
        for j, (tag_j, p_j, b) in enumerate(specs):
            if j < i:
                continue
            if tag_i == tag_j:
                ker = model.kernel_x if tag_i == "X" else model.kernel_y
                v = (-1.0) ** a * float(ker.deriv(p_j - p_i, a + b))
            elif tag_i == "X":
                v = float(model.cross.partial(p_i, p_j, a, b))
            else:
                v = float(model.cross.partial(p_j, p_i, b, a))
            out[i, j] = v
            out[j, i] = v
    return out


def joint_grid_cov(model: BivariateModel, grid: np.ndarray) -> np.ndarray:
    """Joint covariance of (X on grid, Y on grid), shape (2n, 2n)."""
    g = np.asarray(grid, dtype=float)
    lag = g[None, :] - g[:, None]
    kxx = np.asarray(model.kernel_x.deriv(lag, 0))
    kyy = np.asarray(model.kernel_y.deriv(lag, 0))
    kxy = np.asarray(model.cross.partial(g[:, None], g[None, :], 0, 0))
    top = np.hstack([kxx, kxy])
    bot = np.hstack([kxy.T, kyy])
    return np.vstack([top, bot])


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class ValidationReport:
    psd_ok: bool
    min_eigenvalue: float
    unit_variance_max_err: float
    h3_ok: bool
    h3_worst_eigenvalue: float
    maximizer_count: int
    notes: tuple[str, ...]


def validate_model(model: BivariateModel, grid_n: int = 64) -> ValidationReport:
    """Check positive semi-definiteness on a grid, unit variances, and
    concavity of r at its maximizers in the directions where its
    gradient vanishes.

    PSD is judged from eigenvalues, not a triangular factorization:
    smooth stationary kernels give grid covariances that are numerically
    rank deficient, and pivoted LDL^T turns that null space into pivot
    noise orders of magnitude above the true smallest eigenvalue."""
    if grid_n < 16:
        raise ArgumentError("grid_n must be at least 16")
    notes: list[str] = []
    grid = np.linspace(0.0, 1.0, grid_n)
    joint = joint_grid_cov(model, grid)
    min_eig = float(np.linalg.eigvalsh(joint)[0])
    psd_ok = min_eig > DEFAULT_TOL.model_psd_floor
    if not psd_ok:
        notes.append(f"joint covariance is indefinite: min eigenvalue {min_eig:.3e}")

    n = grid_n
    for tag, block in (("X", joint[:n, :n]), ("Y", joint[n:, n:])):
        block_min = float(np.linalg.eigvalsh(block)[0])
        if block_min <= DEFAULT_TOL.model_psd_floor:
            notes.append(
                f"{tag} marginal covariance is indefinite on the grid"
                f" (min eigenvalue {block_min:.3e})"
            )

    unit_err = float(np.max(np.abs(np.diag(joint) - 1.0)))

    from . import asymptotics  # deferred: asymptotics depends on this module

    cls = asymptotics.classify(model)
    h3_vals: list[float] = []
    for (t0, s0) in cls.maximizers:
        geo = asymptotics.local_geometry(model, t0, s0)
        if abs(geo.r1) < DEFAULT_TOL.gradient_tol:
            h3_vals.append(geo.r11)
        if abs(geo.r2) < DEFAULT_TOL.gradient_tol:
            h3_vals.append(geo.r22)
    if h3_vals:
        worst = float(max(h3_vals))
        h3_ok = worst <= 1e-8
    else:
        worst = 0.0
        h3_ok = True
        notes.append("no vanishing-gradient directions at any maximizer; "
                     "second-order condition holds vacuously")
    if cls.tag == "DiagonalLine":
        notes.append("maximizer set is the full diagonal segment")

    return ValidationReport(
        psd_ok=psd_ok,
        min_eigenvalue=min_eig,
        unit_variance_max_err=unit_err,
        h3_ok=h3_ok,
        h3_worst_eigenvalue=worst,
        maximizer_count=len(cls.maximizers),
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# fixtures

_FIXTURE_NAMES = (
    "diagonal",
    "interior-point",
    "corner-nondegenerate",
    "corner-semidegenerate",
    "corner-degenerate",
    "edge-point",
    "edge-point-degenerate",
)


def fixture(name: str) -> BivariateModel:
    """Named test models, one per supported maximizer layout."""
    sq = SquaredExponential(1.0)
    if name == "diagonal":
        # r(t,s) = 0.5*exp(-(t-s)^2/2): maximal on the whole diagonal
        return BivariateModel(sq, sq, ShiftMixture(0.5, 0.0, sq), label=name)
    if name == "interior-point":
        # unique maximizer at (0.5, 0.5), both second derivatives negative
        return BivariateModel(sq, sq, PointAnchor(0.5, 0.5, 0.5, sq, sq), label=name)
    if name == "corner-nondegenerate":
        # r(t,s) = 0.6*exp(-(t-s-1.5)^2/2): maximal at corner (1,0) with
        # both partial derivatives nonzero there
        return BivariateModel(sq, sq, ShiftMixture(0.6, 1.5, sq), label=name)
    if name == "corner-semidegenerate":
        # anchored at t*=0 on the t-axis: at corner (0,0) the t-derivative
        # vanishes, the s-derivative does not
        return BivariateModel(sq, sq, PointAnchor(0.5, 0.0, -0.3, sq, sq), label=name)
    if name == "corner-degenerate":
        # anchored at the corner itself: both derivatives vanish at (0,0)
        return BivariateModel(sq, sq, PointAnchor(0.5, 0.0, 0.0, sq, sq), label=name)
    if name == "edge-point":
        # maximizer (0.5, 0) interior to the s=0 edge; s-derivative nonzero
        return BivariateModel(sq, sq, PointAnchor(0.5, 0.5, -0.3, sq, sq), label=name)
    if name == "edge-point-degenerate":
        # maximizer (0.5, 0) with both derivatives vanishing
        return BivariateModel(sq, sq, PointAnchor(0.5, 0.5, 0.0, sq, sq), label=name)
    raise ArgumentError(
        f"unknown fixture {name!r}; valid names: {', '.join(_FIXTURE_NAMES)}")


def independent_model() -> BivariateModel:
    """X and Y independent (r identically zero); used by factorization tests."""
    sq = SquaredExponential(1.0)
    return BivariateModel(sq, sq, ShiftMixture(0.0, 0.0, sq), label="independent")


# ---------------------------------------------------------------------------
# model description files

_FILE_KEYS = {"kernel_x", "kernel_y", "cross_form", "c", "d",
              "t_star", "s_star", "scale_x", "scale_y", "label"}


def _parse_kernel(kind: str, scale: float) -> Kernel:
    kind = kind.strip().lower()
    if kind in ("sqexp", "squared-exponential"):
        return SquaredExponential(scale)
    raise ArgumentError(f"unknown kernel family {kind!r} (supported: sqexp)")


def load_model_file(path) -> BivariateModel:
    """Parse the plain-text key-value model description format.

    One `key value` pair per line; `#` starts a comment.  Unknown keys
    are rejected so typos fail loudly.
    """
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ArgumentError(f"{path}:{lineno}: expected 'key value', got {raw!r}")
            key, value = parts[0], parts[1].strip()
            if key not in _FILE_KEYS:
                raise ArgumentError(f"{path}:{lineno}: unknown key {key!r}")
            if key in entries:
                raise ArgumentError(f"{path}:{lineno}: duplicate key {key!r}")
            entries[key] = value

    def get_float(key: str, default: float | None = None) -> float:
        if key not in entries:
            if default is None:
                raise ArgumentError(f"{path}: missing required key {key!r}")
            return default
        try:
            return float(entries[key])
        except ValueError:
            raise ArgumentError(f"{path}: key {key!r} is not a number: {entries[key]!r}")

    kx = _parse_kernel(entries.get("kernel_x", "sqexp"), get_float("scale_x", 1.0))
    ky = _parse_kernel(entries.get("kernel_y", "sqexp"), get_float("scale_y", 1.0))
    form = entries.get("cross_form", "").strip().lower()
    c = get_float("c")
    if form == "shift-mixture":
        if kx != ky:
            raise ArgumentError(f"{path}: shift-mixture requires matching marginal kernels")
        cross: CrossCorrelation = ShiftMixture(c, get_float("d", 0.0), kx)
    elif form == "point-anchor":
        cross = PointAnchor(c, get_float("t_star"), get_float("s_star"), kx, ky)
    else:
        raise ArgumentError(
            f"{path}: cross_form must be shift-mixture or point-anchor, got {form!r}")
    return BivariateModel(kx, ky, cross, label=entries.get("label", ""))
