"""Self-exciting conditional intensity, likelihood, and derived analyses.

The conditional intensity at (x, y, t) given the event history is

    lambda = m0 * mu(x, y, t)
           + theta * sum_{t_i < t} omega * exp(-omega (t - t_i))
                     * exp(-((x-x_i)^2 + (y-y_i)^2) / (2 sigma^2)) / (2 pi sigma^2)

with the endemic background ``mu`` supplied by a fitted
:class:`~sthawkes.background.BackgroundModel`.  The log-likelihood uses the
closed-form compensator: the background contributes its exact total mass,
each triggering kernel contributes theta * (1 - exp(-omega (T - t_i))) in
time, and the spatial integral of the triggering kernel is taken as 1
(valid when sigma is much smaller than the region).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .background import BackgroundModel
from .catalog import EventCatalog
from .errors import NumericalError

PARAM_NAMES = ("m0", "theta", "omega", "sigma")

#: Above this event count the likelihood defaults to the 30/omega history
#: truncation (per-pair relative error < 1e-13); below it, exact summation.
EXACT_SUM_MAX_EVENTS = 20_000


@dataclass(frozen=True)
class HawkesParams:
    """The four excitation parameters.

    m0: background weight (dimensionless); theta: branching ratio;
    omega: temporal decay rate (1/days); sigma: spatial lengthscale (km).
    """

    m0: float
    theta: float
    omega: float
    sigma: float

    def __post_init__(self):
        # theta may be exactly 0 (pure inhomogeneous-Poisson reduction);
        # the sampler's truncated priors keep it positive during inference.
        for name in PARAM_NAMES:
            v = getattr(self, name)
            floor_ok = v >= 0 if name == "theta" else v > 0
            if not (np.isfinite(v) and floor_ok):
                raise ValueError(f"invalid {name}={v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m0, self.theta, self.omega, self.sigma])

    @classmethod
    def from_array(cls, a) -> "HawkesParams":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class IntensityDecomposition:
    """Endemic/excitatory split of the intensity at one point.

    ``ratio_r`` is endemic / (endemic + excitatory), defined as exactly 1
    when the excitatory part is zero.
    """

    endemic: float
    excitatory: float
    ratio_r: float = field(init=False)

    def __post_init__(self):
        if self.excitatory == 0.0:
            r = 1.0
        else:
            r = self.endemic / (self.endemic + self.excitatory)
        object.__setattr__(self, "ratio_r", float(r))


def spatial_kernel(dx, dy, sigma: float):
    """Normalized 2-D Gaussian triggering kernel (integrates to 1)."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    out = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)
    return out if out.ndim else float(out)


def _resolve_max_lag(max_lag, n: int, omega: float) -> float:
    if max_lag is None:
        return np.inf if n <= EXACT_SUM_MAX_EVENTS else 30.0 / omega
    if max_lag == "auto":
        return 30.0 / omega
    return float(max_lag)


class HawkesLikelihood:
    """Catalog/background data packaged for repeated likelihood evaluation.

    ``max_lag`` bounds the history window in days (None: exact summation up
    to EXACT_SUM_MAX_EVENTS events, then 30/omega; "auto": always 30/omega).
    """

    def __init__(self, catalog: EventCatalog, bg: BackgroundModel, max_lag=None):
        self.t = catalog.t
        self.x = catalog.x
        self.y = catalog.y
        self.T = catalog.T
        self.n = len(catalog)
        self.max_lag = max_lag
        # exact background values at the events and exact background mass
        self.mu_ev = np.asarray(bg.intensity(self.x, self.y, self.t, method="exact"),
                                dtype=np.float64)
        if bg.T == self.T:
            self.n_mu = float(bg.normalization)
        else:
            self.n_mu = bg.temporal_mass(0.0, self.T)

    def _trig(self, params: HawkesParams):
        lag = _resolve_max_lag(self.max_lag, self.n, params.omega)
        return _kernels.trig_sums(self.t, self.x, self.y,
                                  params.omega, params.sigma, lag)

    def value_and_grad(self, params: HawkesParams, log_scale: bool = True,
                       strict: bool = True):
        """Log-likelihood and its gradient over (m0, theta, omega, sigma).

        With ``log_scale`` the gradient is with respect to the log
        parameters (the sampler's unconstrained coordinates).  With
        ``strict=False`` a non-positive event intensity yields (-inf, 0)
        instead of raising.
        """
        m0, th, om, si = params.m0, params.theta, params.omega, params.sigma
        trig, d_om, d_sig = self._trig(params)
        lam = m0 * self.mu_ev + th * trig
        if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
            if strict:
                bad = int(np.argmin(lam))
                raise NumericalError(
                    f"non-positive intensity at event {bad} (lambda={lam[bad]})")
            return -np.inf, np.zeros(4)
        s = self.T - self.t
        em = np.exp(-om * s)
        comp_t = float(np.sum(1.0 - em))
        dcomp_t = float(np.sum(s * em))
        value = float(np.sum(np.log(lam)) - m0 * self.n_mu - th * comp_t)
        inv_lam = 1.0 / lam
        g = np.array([
            float(np.sum(self.mu_ev * inv_lam)) - self.n_mu,
            float(np.sum(trig * inv_lam)) - comp_t,
            th * (float(np.sum(d_om * inv_lam)) - dcomp_t),
            th * float(np.sum(d_sig * inv_lam)),
        ])
        if log_scale:
            g *= params.as_array()
        return value, g

    def value(self, params: HawkesParams) -> float:
        return self.value_and_grad(params)[0]

    def decompose(self, params: HawkesParams):
        """Per-event (endemic, excitatory) arrays using strict-past history."""
        trig, _, _ = self._trig(params)
        return params.m0 * self.mu_ev, params.theta * trig


def log_likelihood(catalog: EventCatalog, params: HawkesParams,
                   bg: BackgroundModel, max_lag=None) -> float:
    """Exact Hawkes log-likelihood with the closed-form compensator."""
    return HawkesLikelihood(catalog, bg, max_lag).value(params)


def log_likelihood_grad(catalog: EventCatalog, params: HawkesParams,
                        bg: BackgroundModel, max_lag=None,
                        log_scale: bool = True) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood`.

    Defaults to the unconstrained log-parameterization used by the
    posterior sampler; pass ``log_scale=False`` for natural-parameter
    partial derivatives.
    """
    return HawkesLikelihood(catalog, bg, max_lag).value_and_grad(
        params, log_scale=log_scale)[1]


def conditional_intensity(x: float, y: float, t: float, catalog: EventCatalog,
                          params: HawkesParams, bg: BackgroundModel,
                          method: str = "grid") -> IntensityDecomposition:
    """Endemic/excitatory intensity at one query point.

    Only events strictly before t enter the excitation sum.
    """
    if t < 0:
        raise ValueError("query time precedes the window start")
    endemic = params.m0 * float(bg.intensity(x, y, t, method=method))
    past = catalog.t < t
    if np.any(past):
        dt = t - catalog.t[past]
        g = spatial_kernel(x - catalog.x[past], y - catalog.y[past], params.sigma)
        contrib = params.omega * np.exp(-params.omega * dt) * g
        excit = params.theta * float(np.sum(contrib))
    else:
        excit = 0.0
    return IntensityDecomposition(endemic=endemic, excitatory=excit)


def decompose_events(catalog: EventCatalog, params: HawkesParams,
                     bg: BackgroundModel) -> list[IntensityDecomposition]:
    """Endemic/excitatory decomposition at every event (strict past)."""
    endemic, excit = HawkesLikelihood(catalog, bg).decompose(params)
    return [IntensityDecomposition(endemic=float(a), excitatory=float(b))
            for a, b in zip(endemic, excit)]


def triggered_count(theta: float, n: int) -> int:
    """Number of events labeled triggered: round(theta * n), at least 1.

    Rounding is half away from zero; a positive expected count below one
    still labels a single event.
    """
    if n <= 0 or theta <= 0:
        return 0
    k = int(math.floor(theta * n + 0.5))
    return min(n, max(1, k))


def classify_triggered(catalog: EventCatalog, params: HawkesParams,
                       bg: BackgroundModel) -> np.ndarray:
    """Label each event "triggered" or "background".

    The ``triggered_count(theta, n)`` events with the highest excitatory
    intensity are triggered; ties resolve by catalog order.
    """
    if not params.theta < 1:
        raise ValueError("classification requires theta < 1")
    _, excit = HawkesLikelihood(catalog, bg).decompose(params)
    k = triggered_count(params.theta, len(catalog))
    labels = np.full(len(catalog), "background", dtype=object)
    order = np.argsort(-excit, kind="stable")
    labels[order[:k]] = "triggered"
    return labels


def export_decomposition_csv(catalog: EventCatalog, params: HawkesParams,
                             bg: BackgroundModel, path) -> None:
    """Per-event CSV: x, y, t, endemic, excitatory, ratio_r, label."""
    endemic, excit = HawkesLikelihood(catalog, bg).decompose(params)
    labels = classify_triggered(catalog, params, bg)
    with open(path, "w") as fh:
        fh.write("x_km,y_km,t_days,endemic,excitatory,ratio_r,label\n")
        for xi, yi, ti, en, ex, lab in zip(catalog.x, catalog.y, catalog.t,
                                           endemic, excit, labels):
            r = 1.0 if ex == 0.0 else en / (en + ex)
            fh.write(f"{float(xi)!r},{float(yi)!r},{float(ti)!r},{float(en)!r},{float(ex)!r},{float(r)!r},{lab}\n")


def expected_offspring_cascade(n_initial: float, theta: float) -> float:
    """Expected cascade-inclusive total n_initial / (1 - theta)."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if theta >= 1:
        raise ValueError("theta >= 1 is supercritical: no finite cascade total")
    return n_initial / (1.0 - theta)


@dataclass
class PredictionResult:
    """Per-cell expected and observed counts plus their Pearson correlation.

    ``expected`` and ``observed`` have shape (n_slices, ny, nx); cell (k, j, i)
    covers [t_start[k], t_start[k] + cell_days) x spatial cell (j, i).
    """

    cell_x: np.ndarray
    cell_y: np.ndarray
    t_start: np.ndarray
    cell_days: float
    expected: np.ndarray
    observed: np.ndarray
    correlation: float

    def to_csv(self, path) -> None:
        """Long-form CSV: cell_x, cell_y, hour, expected, observed."""
        with open(path, "w") as fh:
            fh.write("cell_x_km,cell_y_km,hour,expected,observed\n")
            for k, t0 in enumerate(self.t_start):
                hour = t0 * 24.0
                for j, yc in enumerate(self.cell_y):
                    for i, xc in enumerate(self.cell_x):
                        fh.write(f"{float(xc)!r},{float(yc)!r},{float(hour)!r},"
                                 f"{float(self.expected[k, j, i])!r},"
                                 f"{int(self.observed[k, j, i])}\n")


def predict_grid(catalog: EventCatalog, params: HawkesParams,
                 bg: BackgroundModel, cell_km: float = 1.0,
                 cell_hours: float = 1.0, subgrid: int = 4) -> PredictionResult:
    """One-step-ahead expected counts on a space-time grid.

    Spatial cells tile the region (cell size adjusted to divide it evenly);
    time slices of ``cell_hours`` cover [0, T].  The expected count in a
    cell integrates the conditional intensity by a midpoint rule on a
    subgrid x subgrid x subgrid lattice, with the event history frozen at
    the slice start (events inside a slice do not predict themselves).
    """
    r = catalog.region
    nx = max(1, int(round(r.width / cell_km)))
    ny = max(1, int(round(r.height / cell_km)))
    cw = r.width / nx
    ch = r.height / ny
    cell_days = cell_hours / 24.0
    n_t = int(np.floor(catalog.T / cell_days + 1e-9))
    if nx * ny * n_t == 0:
        raise ValueError("degenerate prediction grid (zero cells)")

    cell_x = r.x_min + (np.arange(nx) + 0.5) * cw
    cell_y = r.y_min + (np.arange(ny) + 0.5) * ch
    t_start = np.arange(n_t) * cell_days

    # spatial subgrid midpoints (shared by all slices)
    sx = r.x_min + (np.arange(nx * subgrid) + 0.5) * (cw / subgrid)
    sy = r.y_min + (np.arange(ny * subgrid) + 0.5) * (ch / subgrid)
    mesh_x, mesh_y = np.meshgrid(sx, sy)
    pts_x = mesh_x.ravel()
    pts_y = mesh_y.ravel()
    d_area = (cw / subgrid) * (ch / subgrid)

    # endemic part: separable, so integrate the factors independently
    mu_s_pts = bg.spatial_density(pts_x, pts_y).reshape(ny * subgrid, nx * subgrid)
    cell_mu_s = mu_s_pts.reshape(ny, subgrid, nx, subgrid).sum(axis=(1, 3)) * d_area
    off = (np.arange(subgrid) + 0.5) * (cell_days / subgrid)
    tm = t_start[:, None] + off[None, :]
    mu_t_sub = bg.temporal_density(tm.ravel()).reshape(n_t, subgrid)
    cell_mu_t = mu_t_sub.sum(axis=1) * (cell_days / subgrid)
    expected = params.m0 * cell_mu_t[:, None, None] * cell_mu_s[None, :, :]

    # excitatory part, slice by slice with frozen history
    om, si, th = params.omega, params.sigma, params.theta
    gauss_norm = 1.0 / (2.0 * math.pi * si * si)
    t_weight = cell_days / subgrid
    window = _kernels.EXP_CUTOFF / om
    for k in range(n_t):
        t0 = t_start[k]
        i0 = np.searchsorted(catalog.t, t0 - window, side="left")
        i1 = np.searchsorted(catalog.t, t0, side="left")
        if i1 <= i0:
            continue
        ex = catalog.x[i0:i1]
        ey = catalog.y[i0:i1]
        et = catalog.t[i0:i1]
        # temporal factor integrated over the sub-slice midpoints
        f = (om * np.exp(-om * (tm[k][None, :] - et[:, None]))).sum(axis=1) * t_weight
        d2 = ((pts_x[None, :] - ex[:, None]) ** 2
              + (pts_y[None, :] - ey[:, None]) ** 2)
        g = np.exp(-d2 / (2.0 * si * si))
        excit_pts = gauss_norm * (f @ g) * d_area
        expected[k] += th * excit_pts.reshape(ny, subgrid, nx, subgrid).sum(axis=(1, 3))

    # observed counts
    ix = np.clip(((catalog.x - r.x_min) / cw).astype(int), 0, nx - 1)
    iy = np.clip(((catalog.y - r.y_min) / ch).astype(int), 0, ny - 1)
    it = (catalog.t / cell_days).astype(int)
    keep = it < n_t
    observed = np.zeros((n_t, ny, nx), dtype=np.int64)
    np.add.at(observed, (it[keep], iy[keep], ix[keep]), 1)

    e = expected.ravel()
    o = observed.ravel().astype(float)
    if e.std() == 0.0 or o.std() == 0.0:
        corr = 0.0
    else:
        corr = float(np.corrcoef(e, o)[0, 1])
    return PredictionResult(cell_x=cell_x, cell_y=cell_y, t_start=t_start,
                            cell_days=cell_days, expected=expected,
                            observed=observed, correlation=corr)
