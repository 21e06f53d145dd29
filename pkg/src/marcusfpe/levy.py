"""Levy driver triplets: jump measures, product assembly, increment sampling.

A driver is described by its generating triplet (b, A, nu).  The jump
measure nu is kept in a closed family: compound-Poisson components with a
sampleable jump-size law, and symmetric alpha-stable components with density
|y|^(-1-alpha).  Multivariate measures are sums of scalar components, each
embedded on one driver coordinate (Dirac masses on the others), which is the
product structure obtained from independent scalar drivers.

Convention: ``b`` is the drift with every finite-activity jump taken raw
(uncompensated), so a compound-Poisson driver declared with b = 0 is the bare
jump sum.  ``compensator_drift`` converts to the standard compensated form
when a consumer needs it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "DiscreteDist",
    "NormalDist",
    "UniformDist",
    "CompoundPoisson",
    "AlphaStable",
    "LevyTriplet",
    "product_triplet",
    "sample_increment",
    "small_jump_moments",
    "stable_tail_mass",
]

_SQRT2 = math.sqrt(2.0)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Jump-size distributions (rho) for compound-Poisson components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteDist:
    """Finite table of (value, probability) atoms."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ConfigError("discrete table needs matching nonempty values/probs")
        if any(p < 0 for p in self.probs):
            raise ConfigError("discrete table probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ConfigError(
                f"discrete table probabilities sum to {sum(self.probs)!r}, not 1"
            )

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.values), size=size, p=np.asarray(self.probs))
        return np.asarray(self.values)[idx]

    def partial_moment(self, lo: float, hi: float, power: int) -> float:
        """Integral of y^power * rho(dy) over lo <= y < hi."""
        return sum(
            p * v**power for v, p in zip(self.values, self.probs) if lo <= v < hi
        )

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and rho-masses representing the law exactly."""
        return np.asarray(self.values, float), np.asarray(self.probs, float)


@dataclass(frozen=True)
class NormalDist:
    """Gaussian jump sizes with mean ``mu`` and standard deviation ``s``."""

    mu: float
    s: float
    n_quad: int = 96

    def __post_init__(self):
        if self.s <= 0:
            raise ConfigError(f"normal jump size needs s > 0, got {self.s!r}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mu, self.s, size=size)

    def density(self, y: np.ndarray) -> np.ndarray:
        z = (np.asarray(y, float) - self.mu) / self.s
        return np.exp(-0.5 * z * z) / (self.s * math.sqrt(2.0 * math.pi))

    def partial_moment(self, lo: float, hi: float, power: int) -> float:
        a = (lo - self.mu) / self.s
        b = (hi - self.mu) / self.s
        dphi = _norm_pdf(b) - _norm_pdf(a)
        dcdf = _norm_cdf(b) - _norm_cdf(a)
        if power == 0:
            return dcdf
        if power == 1:
            return self.mu * dcdf - self.s * dphi
        if power == 2:
            # E[Y^2; a<Z<b] with Y = mu + s Z
            z_term = dcdf - (b * _norm_pdf(b) - a * _norm_pdf(a))
            return self.mu**2 * dcdf - 2.0 * self.mu * self.s * dphi + self.s**2 * z_term
        raise ValueError(f"unsupported moment power {power}")

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes on mu +- 8s with rho-density weights."""
        x, w = np.polynomial.legendre.leggauss(self.n_quad)
        half = 8.0 * self.s
        nodes = self.mu + half * x
        return nodes, half * w * self.density(nodes)


@dataclass(frozen=True)
class UniformDist:
    """Uniform jump sizes on [a, b]."""

    a: float
    b: float
    n_quad: int = 64

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigError(f"uniform jump size needs b > a, got [{self.a}, {self.b}]")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.a, self.b, size=size)

    def density(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, float)
        return np.where((y >= self.a) & (y <= self.b), 1.0 / (self.b - self.a), 0.0)

    def partial_moment(self, lo: float, hi: float, power: int) -> float:
        lo = max(lo, self.a)
        hi = min(hi, self.b)
        if hi <= lo:
            return 0.0
        k = power + 1
        return (hi**k - lo**k) / (k * (self.b - self.a))

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.legendre.leggauss(self.n_quad)
        mid = 0.5 * (self.a + self.b)
        half = 0.5 * (self.b - self.a)
        nodes = mid + half * x
        return nodes, half * w * self.density(nodes)


JumpSizeDist = DiscreteDist | NormalDist | UniformDist


# ---------------------------------------------------------------------------
# Scalar jump components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompoundPoisson:
    """Finite-activity component: Poisson(rate) events with sizes ~ ``sizes``."""

    rate: float
    sizes: JumpSizeDist
    coordinate: int = 0

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError(f"compound Poisson rate must be > 0, got {self.rate!r}")
        if self.coordinate < 0:
            raise ConfigError("coordinate index must be nonnegative")


@dataclass(frozen=True)
class AlphaStable:
    """Symmetric stable component with measure |y|^(-1-alpha) dy, 0 < alpha < 2."""

    alpha: float
    coordinate: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ConfigError(
                f"stable index must satisfy 0 < alpha < 2, got {self.alpha!r}"
            )
        if self.coordinate < 0:
            raise ConfigError("coordinate index must be nonnegative")


JumpComponent = CompoundPoisson | AlphaStable


def _abs_band_moment(dist: JumpSizeDist, lo: float, hi: float, power: int) -> float:
    """Integral of y^power rho(dy) over the band lo <= |y| < hi (lo > 0)."""
    pos = dist.partial_moment(lo, hi, power)
    neg = dist.partial_moment(np.nextafter(-hi, 0.0), np.nextafter(-lo, 0.0), power)
    return pos + neg


def stable_tail_mass(alpha: float, lo: float, hi: float = math.inf) -> float:
    """Two-sided mass of |y|^(-1-alpha) dy over lo <= |y| <= hi."""
    if hi == math.inf:
        return 2.0 * lo ** (-alpha) / alpha
    return 2.0 * (lo ** (-alpha) - hi ** (-alpha)) / alpha


def _sample_stable_tail(
    alpha: float, lo: float, hi: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Draw |y| from the one-sided truncated tail density on [lo, hi], signed."""
    u = rng.uniform(size=size)
    a = lo**-alpha
    b = 0.0 if hi == math.inf else hi**-alpha
    mag = (a - u * (a - b)) ** (-1.0 / alpha)
    signs = rng.integers(0, 2, size=size) * 2 - 1
    return signs * mag


# ---------------------------------------------------------------------------
# Triplet
# ---------------------------------------------------------------------------


def _psd_factor(A: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (tolerates tiny negative eigenvalues)."""
    w, V = np.linalg.eigh(A)
    if w.min() < -1e-12:
        raise ConfigError(f"covariance A has negative eigenvalue {w.min():.3e}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class LevyTriplet:
    """Generating triplet (b, A, nu) with nu given by scalar components.

    ``tau`` is a factor with tau @ tau.T == A used for Gaussian sampling; it is
    derived from A when not supplied.
    """

    b: np.ndarray
    A: np.ndarray
    components: tuple[JumpComponent, ...] = ()
    tau: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, float))
        A = np.asarray(self.A, float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        n = b.shape[0]
        if A.shape != (n, n):
            raise ConfigError(f"A must be {n}x{n}, got {A.shape}")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ConfigError("A must be symmetric")
        tau = self.tau
        if tau is None:
            tau = _psd_factor(A)
        else:
            tau = np.asarray(tau, float)
            if np.abs(tau @ tau.T - A).max() > 1e-10:
                raise ConfigError("tau @ tau.T does not reproduce A")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "components", tuple(self.components))
        stable_coords = set()
        for k, comp in enumerate(self.components):
            if not 0 <= comp.coordinate < n:
                raise ConfigError(
                    f"component {k} coordinate {comp.coordinate} out of range for n={n}"
                )
            if isinstance(comp, AlphaStable):
                if comp.coordinate in stable_coords:
                    raise ConfigError(
                        f"component {k}: at most one stable component per coordinate"
                    )
                stable_coords.add(comp.coordinate)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def has_gaussian(self) -> bool:
        return bool(np.any(self.A != 0.0))

    def compensator_drift(self) -> np.ndarray:
        """First moment of nu over 0 < |y| < 1, per driver coordinate.

        The declared ``b`` is the drift with all finite-activity jumps taken
        raw (uncompensated convention), which is what the path simulator
        consumes directly.  Adding this vector to ``b`` yields the drift of
        the standard (compensated small jumps) triplet form that pairs with
        the indicator term inside the density solver's jump integral; the two
        extra pieces cancel analytically.  Symmetric stable components
        contribute zero either way.
        """
        shift = np.zeros(self.n)
        for comp in self.components:
            if isinstance(comp, CompoundPoisson):
                # open interval: atoms exactly at 0 are not jumps, |y| = 1 is "large"
                m = _abs_band_moment(comp.sizes, np.nextafter(0.0, 1.0), 1.0, 1)
                shift[comp.coordinate] += comp.rate * m
        return shift


def product_triplet(
    scalars: list[tuple[float, float, JumpComponent | None]],
) -> LevyTriplet:
    """Assemble the triplet of a vector of independent scalar drivers.

    Each entry is (b_i, A_i, component_i or None).  The result has the stacked
    drift, diagonal covariance, and the components retagged onto their
    coordinates (the Dirac-product embedding of independent scalars).
    """
    if not scalars:
        raise ConfigError("product_triplet needs at least one scalar driver")
    n = len(scalars)
    b = np.zeros(n)
    A = np.zeros((n, n))
    comps: list[JumpComponent] = []
    for i, (bi, ai, comp) in enumerate(scalars):
        try:
            bi = float(bi)
            ai = float(ai)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scalar driver {i}: non-numeric b or A") from exc
        if ai < 0:
            raise ConfigError(f"scalar driver {i}: A must be >= 0, got {ai!r}")
        b[i] = bi
        A[i, i] = ai
        if comp is not None:
            if not isinstance(comp, (CompoundPoisson, AlphaStable)):
                raise ConfigError(f"scalar driver {i}: unsupported component {comp!r}")
            comps.append(
                CompoundPoisson(comp.rate, comp.sizes, coordinate=i)
                if isinstance(comp, CompoundPoisson)
                else AlphaStable(comp.alpha, coordinate=i)
            )
    tau = np.diag(np.sqrt(np.diag(A)))
    return LevyTriplet(b=b, A=A, components=tuple(comps), tau=tau)


def small_jump_moments(comp: JumpComponent, eps: float) -> tuple[float, float]:
    """Mean shift and sub-threshold variance of a component at cutoff ``eps``.

    Returns (m, s2) with m the first nu-moment over eps <= |y| < 1 (the
    compensator mass moved into drift when only jumps >= eps are sampled) and
    s2 the second nu-moment over |y| < eps (the variance matched by the
    optional Gaussian replacement of the discarded small jumps).
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps!r}")
    if isinstance(comp, AlphaStable):
        # symmetric: the signed first moment vanishes
        s2 = 2.0 * eps ** (2.0 - comp.alpha) / (2.0 - comp.alpha)
        return 0.0, s2
    m = comp.rate * _abs_band_moment(comp.sizes, eps, 1.0, 1)
    s2 = comp.rate * _abs_band_moment(comp.sizes, np.nextafter(0.0, 1.0), eps, 2)
    return m, s2


def sample_increment(
    triplet: LevyTriplet,
    dt: float,
    eps: float,
    rng: np.random.Generator,
    rmax: float = math.inf,
    gaussian_small_jumps: bool = False,
) -> tuple[np.ndarray, list[tuple[float, np.ndarray]]]:
    """Sample one increment of the driver over a window of length ``dt``.

    Returns the continuous part b*dt + tau*sqrt(dt)*xi (plus, when
    ``gaussian_small_jumps`` is set, a Gaussian matching the variance of the
    discarded sub-eps stable jumps) and the list of finite-activity jumps as
    (time offset in [0, dt), jump vector) sorted by offset.  Compound-Poisson
    jumps are sampled exactly; stable jumps are drawn from the measure
    truncated to eps <= |y| <= rmax.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    has_stable = any(isinstance(c, AlphaStable) for c in triplet.components)
    if has_stable and not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1] with stable components, got {eps!r}")
    n = triplet.n
    xi = rng.standard_normal(n)
    cont = triplet.b * dt + math.sqrt(dt) * (triplet.tau @ xi)

    offsets: list[np.ndarray] = []
    vectors: list[np.ndarray] = []
    for comp in triplet.components:
        if isinstance(comp, CompoundPoisson):
            count = rng.poisson(comp.rate * dt)
            sizes = comp.sizes.sample(rng, count) if count else np.empty(0)
        else:
            rate = stable_tail_mass(comp.alpha, eps, rmax)
            count = rng.poisson(rate * dt)
            sizes = (
                _sample_stable_tail(comp.alpha, eps, rmax, rng, count)
                if count
                else np.empty(0)
            )
            if gaussian_small_jumps:
                _, s2 = small_jump_moments(comp, eps)
                cont[comp.coordinate] += math.sqrt(s2 * dt) * rng.standard_normal()
        if count:
            t = rng.uniform(0.0, dt, size=count)
            vec = np.zeros((count, n))
            vec[:, comp.coordinate] = sizes
            offsets.append(t)
            vectors.append(vec)

    if not offsets:
        return cont, []
    t_all = np.concatenate(offsets)
    v_all = np.concatenate(vectors, axis=0)
    order = np.argsort(t_all, kind="stable")
    return cont, [(float(t_all[k]), v_all[k]) for k in order]
