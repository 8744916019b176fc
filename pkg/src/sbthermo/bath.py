"""Debye bath: spectral density, correlation function and exponential expansions.

Units follow the rest of the package: hbar = 1, energies and rates share one
unit (usually the cutoff frequency omega_c = 1).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.linalg import LinAlgError, eigvalsh_tridiagonal

from .errors import DecompositionError, QuadratureError

# below this fraction of omega_c the Debye integrand uses its analytic limit
_SMALL_OMEGA = 1e-8


@dataclass(frozen=True)
class BathSpec:
    """Debye bath, J(w) = (pi/2) alpha w wc^2 / (w^2 + wc^2)."""

    alpha: float
    omega_c: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.omega_c > 0:
            raise ValueError(f"omega_c must be > 0, got {self.omega_c}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")

    @property
    def amplitude(self) -> float:
        # residue scale of the Debye pole, lambda*gamma in Drude-Lorentz notation
        return np.pi * self.alpha * self.omega_c**2 / 4.0


@dataclass(frozen=True)
class BathDecomposition:
    """C(t) ~ sum_l etas[l] * exp(-gammas[l] * t).

    The first term is the Debye pole (rate omega_c); the remaining ones come
    from the poles of the (approximated) Bose function.
    """

    etas: np.ndarray
    gammas: np.ndarray
    n_pade: int
    scheme: str = "pade"
    spec: BathSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        etas = np.asarray(self.etas, dtype=complex)
        gammas = np.asarray(self.gammas, dtype=complex)
        if etas.shape != gammas.shape or etas.ndim != 1:
            raise ValueError("etas and gammas must be 1-d arrays of equal length")
        if np.any(gammas.real <= 0):
            raise DecompositionError("all decay rates need a positive real part")
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "gammas", gammas)

    def __len__(self) -> int:
        return len(self.etas)

    def correlation(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.gammas)) @ self.etas

    def as_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "n_pade": int(self.n_pade),
            "eta_re": self.etas.real.tolist(),
            "eta_im": self.etas.imag.tolist(),
            "gamma": self.gammas.real.tolist(),
        }


def spectral_density(omega, spec: BathSpec):
    """Debye spectral density. Accepts scalars or arrays of omega >= 0."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    wc = spec.omega_c
    out = 0.5 * np.pi * spec.alpha * w * wc**2 / (w**2 + wc**2)
    return out if out.ndim else float(out)


def _noise_kernel(w: float, spec: BathSpec) -> float:
    # J(w) coth(beta w / 2) / pi, finite at w -> 0
    if w < _SMALL_OMEGA * spec.omega_c:
        return spec.alpha / spec.beta
    wc = spec.omega_c
    return 0.5 * spec.alpha * w * wc**2 / (w**2 + wc**2) / np.tanh(0.5 * spec.beta * w)


def correlation_quadrature(t: float, spec: BathSpec, epsabs: float = 1e-13,
                           epsrel: float = 1e-11) -> complex:
    """Bath autocorrelation function by direct quadrature over frequency.

    For a Debye bath the real part diverges logarithmically as t -> 0, so
    t == 0 returns ``inf`` for the real part (the imaginary part is exactly
    zero there).
    """
    if t < 0:
        raise ValueError("correlation function requested at negative time")
    if spec.alpha == 0:
        return 0j
    if t == 0:
        return complex(np.inf, 0.0)
    wc = spec.omega_c
    # Fourier integrals on [0, inf): QAWF with the oscillatory weight. QUADPACK
    # flags slowly decaying cycles; convergence is judged on the error estimate.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        re, re_err = integrate.quad(_noise_kernel, 0.0, np.inf, args=(spec,),
                                    weight="cos", wvar=t, limlst=200,
                                    epsabs=epsabs)
        im, im_err = integrate.quad(
            lambda w: 0.5 * spec.alpha * w * wc**2 / (w**2 + wc**2),
            0.0, np.inf, weight="sin", wvar=t, limlst=200, epsabs=epsabs)
    err = abs(re_err) + abs(im_err)
    if not np.isfinite(re) or err > max(epsabs, epsrel * abs(complex(re, im))) * 1e3:
        raise QuadratureError(f"correlation quadrature at t={t} did not converge", err)
    return complex(re, -im)


def _pade_poles(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Poles xi_j and residues kappa_j of the [N-1/N] Bose-function Pade.

    1/(1 - e^-x) ~ 1/x + 1/2 + sum_j 2 kappa_j x / (x^2 + xi_j^2)
    """
    m = np.arange(1, 2 * n)
    try:
        ev = eigvalsh_tridiagonal(np.zeros(2 * n), 1.0 / np.sqrt((2 * m + 1) * (2 * m + 3)))
        xi = np.sort(2.0 / ev[ev > 0])
        if n > 1:
            m2 = np.arange(1, 2 * n - 1)
            ev2 = eigvalsh_tridiagonal(np.zeros(2 * n - 1),
                                       1.0 / np.sqrt((2 * m2 + 3) * (2 * m2 + 5)))
            zeta = np.sort(2.0 / ev2[ev2 > 1e-12])
        else:
            zeta = np.empty(0)
    except LinAlgError as exc:
        raise DecompositionError(f"Pade eigenproblem failed for N={n}") from exc
    if len(xi) != n or len(zeta) != n - 1:
        raise DecompositionError(f"Pade eigenproblem returned wrong pole count for N={n}")
    kappa = np.empty(n)
    for j in range(n):
        others = np.delete(xi, j)
        # interleave numerator and denominator factors to avoid overflow
        ratio = (zeta**2 - xi[j] ** 2) / (others[: n - 1] ** 2 - xi[j] ** 2)
        kappa[j] = 0.5 * n * (2 * n + 3) * np.prod(ratio) / (others[n - 1:] ** 2 - xi[j] ** 2).prod()
    return xi, kappa


def _expansion(spec: BathSpec, xi: np.ndarray, kappa: np.ndarray, scheme: str,
               exact_cot: bool):
    beta, wc, amp = spec.beta, spec.omega_c, spec.amplitude
    nu = xi / beta
    y = beta * wc
    if exact_cot:
        cot = 1.0 / np.tan(0.5 * y)
    else:
        # cot(y/2) from the same partial-fraction form as the Bose-function
        # expansion, so near-coincident Debye/Bose poles cancel consistently
        cot = 2.0 / y + np.sum(4.0 * kappa * y / (y**2 - xi**2))
    etas = [amp * (cot - 1j)]
    etas += list(4.0 * amp / beta * kappa * nu / (nu**2 - wc**2))
    gammas = np.concatenate([[wc], nu])
    etas = np.asarray(etas, dtype=complex)
    if spec.alpha == 0:
        etas = np.zeros_like(etas)
    return BathDecomposition(etas, gammas, n_pade=len(xi), scheme=scheme, spec=spec)


def pade_decomposition(spec: BathSpec, n_pade: int) -> BathDecomposition:
    """Debye pole plus ``n_pade`` Pade poles of the Bose function."""
    if n_pade < 1:
        raise ValueError("n_pade must be >= 1")
    xi, kappa = _pade_poles(n_pade)
    return _expansion(spec, xi, kappa, "pade", exact_cot=False)


def matsubara_decomposition(spec: BathSpec, n_terms: int) -> BathDecomposition:
    """Debye pole plus the first ``n_terms`` Matsubara frequencies."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    xi = 2.0 * np.pi * np.arange(1, n_terms + 1)
    # Matsubara poles are the exact poles of coth, so the exact cot is consistent;
    # a truncated partial-fraction cot converges only like 1/n_terms
    return _expansion(spec, xi, np.ones(n_terms), "matsubara", exact_cot=True)


def compress_tail(decomp: BathDecomposition, rate_cutoff: float,
                  n_terms: int = 2) -> BathDecomposition:
    """Replace all terms decaying faster than ``rate_cutoff`` by ``n_terms`` exponentials.

    The replacement reproduces the moments int_0^inf t^k C_tail(t) dt for
    k = 0 .. 2 n_terms - 1 exactly: with x = 1/gamma and weights eta/gamma the
    moments are those of a positive discrete measure in x, and its
    ``n_terms``-point Gauss rule (Lanczos / Golub-Welsch) supplies the new
    rates and weights. The dynamics only sees the fast terms through these
    low moments, the higher ones being suppressed by powers of
    (system frequency / rate).
    """
    fast = decomp.gammas.real > rate_cutoff
    if not np.any(fast) or np.count_nonzero(fast) <= n_terms:
        return decomp
    eta_f, gam_f = decomp.etas[fast], decomp.gammas[fast]
    if np.any(np.abs(eta_f.imag) > 0) or np.any(gam_f.imag != 0) or np.any(eta_f.real < 0):
        raise DecompositionError("tail compression needs real positive weights and real rates")
    x = 1.0 / gam_f.real
    w = eta_f.real / gam_f.real
    total = w.sum()
    if total == 0:
        return BathDecomposition(decomp.etas[~fast], decomp.gammas[~fast], decomp.n_pade,
                                 decomp.scheme, decomp.spec)
    # Lanczos on diag(x) from sqrt(w), with full reorthogonalisation
    q = np.sqrt(w / total)
    basis = [q]
    a, b = [], []
    for j in range(n_terms):
        v = x * basis[-1]
        a.append(basis[-1] @ v)
        for u in basis:
            v = v - (u @ v) * u
        if j == n_terms - 1:
            break
        norm = np.linalg.norm(v)
        if norm < 1e-14:
            break
        b.append(norm)
        basis.append(v / norm)
    nodes, vecs = np.linalg.eigh(np.diag(a) + np.diag(b, 1) + np.diag(b, -1))
    weights = total * vecs[0] ** 2
    etas = np.concatenate([decomp.etas[~fast], weights / nodes])
    gammas = np.concatenate([decomp.gammas[~fast], 1.0 / nodes])
    return BathDecomposition(etas, gammas, decomp.n_pade, decomp.scheme + "+tail", decomp.spec)
