"""Simulated covariate IPD from aggregate summaries (Gaussian copula).

A sponsor without the counterpart's IPD draws a pseudo-sample whose margins
match the published means (and SDs for continuous covariates) and whose
dependence follows a latent Gaussian correlation. The latent correlation is
derived from the published covariance when available, otherwise borrowed
from the sponsor's own IPD, otherwise taken as the identity.

Binary margins are obtained by thresholding the latent normal: the covariate
is 1 when the latent value exceeds the normal quantile at ``1 - mean``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import jsonschema
import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr, ndtri

from .data_model import AgdSummary, IpdTrial, make_specs
from .errors import CovarianceWarning, SchemaError
from .rng import GENERATOR_ID, CounterRNG
from .schemas import COVGEN_SCHEMA

SOURCES = ("published", "borrowed", "independence")


@dataclass(frozen=True, eq=False)
class CovGenModel:
    covariate_specs: tuple
    means: np.ndarray
    sds: np.ndarray
    correlation_source: str
    latent_correlation: np.ndarray
    seed: int
    generator: str = GENERATOR_ID
    binary_margin: str = "threshold"
    degenerate: tuple = ()

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.covariate_specs)

    def to_dict(self) -> dict:
        return {
            "covariates": [s.to_dict() for s in self.covariate_specs],
            "means": [float(m) for m in self.means],
            "sds": [None if not np.isfinite(s) else float(s) for s in self.sds],
            "correlation_source": self.correlation_source,
            "latent_correlation": np.asarray(self.latent_correlation, float).tolist(),
            "generator": self.generator,
            "seed": int(self.seed),
            "binary_margin": self.binary_margin,
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CovGenModel:
        try:
            jsonschema.validate(d, COVGEN_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"covariate generating model: {exc.message}") from None
        return cls(
            covariate_specs=make_specs([c["name"] for c in d["covariates"]], [c["kind"] for c in d["covariates"]]),
            means=np.asarray(d["means"], float),
            sds=np.array([np.nan if s is None else s for s in d["sds"]], float),
            correlation_source=d["correlation_source"],
            latent_correlation=np.asarray(d["latent_correlation"], float),
            seed=d["seed"],
            generator=d["generator"],
            binary_margin=d["binary_margin"],
            degenerate=tuple(d.get("degenerate", ())),
        )


def _phi2(h: float, k: float, r: float) -> float:
    s = 1.0 - r * r
    return np.exp(-(h * h - 2 * r * h * k + k * k) / (2 * s)) / (2 * np.pi * np.sqrt(s))


def bivariate_normal_cdf(h: float, k: float, rho: float) -> float:
    """P(Z1 <= h, Z2 <= k) for standard normals with correlation rho.

    Uses d/dr Phi2(h, k; r) = phi2(h, k; r) integrated from 0.
    """
    base = ndtr(h) * ndtr(k)
    if rho == 0.0:
        return float(base)
    val, _ = integrate.quad(lambda r: _phi2(h, k, r), 0.0, rho, epsabs=1e-13, epsrel=1e-10, limit=200)
    return float(base + val)


def tetrachoric(p1: float, p2: float, phi: float, xtol: float = 1e-12) -> float:
    """Latent correlation giving two thresholded normals the observed phi coefficient.

    ``p1``, ``p2`` are the proportions of ones. Raises ValueError if ``phi``
    is outside what two binaries with these margins can attain.
    """
    sd = np.sqrt(p1 * (1 - p1) * p2 * (1 - p2))
    joint = phi * sd + p1 * p2
    lo, hi = max(0.0, p1 + p2 - 1.0), min(p1, p2)
    tol = 1e-12
    if joint < lo - tol or joint > hi + tol:
        raise ValueError(
            f"phi {phi:.4g} impossible for margins ({p1:.4g}, {p2:.4g}); joint probability must lie in "
            f"[{lo:.4g}, {hi:.4g}]")
    if joint <= lo + tol:
        return -1.0
    if joint >= hi - tol:
        return 1.0
    h, k = ndtri(p1), ndtri(p2)
    edge = 1.0 - 1e-12
    return float(optimize.brentq(lambda r: bivariate_normal_cdf(h, k, r) - joint, -edge, edge, xtol=xtol))


def biserial(p: float, r: float) -> float:
    """Latent correlation between a thresholded normal (proportion p) and a normal margin."""
    rho = r * np.sqrt(p * (1 - p)) / np.exp(-0.5 * ndtri(p) ** 2) * np.sqrt(2 * np.pi)
    if abs(rho) > 1.0 + 1e-12:
        raise ValueError(f"point-biserial correlation {r:.4g} impossible for proportion {p:.4g}")
    return float(np.clip(rho, -1.0, 1.0))


def nearest_correlation(R: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues at zero and rescale to unit diagonal."""
    vals, vecs = np.linalg.eigh((R + R.T) / 2)
    S = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    d = np.sqrt(np.diag(S))
    d[d == 0] = 1.0
    S = S / np.outer(d, d)
    np.fill_diagonal(S, 1.0)
    return S


def _to_corr(S: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(S))
    with np.errstate(invalid="ignore", divide="ignore"):
        R = S / np.outer(d, d)
    R[~np.isfinite(R)] = 0.0
    np.fill_diagonal(R, 1.0)
    return R


def build_model(
    agd: AgdSummary,
    own: IpdTrial | None = None,
    source: str = "auto",
    seed: int = 0,
    binary_margin: str = "threshold",
) -> CovGenModel:
    """Covariate generating model for the counterpart trial described by ``agd``.

    Parameters
    ----------
    agd : AgdSummary
        Counterpart aggregate data; supplies the target means.
    own : IpdTrial, optional
        The sponsor's own IPD, used when ``source="borrowed"``.
    source : {"auto", "published", "borrowed", "independence"}
        "auto" picks published if the AgD carries a covariance, else borrowed
        if ``own`` is given, else independence.
    seed : int
        64-bit seed agreed with the arbitrator.
    binary_margin : {"threshold", "exact-count"}
        "exact-count" makes every binary column carry exactly round(n * mean)
        ones in :func:`generate`.
    """
    if source == "auto":
        source = "published" if agd.covariate_cov is not None else "borrowed" if own is not None else "independence"
    if source not in SOURCES:
        raise ValueError(f"unknown correlation source {source!r}")
    if binary_margin not in ("threshold", "exact-count"):
        raise ValueError(f"unknown binary margin rule {binary_margin!r}")
    specs = agd.covariate_specs
    p = len(specs)
    means = np.asarray(agd.covariate_means, float)
    binary = np.array([s.kind == "binary" for s in specs])
    if own is not None and own.covariate_names != agd.covariate_names:
        raise ValueError(f"covariate lists differ: {own.covariate_names} vs {agd.covariate_names}")

    own_cov = None
    if own is not None and own.n >= 2:
        own_cov = np.atleast_2d(np.cov(own.covariates, rowvar=False, ddof=1))
    if source == "published":
        if agd.covariate_cov is None:
            raise ValueError("source 'published' needs a covariance in the aggregate data")
        cov = np.asarray(agd.covariate_cov, float)
    elif source == "borrowed":
        if own_cov is None:
            raise ValueError("source 'borrowed' needs the sponsor's own IPD (at least two records)")
        cov = own_cov
    else:
        cov = agd.covariate_cov if agd.covariate_cov is not None else own_cov

    sds = np.full(p, np.nan)
    for j in np.flatnonzero(~binary):
        if cov is None:
            raise ValueError(f"no variance available for continuous covariate {specs[j].name!r}")
        sds[j] = np.sqrt(cov[j, j])

    degenerate = tuple(specs[j].name for j in range(p) if binary[j] and means[j] in (0.0, 1.0))
    for j in range(p):
        if binary[j] and not 0.0 <= means[j] <= 1.0:
            raise ValueError(f"binary mean {means[j]} for {specs[j].name!r} outside [0, 1]")

    latent = np.eye(p)
    if source != "independence":
        R = _to_corr(np.asarray(cov, float))
        for i in range(p):
            for j in range(i + 1, p):
                if specs[i].name in degenerate or specs[j].name in degenerate:
                    rho = 0.0
                elif binary[i] and binary[j]:
                    rho = tetrachoric(means[i], means[j], R[i, j])
                elif binary[i]:
                    rho = biserial(means[i], R[i, j])
                elif binary[j]:
                    rho = biserial(means[j], R[i, j])
                else:
                    rho = R[i, j]
                latent[i, j] = latent[j, i] = rho
        if np.linalg.eigvalsh(latent).min() < -1e-10:
            warnings.warn("latent correlation not positive semidefinite; projected to the nearest one",
                          CovarianceWarning, stacklevel=2)
            latent = nearest_correlation(latent)

    return CovGenModel(
        covariate_specs=specs,
        means=means,
        sds=sds,
        correlation_source=source,
        latent_correlation=latent,
        seed=int(seed),
        binary_margin=binary_margin,
        degenerate=degenerate,
    )


def _factor(R: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(R)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def generate(model: CovGenModel, n: int, stream: int = 0) -> np.ndarray:
    """Draw an n x p covariate matrix; a pure function of (model, n, stream)."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    p = len(model.covariate_specs)
    rng = CounterRNG(model.seed, stream)
    Z = rng.normal(n * p).reshape(n, p)
    latent = Z @ _factor(np.asarray(model.latent_correlation, float)).T
    X = np.empty((n, p))
    for j, spec in enumerate(model.covariate_specs):
        col = latent[:, j]
        if spec.kind == "binary":
            m = float(model.means[j])
            if model.binary_margin == "exact-count":
                k = int(np.floor(n * m + 0.5))
                order = np.argsort(-col, kind="stable")
                x = np.zeros(n)
                x[order[:k]] = 1.0
                X[:, j] = x
            else:
                X[:, j] = (col > ndtri(1.0 - m)).astype(float)
        else:
            X[:, j] = model.means[j] + model.sds[j] * col
    return X
