"""Directed-information rates of stationary Gaussian loops.

Two estimators of the information flow from ``y`` to ``u`` when ``u(k)``
may depend on ``y`` only up to time ``k - h``:

* a spectral one, ``(1/4pi) int log(S_u / sigma_psi^2) dw``, where
  ``sigma_psi^2`` is the variance of the part of ``u`` not predictable from
  the past of ``u`` and ``y^{k-h}``;
* an empirical one that fits both linear predictors from sample
  covariances and returns ``0.5 log(var_restricted / var_full)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = ["DirectedInfoEstimate", "directed_info_spectral", "gaussian_directed_info"]

LN2 = math.log(2.0)
P_DEFAULT = 64
P_MAX = 512
P_STOP_BITS = 0.01


@dataclass(frozen=True)
class DirectedInfoEstimate:
    """Rate in nats per sample."""

    rate: float
    h: int
    method: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def bits(self) -> float:
        return self.rate / LN2


def directed_info_spectral(S_u, sigma_psi_sq: float, h: int = 0) -> DirectedInfoEstimate:
    """Periodic trapezoid rule for ``(1/4pi) int log(S_u / sigma_psi^2)``.

    ``S_u`` holds samples on a uniform grid over one period.
    """
    S = np.asarray(S_u, dtype=float)
    if sigma_psi_sq <= 0:
        raise ValueError("innovation variance must be positive")
    if S.size == 0 or np.any(S <= 0) or not np.all(np.isfinite(S)):
        raise ValueError("spectral density must be positive and finite on the grid")
    rate = 0.5 * float(np.mean(np.log(S / sigma_psi_sq)))
    return DirectedInfoEstimate(rate, int(h), "spectral", {"sigma_psi_sq": float(sigma_psi_sq)})


def _xcorr(a: np.ndarray, b: np.ndarray, maxlag: int) -> np.ndarray:
    """``c[maxlag + l] = (1/n) sum_k a(k + l) b(k)`` for ``|l| <= maxlag``."""
    n = a.size
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    c = np.fft.irfft(np.fft.rfft(a, nfft) * np.conj(np.fft.rfft(b, nfft)), nfft) / n
    return np.concatenate([c[nfft - maxlag :], c[: maxlag + 1]])


def _residual_variances(cov, p: int, h: int):
    Ruu, Ryy, Ruy, L = cov
    lag = lambda R, l: R[L + l]  # noqa: E731
    i = np.arange(1, p + 1)
    j = np.arange(p)
    Suu = sla.toeplitz(lag(Ruu, i - 1))
    guu = lag(Ruu, i)
    # y regressors y(k - h - j)
    Syy = sla.toeplitz(lag(Ryy, j))
    Suy = lag(Ruy, h + j[None, :] - i[:, None])
    guy = lag(Ruy, h + j)
    r0 = lag(Ruu, 0)
    try:
        c = sla.cho_factor(Suu)
        v_res = r0 - guu @ sla.cho_solve(c, guu)
        S = np.block([[Suu, Suy], [Suy.T, Syy]])
        g = np.concatenate([guu, guy])
        cf = sla.cho_factor(S)
        v_full = r0 - g @ sla.cho_solve(cf, g)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise ValueError("singular regression: signals are not sufficiently exciting") from exc
    if not v_full > 0:
        raise ValueError("singular regression: zero prediction error")
    return float(v_res), float(v_full)


def gaussian_directed_info(y, u, h: int, p: int | None = None) -> DirectedInfoEstimate:
    """Gaussian estimate of the delayed directed information from ``y`` to ``u``.

    Predicts ``u(k)`` from ``u(k-1..k-p)`` (restricted) and additionally
    from ``y(k-h..k-h-p+1)`` (full).  With ``p=None`` the order starts at 64
    and doubles until the estimate moves by less than 0.01 bits.

    Raises
    ------
    ValueError
        On singular regressions or mismatched histories.
    """
    y = np.asarray(y, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    h = int(h)
    if y.size != u.size:
        raise ValueError("histories must have equal length")
    if h < 0:
        raise ValueError("delay must be nonnegative")
    orders = [int(p)] if p is not None else []
    if p is None:
        q = P_DEFAULT
        while q <= P_MAX:
            orders.append(q)
            q *= 2
    if u.size < 10 * (2 * max(orders) + h):
        raise ValueError("history too short for the requested predictor order")
    y = y - y.mean()
    u = u - u.mean()
    L = max(orders) + h + 1
    cov = (_xcorr(u, u, L), _xcorr(y, y, L), _xcorr(u, y, L), L)
    prev = None
    for q in orders:
        v_res, v_full = _residual_variances(cov, q, h)
        est = 0.5 * math.log(v_res / v_full)
        if prev is not None and abs(est - prev) / LN2 < P_STOP_BITS:
            break
        prev = est
    half = u.size // 2
    ratio = float(np.var(u[:half]) / np.var(u[half:]))
    diag = {
        "p": q,
        "var_restricted": v_res,
        "var_full": v_full,
        "stationarity_ratio": ratio,
        "stationary": bool(abs(ratio - 1.0) <= 0.1),
    }
    return DirectedInfoEstimate(est, h, "gaussian-empirical", diag)
