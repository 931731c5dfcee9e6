"""Thin HTTP client for the service.

By default the service app is mounted in-process through the httpx ASGI
transport (driven on a private event loop, so the CLI stays synchronous and
needs no running daemon); pass ``server`` to target a remote instance
instead.  Error payloads {error_type, message} are re-raised as the
library's typed exceptions so exit-code mapping stays in one place.
"""

from __future__ import annotations

import asyncio

import httpx

from . import errors as E
from .runconfig import RunConfig


def config_payload(cfg: RunConfig) -> dict:
    return {
        "metric": {
            "kind": cfg.metric_kind,
            "periods": list(cfg.periods),
            "exprs": dict(cfg.metric_exprs),
        },
        "mesh": {
            "resolution": list(cfg.resolution),
            "directions": " ".join(
                str(p) for p in (
                    cfg.direction_rule
                    if cfg.direction_rule[0] != "single"
                    else ("single",) + tuple(cfg.direction_rule[1])
                )
            ),
        },
        "factor": {
            "phis": list(cfg.factor_exprs),
            "family_count": cfg.family_count,
            "family_seed": cfg.family_seed,
            "family_amplitude": cfg.family_amplitude,
        },
        "probe": {
            "alpha0": cfg.alpha0,
            "alpha1": cfg.alpha1,
            "alpha2": cfg.alpha2,
            "lam": cfg.lam,
            "margin": cfg.margin,
            "a0_rtol": cfg.a0_rtol,
            "stilde_source": cfg.stilde_source,
        },
        "spectral_m": cfg.spectrum_m,
        "spectral_tol": cfg.spectrum_tol,
        "config_hash": cfg.config_hash(),
    }


class ServiceClient:
    def __init__(self, server: str | None = None, timeout: float = 3600.0):
        self._loop = None
        if server:
            self._client = httpx.Client(base_url=server, timeout=timeout)
        else:
            from .service import create_app

            self._loop = asyncio.new_event_loop()
            self._client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=create_app()),
                base_url="http://service.local",
                timeout=timeout,
            )

    def close(self):
        if self._loop is not None:
            self._loop.run_until_complete(self._client.aclose())
            self._loop.close()
        else:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, method, path, **kw):
        if self._loop is not None:
            return self._loop.run_until_complete(self._client.request(method, path, **kw))
        return self._client.request(method, path, **kw)

    def _post(self, path, payload):
        resp = self._request("POST", path, json=payload)
        if resp.status_code != 200:
            self._raise_typed(resp)
        return resp.json()

    def _raise_typed(self, resp):
        try:
            data = resp.json()
        except Exception:
            raise E.FinslerError(f"service error {resp.status_code}: {resp.text[:200]}")
        etype = data.get("error_type", "")
        msg = data.get("message", data.get("detail", str(data)))
        exc_cls = getattr(E, etype, None)
        if isinstance(exc_cls, type) and issubclass(exc_cls, E.FinslerError):
            raise exc_cls(msg)
        if resp.status_code in (400, 422) and etype == "":
            raise E.ConfigError(str(msg))
        raise E.FinslerError(f"{etype}: {msg}")

    def health(self):
        return self._request("GET", "/health").json()

    def geometry_point(self, cfg: RunConfig, x, y, check=False):
        return self._post("/geometry/point", {
            "config": config_payload(cfg),
            "x": list(x), "y": list(y), "check": check,
        })

    def invariants(self, cfg: RunConfig):
        return self._post("/invariants", {"config": config_payload(cfg)})

    def spectrum(self, cfg: RunConfig, m):
        return self._post("/spectrum", {"config": config_payload(cfg), "m": m})

    def isospectral(self, cfg: RunConfig, m, tol):
        return self._post("/isospectral", {"config": config_payload(cfg), "m": m, "tol": tol})

    def probe(self, cfg: RunConfig):
        return self._post("/probe", {"config": config_payload(cfg)})

    def bootstrap(self, epsilon, rmax_stop=12.0):
        return self._post("/bootstrap", {"epsilon": epsilon, "rmax_stop": rmax_stop})
