"""Client for the toolkit service.

With no base URL the requests run against the app in process (no sockets,
same filesystem); pass a base URL to talk to a ``sicancel serve`` instance.
Error responses raise the same exception types the library itself uses, so
callers handle local and remote failures one way.
"""

from __future__ import annotations

import httpx

from .errors import ConfigurationError, DataFormatError, NumericError

_ERROR_KINDS = {
    "configuration": ConfigurationError,
    "data-format": DataFormatError,
    "numeric": NumericError,
    "not-found": FileNotFoundError,
}


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 600.0):
        if base_url is None:
            import warnings

            with warnings.catch_warnings():
                # the test client import warns about its own httpx pin
                warnings.simplefilter("ignore", Warning)
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(), base_url="http://sicancel.local")
        else:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> dict:
        resp = self._client.request(method, path, **kwargs)
        if resp.status_code >= 400:
            try:
                body = resp.json()
            except ValueError:
                resp.raise_for_status()
            err = body.get("error")
            if err and err.get("kind") in _ERROR_KINDS:
                raise _ERROR_KINDS[err["kind"]](err.get("message", ""))
            raise ConfigurationError(str(body.get("detail", body)))
        return resp.json()

    def health(self) -> dict:
        return self._request("GET", "/health")

    def config_defaults(self) -> str:
        return self._request("GET", "/config/defaults")["text"]

    def generate(self, path: str, config_text: str = "") -> dict:
        return self._request(
            "POST", "/datasets/generate", json={"path": path, "config_text": config_text}
        )

    def fit(self, dataset: str, kind: str, out: str, **options) -> dict:
        payload = {"dataset": dataset, "kind": kind, "out": out, **options}
        return self._request("POST", "/models/fit", json=payload)

    def evaluate(
        self, dataset: str, model: str, total_bits=None, frac_bits=None,
        split: str = "eval",
    ) -> dict:
        payload = {
            "dataset": dataset, "model": model, "total_bits": total_bits,
            "frac_bits": frac_bits, "split": split,
        }
        return self._request("POST", "/evaluate", json=payload)

    def sweep(self, dataset: str, models: dict, q_values: list, out_csv=None) -> dict:
        payload = {
            "dataset": dataset, "models": models, "q_values": q_values, "out_csv": out_csv,
        }
        return self._request("POST", "/sweep", json=payload)

    def complexity(self, memory_len: int = 13, max_order: int = 7, n_hidden: int = 18) -> dict:
        params = {"memory_len": memory_len, "max_order": max_order, "n_hidden": n_hidden}
        return self._request("GET", "/complexity", params=params)

    def simulate(self, dataset: str, model: str, total_bits: int, **options) -> dict:
        payload = {
            "dataset": dataset, "model": model, "total_bits": total_bits, **options,
        }
        return self._request("POST", "/simulate", json=payload)

    def compare(self, dataset: str, models: dict | None = None) -> dict:
        payload = {"dataset": dataset, "models": models or {}}
        return self._request("POST", "/compare", json=payload)
