"""
HTTP Client Helpers

``DashboardClient`` is what a gateway uses to talk to the dashboard's HTTP
API. ``call`` is shared with the weather client: it performs one request
with requests, and turns connection failures and error responses back into
the platform's exception family.
"""

import logging

import requests

from app.errors import (
    ConflictError,
    DesyncError,
    FitError,
    ListenerUnreachableError,
    NotFoundError,
    TransportError,
    ValidationError,
    WsnError,
)

logger = logging.getLogger(__name__)

_BY_STATUS = {
    400: ValidationError,
    404: NotFoundError,
    409: ConflictError,
    422: ListenerUnreachableError,
}

_BY_KIND = {
    "desync": DesyncError,
    "fit": FitError,
    "selection": FitError,
}


def call(session, method, url, unreachable=TransportError, timeout=5.0, **kwargs):
    """
    Perform one HTTP request and decode its JSON body.

    Args:
        session (requests.Session): Session to send with
        method (str): HTTP method
        url (str): Absolute URL
        unreachable (type): Error raised when the peer cannot be reached
        timeout (float): Seconds before the request is abandoned

    Returns:
        dict | list: The decoded JSON body

    Raises:
        WsnError: The subclass matching the response's status and error kind
    """
    try:
        response = session.request(method, url, timeout=timeout, **kwargs)
    except requests.RequestException as exc:
        raise unreachable(f"{method} {url} failed: {exc}") from exc
    if response.ok:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {"error": "http", "message": response.text[:200]}
    message = body.get("message", response.reason) if isinstance(body, dict) else response.reason
    kind = body.get("error") if isinstance(body, dict) else None
    error_cls = _BY_KIND.get(kind) or _BY_STATUS.get(response.status_code)
    if error_cls is None:
        error_cls = unreachable if response.status_code >= 500 else WsnError
    raise error_cls(f"{method} {url} -> {response.status_code}: {message}")


class DashboardClient:
    """
    Thin wrapper over the dashboard HTTP API.

    Example:
        >>> client = DashboardClient("http://127.0.0.1:5000")
        >>> client.ingest(measurement.to_dict())
        {'seq': 1, ...}
    """

    def __init__(self, base_url, timeout=10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def _call(self, method, path, **kwargs):
        return call(self.session, method, f"{self.base_url}{path}", timeout=self.timeout, **kwargs)

    def register_gateway(self, gateway_id, sensors):
        return self._call("POST", "/gateways", json={"gateway_id": gateway_id, "sensors": sensors})

    def ingest(self, payload):
        return self._call("POST", "/measurements", json=payload)

    def report_slot(self, payload):
        return self._call("POST", "/slots", json=payload)

    def poll_commands(self, gateway_id):
        return self._call("GET", f"/gateways/{gateway_id}/commands")

    def report_delivery(self, gateway_id, command_id, applied, detail=""):
        body = {"command_id": command_id, "applied": applied, "detail": detail}
        return self._call("POST", f"/gateways/{gateway_id}/deliveries", json=body)

    def dispatch(self, command):
        return self._call("POST", "/reconfig", json=command)

    def report_failure(self, sensor_id, description, wallclock=None):
        body = {"sensor_id": sensor_id, "description": description}
        if wallclock:
            body["wallclock"] = wallclock
        return self._call("POST", "/failures", json=body)

    def register_listener(self, listener_id, endpoint, topics):
        body = {"listener_id": listener_id, "endpoint": endpoint, "topics": sorted(topics)}
        return self._call("POST", "/listeners", json=body)

    def deregister_listener(self, listener_id):
        return self._call("DELETE", f"/listeners/{listener_id}")

    def series(self, sensor_id, from_tick, to_tick):
        params = {"sensor": sensor_id, "from": from_tick, "to": to_tick}
        return self._call("GET", "/series", params=params)

    def metrics(self):
        return self._call("GET", "/metrics")

    def close(self):
        self.session.close()
