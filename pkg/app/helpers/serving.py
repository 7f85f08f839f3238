"""
Embedded HTTP Servers

Runs a Flask app on a werkzeug server in a background thread. Used by
``serve`` for the dashboard and the stub weather service, by ``simulate
--embedded`` and by the end-to-end tests (port 0 picks a free port).
"""

import logging
import threading

from werkzeug.serving import make_server

from app.errors import StartupError

logger = logging.getLogger(__name__)


class ServiceThread(threading.Thread):
    """
    A werkzeug server thread.

    Raises:
        StartupError: If the port cannot be bound (e.g. already in use)

    Example:
        >>> server = ServiceThread(create_app(), "127.0.0.1", 0, "dashboard").start_serving()
        >>> server.url
        'http://127.0.0.1:54321'
        >>> server.stop()
    """

    def __init__(self, app, host, port, name):
        super().__init__(name=f"{name}-server", daemon=True)
        self.service_name = name
        try:
            self.server = make_server(host, port, app, threaded=True)
        except OSError as exc:
            raise StartupError(f"{name}: cannot bind {host}:{port}: {exc}") from exc
        # werkzeug calls sys.exit when the bind fails
        except SystemExit as exc:
            raise StartupError(f"{name}: cannot bind {host}:{port}") from exc

    @property
    def host(self):
        return self.server.host

    @property
    def port(self):
        return self.server.server_port

    @property
    def url(self):
        return f"http://{self.host}:{self.port}"

    def run(self):
        self.server.serve_forever()

    def start_serving(self):
        self.start()
        logger.info(f"{self.service_name} listening on {self.url}")
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        self.join(timeout=5)
