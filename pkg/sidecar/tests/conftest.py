import socket
import sys
import threading
import time
from pathlib import Path

import pytest

# the shared provider contract suite lives with the pipeline package's tests
PRIMARY_TESTS = Path(__file__).resolve().parents[2] / "tests"
if str(PRIMARY_TESTS) not in sys.path:
    sys.path.insert(0, str(PRIMARY_TESTS))


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveSidecar:
    """Runs the service on a real localhost socket for the duration of a test module."""

    def __init__(self, model_id: str):
        import uvicorn

        from embed_sidecar.app import create_app

        self.port = _free_port()
        self.endpoint = f"http://127.0.0.1:{self.port}"
        config = uvicorn.Config(
            create_app(model_id=model_id),
            host="127.0.0.1",
            port=self.port,
            log_level="warning",
        )
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self, timeout: float = 15.0) -> "LiveSidecar":
        import requests

        self._thread.start()
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            try:
                if requests.get(f"{self.endpoint}/health", timeout=1).status_code == 200:
                    return self
            except OSError:
                pass
            time.sleep(0.05)
        raise RuntimeError("sidecar did not become healthy in time")

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5)


@pytest.fixture(scope="session")
def live_sidecar():
    sidecar = LiveSidecar(model_id="hash:64:0").start()
    yield sidecar
    sidecar.stop()
