"""The CLI against a live HTTP server (the remote dispatch path)."""

import json
import socket
import threading
import time

import pytest
import uvicorn

from spdemg.cli import main
from spdemg.experiment import write_demo_bundle
from spdemg.service import app


@pytest.fixture(scope="module")
def server_url():
    # bind an ephemeral port first so the URL is known before startup
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10.0
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5.0)


def test_cli_over_http(server_url, tmp_path, capsys):
    bundle = write_demo_bundle(tmp_path)
    code = main(
        ["--server", server_url, "validate", "--manifest", bundle["manifests"][0]]
    )
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] is True

    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "window": {"mode": "whole-trial", "context": 1.5, "step": None},
                "eta": 0.1,
                "center": True,
                "model": "mdm",
                "model_config": {},
                "split": {"kind": "by-repetition-index", "train_repetitions": 3},
                "seed": 0,
            }
        )
    )
    args = ["--server", server_url, "run", "--config", str(cfg)]
    for m in bundle["manifests"]:
        args += ["--manifest", m]
    assert main(args) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["metrics"]["accuracy"] == 1.0


def test_cli_over_http_error_path(server_url, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"eta": 1.5, "model": "mdm"}))
    code = main(
        ["--server", server_url, "run", "--config", str(cfg), "--manifest", "x.json"]
    )
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert "InvalidInput" in err["message"] or err["error"] == "SpdEmgError"
