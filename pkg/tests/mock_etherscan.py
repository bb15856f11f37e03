"""In-process etherscan-compatible mock server for client tests."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

DAO_ADDRESS = "0xBB9bc244D798123fDe783fCc1C72d3Bb8C189413"
DAO_CODE_PREFIX = "0x6060604052"


class MockEtherscan:
    def __init__(self, pages=None, codes=None, rate_limit_first=0):
        # pages: {page_number: [address, ...]}; codes: {address_lower: hex}
        self.pages = pages or {}
        self.codes = codes or {}
        self.rate_limit_first = rate_limit_first
        self.request_count = 0
        self.request_log = []

        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                mock.request_count += 1
                q = parse_qs(urlparse(self.path).query)
                mock.request_log.append(q)
                if mock.rate_limit_first > 0:
                    mock.rate_limit_first -= 1
                    self._reply(429, {"status": "0", "result": "Max rate limit reached"})
                    return
                action = q.get("action", [""])[0]
                if action == "eth_getCode":
                    address = q.get("address", [""])[0].lower()
                    code = mock.codes.get(address, "0x")
                    self._reply(200, {"jsonrpc": "2.0", "result": code})
                elif action == "listverified":
                    page = int(q.get("page", ["1"])[0])
                    addrs = mock.pages.get(page, [])
                    self._reply(
                        200,
                        {"status": "1", "result": [{"Address": a} for a in addrs]},
                    )
                else:
                    self._reply(200, {"status": "0", "result": "unknown action"})

            def _reply(self, status, body):
                payload = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/api"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
