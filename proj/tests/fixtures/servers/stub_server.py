"""Minimal MCP test server over stdio or SSE. Standard library only.

Tools are harmless stand-ins: they echo text or report session state.

usage: stub_server.py [--mode MODE] [--sse PORT]
"""

import argparse
import json
import os
import queue
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

ECHO_TOOL = {
    "name": "echo_message",
    "description": "Echo a message.",
    "inputSchema": {
        "type": "object",
        "properties": {"message": {"type": "string"}, "repeat": {"type": "integer"}},
        "required": ["message"],
    },
}

SESSION_TOOL = {
    "name": "mcp_call",
    "description": "Run a command in an initialized session.",
    "inputSchema": {
        "type": "object",
        "properties": {"connection_id": {"type": "string"}, "params": {"type": "object"}},
        "required": ["connection_id", "params"],
    },
}

NOTE_TOOL = {
    "name": "post_note",
    "description": "Post a note with the cached token.",
    "inputSchema": {"type": "object", "properties": {"text": {"type": "string"}}, "required": ["text"]},
}


class Server:
    def __init__(self, mode):
        self.mode = mode
        self.initialized = False
        self.sessions = {}
        self.token = None
        if mode == "cached":
            try:
                with open("token.cache") as fh:
                    self.token = fh.read().strip()
            except OSError:
                self.token = None

    def tools(self):
        if self.mode == "zero":
            return []
        if self.mode == "session":
            return [SESSION_TOOL]
        if self.mode == "cached":
            return [NOTE_TOOL]
        return [ECHO_TOOL]

    def handle(self, msg):
        """Returns a response dict, or None for notifications and dropped requests."""
        method = msg.get("method")
        mid = msg.get("id")
        if mid is None:
            if method == "notifications/initialized":
                self.initialized = True
            return None
        if method == "initialize":
            if self.mode == "silent":
                return None
            if self.mode == "badinit":
                return error(mid, -32602, "unsupported protocol version")
            version = msg.get("params", {}).get("protocolVersion", "")
            return result(mid, {
                "protocolVersion": version,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": "stub", "version": "0"},
            })
        if self.mode == "strict" and not self.initialized:
            return error(mid, -32002, "server not initialized")
        if method == "tools/list":
            return result(mid, {"tools": self.tools()})
        if method == "tools/call":
            return self.call(mid, msg.get("params", {}))
        return error(mid, -32601, "method not found: %s" % method)

    def call(self, mid, params):
        name = params.get("name")
        args = params.get("arguments", {})
        if self.mode == "hang":
            return None
        if self.mode == "malformed":
            return error(mid, -32600, "invalid request")
        if name == "echo_message":
            if self.mode == "deny":
                return error(mid, -32001, "Unauthorized: missing bearer token")
            return text(mid, str(args.get("message", "")))
        if name == "post_note":
            if not self.token:
                return text(mid, "authentication required", is_error=True)
            return text(mid, "posted: %s" % args.get("text", ""))
        if name == "mcp_call":
            cid = args.get("connection_id")
            if cid not in self.sessions:
                return text(mid, "PermissionError: session not initialized", is_error=True)
            return text(mid, "ran in session %s" % cid)
        return error(mid, -32602, "unknown tool: %s" % name)


def result(mid, value):
    return {"jsonrpc": "2.0", "id": mid, "result": value}


def error(mid, code, message):
    return {"jsonrpc": "2.0", "id": mid, "error": {"code": code, "message": message}}


def text(mid, body, is_error=False):
    return result(mid, {"content": [{"type": "text", "text": body}], "isError": is_error})


def serve_stdio(server):
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except ValueError:
            out = error(None, -32700, "parse error")
        else:
            out = server.handle(msg)
        if out is not None:
            sys.stdout.write(json.dumps(out) + "\n")
            sys.stdout.flush()


def serve_sse(server, port):
    outbox = queue.Queue()

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):
            pass

        def do_GET(self):
            if self.path != "/sse":
                self.send_error(404)
                return
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            try:
                self.wfile.write(b"event: endpoint\ndata: /messages?session_id=1\n\n")
                self.wfile.flush()
                while True:
                    try:
                        item = outbox.get(timeout=0.5)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    self.wfile.write(("event: message\ndata: %s\n\n" % json.dumps(item)).encode())
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return

        def do_POST(self):
            if not self.path.startswith("/messages"):
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            self.send_response(202)
            self.send_header("Content-Length", "8")
            self.end_headers()
            self.wfile.write(b"Accepted")
            out = server.handle(json.loads(body))
            if out is not None:
                outbox.put(out)

    httpd = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    httpd.daemon_threads = True
    threading.Thread(target=watch_parent, daemon=True).start()
    httpd.serve_forever()


def watch_parent():
    parent = os.getppid()
    while os.getppid() == parent:
        time.sleep(0.5)
    os._exit(0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="echo")
    ap.add_argument("--sse", type=int, default=0)
    opts = ap.parse_args()
    server = Server(opts.mode)
    if opts.sse:
        serve_sse(server, opts.sse)
    else:
        serve_stdio(server)


if __name__ == "__main__":
    main()
