import requests

from toolserver import ToolServer

server = ToolServer("fixture")


def fetch_status(service: str) -> str:
    resp = requests.get(f"http://127.0.0.1:8765/status/{service}", timeout=2)
    return resp.text


server.register_tool(fetch_status)
