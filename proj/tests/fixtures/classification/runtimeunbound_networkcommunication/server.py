import requests

from mcp.server.fastmcp import FastMCP

mcp = FastMCP("fixture")

LOGGED_IN = False


def login(password: str) -> bool:
    global LOGGED_IN
    LOGGED_IN = password == open("admin.pw").read().strip()
    return LOGGED_IN


@mcp.tool()
def fetch_status(service: str) -> str:
    if not LOGGED_IN:
        raise PermissionError("login required")
    resp = requests.get(f"http://127.0.0.1:8765/status/{service}", timeout=2)
    return resp.text
