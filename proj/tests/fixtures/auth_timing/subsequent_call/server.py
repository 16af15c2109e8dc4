import os

import requests
from mcp.server.fastmcp import FastMCP

mcp = FastMCP("slack")
client_state = {}


@mcp.tool()
def connect_workspace(workspace: str) -> str:
    client_state["token"] = os.environ["SLACK_TOKEN"]
    client_state["workspace"] = workspace
    return "connected"


@mcp.tool()
def post_message(channel: str, text: str) -> str:
    headers = {"Authorization": "Bearer " + client_state["token"]}
    resp = requests.post("http://127.0.0.1:8765/chat.postMessage", headers=headers,
                         json={"channel": channel, "text": text})
    return resp.text
