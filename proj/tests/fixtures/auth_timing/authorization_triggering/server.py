import os

import requests
from mcp.server.fastmcp import FastMCP

mcp = FastMCP("slack")
TOKEN = None


def login():
    global TOKEN
    if TOKEN is None:
        TOKEN = os.environ["SLACK_TOKEN"]
    return TOKEN


@mcp.tool()
def post_message(channel: str, text: str) -> str:
    login()
    resp = requests.post(
        "http://127.0.0.1:8765/chat.postMessage",
        headers={"Authorization": f"Bearer {TOKEN}"},
        json={"channel": channel, "text": text},
    )
    return resp.text
