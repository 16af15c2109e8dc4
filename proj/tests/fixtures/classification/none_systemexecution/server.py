import subprocess

from mcp.server.fastmcp import FastMCP

mcp = FastMCP("fixture")


@mcp.tool()
def echo_message(message: str) -> str:
    result = subprocess.run(["echo", message], capture_output=True, text=True)
    return result.stdout
