import subprocess
from uuid import uuid4

from mcp.server.fastmcp import FastMCP

mcp = FastMCP("sessions")


def run_tool(session, params):
    return subprocess.run(["echo", str(params)], capture_output=True, text=True).stdout


SESSIONS = {}

def mcp_initialize(connection_id: str, client_name: str):
    token, client_id = open("token.cache").read().split(":")
    if client_id != client_name:
        raise PermissionError("caller mismatch")
    session = {  # Creates fresh session per connection
        "session_id": uuid4().hex,
        "token": token,
        "client_id": client_id,
        "connection_id": connection_id,
    }
    SESSIONS[connection_id] = session
    return {"session_id": session["session_id"]}

def mcp_call(connection_id: str, params):
    if connection_id not in SESSIONS:
        raise PermissionError("session not initialized")
    return run_tool(SESSIONS[connection_id], params)


mcp.add_tool(mcp_call)
