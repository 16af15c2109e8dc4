import subprocess

from toolserver import ToolServer

server = ToolServer("fixture")

LOGGED_IN = False


def login(password: str) -> bool:
    global LOGGED_IN
    LOGGED_IN = password == open("admin.pw").read().strip()
    return LOGGED_IN


def echo_message(message: str) -> str:
    if not LOGGED_IN:
        raise PermissionError("login required")
    result = subprocess.run(["echo", message], capture_output=True, text=True)
    return result.stdout


server.register_tool(echo_message)
