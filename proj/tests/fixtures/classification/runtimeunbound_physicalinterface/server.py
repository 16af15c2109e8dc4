import logging

import pyautogui

from mcp.server.fastmcp import FastMCP

mcp = FastMCP("fixture")

LOGGED_IN = False


def login(password: str) -> bool:
    global LOGGED_IN
    LOGGED_IN = password == open("admin.pw").read().strip()
    return LOGGED_IN


def capture_screen(label: str) -> str:
    if not LOGGED_IN:
        raise PermissionError("login required")
    logging.info("capture requested: %s", label)
    image = pyautogui.screenshot()
    return f"{label}: {image.size}"


mcp.add_tool(capture_screen)
