import logging

import pyautogui

from toolserver import ToolServer

server = ToolServer("fixture")

SESSIONS = {}


def capture_screen(session_id: str, label: str) -> str:
    if session_id not in SESSIONS:
        raise PermissionError("unknown session")
    logging.info("capture requested: %s", label)
    image = pyautogui.screenshot()
    return f"{label}: {image.size}"


server.register_tool(capture_screen)
