import os

from toolserver import ToolServer

server = ToolServer("fixture")

TOKEN = open("token.cache").read().strip()


def save_note(title: str, text: str) -> str:
    path = os.path.join("scratch", title + ".txt")
    with open(path, "w") as fh:
        fh.write(text + "\n# owner " + TOKEN[:4])
    return path


server.register_tool(save_note)
