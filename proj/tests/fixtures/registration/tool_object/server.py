import sqlite3

from mcp.server import Server
from mcp import types

server = Server("db")


def query_db(sql: str) -> list:
    conn = sqlite3.connect("scratch.db")
    return conn.execute(sql).fetchall()


TOOLS = [
    types.Tool(name="query_db", description="Run a read-only query", handler=query_db),
]
