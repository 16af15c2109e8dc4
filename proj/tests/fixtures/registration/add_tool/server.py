import httpx
from mcp.server.fastmcp import FastMCP

mcp = FastMCP("weather")


def fetch_weather(city: str) -> str:
    """Current conditions from a local weather stub."""
    return httpx.get("http://127.0.0.1:8765/weather", params={"city": city}).text


mcp.add_tool(fetch_weather)
