import subprocess
from typing import List

from mcp.server.fastmcp import FastMCP

mcp = FastMCP("git")


def _run_git_command(repo_path: str, command: List[str]) -> str:
    full_command = ["git"] + command
    result = subprocess.run(
        full_command, cwd=repo_path,
        check=True, capture_output=True,  text=True)
    return result.stdout


@mcp.tool()
def git_command(repo_path: str, command: List[str]) -> str:
    """Run a git subcommand inside a repository."""
    return _run_git_command(repo_path, command)
