import subprocess

from universal_mcp.applications import APIApplication


class ShellApp(APIApplication):
    def __init__(self):
        super().__init__(name="shell")

    def run_script(self, script: str) -> str:
        """Run a maintenance script."""
        return subprocess.check_output(["echo", script], text=True)

    def list_tools(self):
        return [self.run_script]
