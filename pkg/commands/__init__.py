"""Commands package: one module per CLI sub-command"""

from commands import mask_command, plot_command, run_command, summarize_command

COMMANDS = [run_command, mask_command, plot_command, summarize_command]

__all__ = ["COMMANDS", "run_command", "mask_command", "plot_command", "summarize_command"]
