"""Run configuration, result files and the command-line front end."""
