"""Command-line harness: configs, file formats, figures, and subcommands."""
