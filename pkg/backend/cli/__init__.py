"""Command-line entrypoints for cohort clustering and guidance."""
