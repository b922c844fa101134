"""Backend package for cohort clustering and career guidance."""
