"""HOI detection with geometric and semantic relational grouping, on a numpy autodiff core."""

__version__ = "0.1.0"
