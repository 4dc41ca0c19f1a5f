"""Coverage-guided grey-box fuzzing with bandit-tuned scheduling, group-testing
taint inference, interval branch solving and multi-label flushed coverage."""

__version__ = "0.1.0"
