import time


class Timer:
    """Wall-clock timer usable as a context manager."""

    def __init__(self):
        self.start = None
        self.elapsed = 0.0

    def __enter__(self) -> "Timer":
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.elapsed = time.perf_counter() - self.start
