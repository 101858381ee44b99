class PoseError(ValueError):
    """Raised for contract violations: bad joint sets, malformed files, shape
    mismatches, non-monotone frame indices, and similar caller errors.

    Subclasses ValueError so generic callers can catch it without importing
    this package.
    """

    def __init__(self, message, *, path=None, frame=None):
        self.path = path
        self.frame = frame
        loc = []
        if path is not None:
            loc.append(f"file={path}")
        if frame is not None:
            loc.append(f"frame={frame}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
