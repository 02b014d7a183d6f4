"""Error types shared across the library."""


class NormalizationError(ArithmeticError):
    """A normalizer row is zero or negative, so D^-1 does not exist."""


class ScoreOverflowError(OverflowError):
    """A masked scaled score exceeds the float64 exp overflow guard (700)."""


class UnderRankError(RuntimeError):
    """Recovery found fewer basis terms than requested.

    Attributes:
        found: number of terms recovered before the search ran dry
        windows: windows of the terms found so far
    """

    def __init__(self, found, windows):
        self.found = found
        self.windows = tuple(windows)
        super().__init__(
            f"only {found} basis term(s) present, windows so far {self.windows}"
        )


class FactorizationError(RuntimeError):
    """Rank-k factorization missed the entrywise relative-error target.

    Attributes:
        achieved: smallest entrywise relative error the factorization reached
    """

    def __init__(self, requested, achieved, k):
        self.requested = requested
        self.achieved = achieved
        self.k = k
        super().__init__(
            f"rank-{k} factors achieve entrywise relative error {achieved:.3e} "
            f"> requested {requested:.3e}"
        )


class VerificationError(RuntimeError):
    """A self-check that must hold mathematically failed."""
