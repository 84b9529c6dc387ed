"""Exception types raised by the library.

Every error derives from :class:`CossError` (itself a ``ValueError``) so
callers can catch input problems in one place.
"""


class CossError(ValueError):
    pass


class EmptyInput(CossError):
    pass


class DuplicateId(CossError):
    pass


class NonFiniteCovariate(CossError):
    pass


class MissingOutcome(CossError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"missing outcome for {len(self.ids)} unit(s): {', '.join(self.ids[:10])}")


class MissingCovariate(CossError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"missing covariate for {len(self.ids)} unit(s): {', '.join(self.ids[:10])}")


class EmptyArm(CossError):
    pass


class TooFewUnits(CossError):
    pass


class DegenerateCovariate(CossError):
    pass


class DegenerateDesign(CossError):
    pass


class TooFewSamples(CossError):
    pass


class TooFewPairs(CossError):
    pass


class ZeroVariance(CossError):
    pass


class NTooSmall(CossError):
    pass


class SampleTooLarge(CossError):
    pass


class ConfigError(CossError):
    """Invalid simulation configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
