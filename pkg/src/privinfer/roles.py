from enum import IntEnum


class Role(IntEnum):
    """Party identities: model owner, user, and the offline dealer."""

    P0 = 0
    P1 = 1
    P2 = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)

    def __str__(self):
        return self.name.lower()
