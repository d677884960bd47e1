from .core import (DuplicatePeerId, DuplicateSession, NoSuchRoom, RelayCore,
                   RelayError, Room, UnknownTarget)

__all__ = ["RelayCore", "Room", "RelayError", "DuplicateSession", "NoSuchRoom",
           "DuplicatePeerId", "UnknownTarget"]
