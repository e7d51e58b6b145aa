"""Exception types shared across the simulator."""


class PoolsimError(Exception):
    """Base class for all simulator errors."""


# --- input data ------------------------------------------------------------

class DataError(PoolsimError):
    """A problem with an input file (network, demand, grid surface)."""


class MalformedRow(DataError):
    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class DanglingEdge(DataError):
    def __init__(self, path, line_no, node_id):
        self.node_id = node_id
        super().__init__(f"{path}:{line_no}: edge references unknown node id {node_id}")


class DisconnectedDemandNode(DataError):
    def __init__(self, node_id, detail=""):
        self.node_id = node_id
        super().__init__(f"demand node {node_id} is not strongly connected to the rest "
                         f"of the demand{': ' + detail if detail else ''}")


# --- graph queries ----------------------------------------------------------

class Unreachable(PoolsimError):
    def __init__(self, src, dst):
        self.src = src
        self.dst = dst
        super().__init__(f"no path from node {src} to node {dst}")


# --- routing ----------------------------------------------------------------

class TooManyStops(PoolsimError):
    """Exhaustive route search refused: stop count above the factorial guard."""


class RequestNotOnRoute(PoolsimError):
    def __init__(self, request_id):
        self.request_id = request_id
        super().__init__(f"request {request_id} has no stops on this route")


# --- configuration ----------------------------------------------------------

class ConfigError(PoolsimError):
    """A problem with the run configuration."""


class UnknownKey(ConfigError):
    def __init__(self, key, line_no=None):
        self.key = key
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"unknown config key: {key}{where}")


class ValueTypeError(ConfigError):
    def __init__(self, key, expected, raw):
        self.key = key
        super().__init__(f"config key {key}: expected {expected}, got {raw!r}")


class RangeError(ConfigError):
    def __init__(self, key, constraint, value):
        self.key = key
        super().__init__(f"config key {key}: {value!r} violates {constraint}")


# --- metrics / scaling -------------------------------------------------------

class MalformedTrace(PoolsimError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        super().__init__(f"trace line {line_no}: {reason}")


class NonPositiveInput(PoolsimError):
    def __init__(self, name, value):
        super().__init__(f"{name} must be > 0, got {value}")


class InsufficientSamples(PoolsimError):
    def __init__(self, needed, got):
        super().__init__(f"need at least {needed} usable samples, got {got}")


class NoFixedPoint(PoolsimError):
    def __init__(self, lo, hi, f_lo, f_hi):
        super().__init__(f"no sign change on bracket [{lo}, {hi}]: f={f_lo}, {f_hi}")
