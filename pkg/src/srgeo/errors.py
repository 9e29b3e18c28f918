"""Exception types shared across the toolkit."""


class SrgeoError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(SrgeoError):
    """Operands live in different ambient dimensions."""


class ParseError(SrgeoError):
    """Syntax error in the vector-field / polynomial text grammar."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class HormanderError(SrgeoError):
    """Iterated brackets failed to span the tangent space within the depth bound."""

    def __init__(self, point, achieved_dim, ambient_dim, depth):
        super().__init__(
            f"bracket flag at {tuple(point)} reached dimension {achieved_dim} "
            f"of {ambient_dim} within depth {depth}"
        )
        self.point = tuple(point)
        self.achieved_dim = achieved_dim
        self.ambient_dim = ambient_dim
        self.depth = depth


class SpanError(SrgeoError):
    """A tangent vector is not in the span of the frame at the point (infinite form)."""


class FlowExitError(SrgeoError):
    """An integrated trajectory left the safety box."""

    def __init__(self, exit_time, point):
        super().__init__(f"trajectory left the safety box at t={exit_time:.6g}")
        self.exit_time = exit_time
        self.point = point


class NotPrivilegedError(SrgeoError):
    """A frame field carries a monomial of weighted order <= -2, so the
    supplied coordinates are not privileged for this frame."""

    def __init__(self, field_index, component, exponents, order):
        super().__init__(
            f"field {field_index + 1}, component d{component + 1}: monomial with "
            f"exponents {tuple(exponents)} has weighted order {order} <= -2"
        )
        self.field_index = field_index
        self.component = component
        self.exponents = tuple(exponents)
        self.order = order


class IsotropyError(SrgeoError):
    """The sufficient isotropy criterion (Lie algebra dimension == n) failed;
    no group law is produced."""


class DegenerateNormalError(SrgeoError):
    """The requested horizontal normal vanishes at the origin."""


class CharacteristicPointError(SrgeoError):
    """All frame fields are tangent to the boundary at the point; normals
    are undefined there."""

    def __init__(self, point):
        super().__init__(f"characteristic boundary point at {tuple(point)}")
        self.point = tuple(point)


class NonConvergedError(SrgeoError):
    """A numeric solve failed to reach its declared stopping rule."""


class DegenerateGradientError(SrgeoError):
    """The level-set gradient degenerates on the sampled boundary band."""

    def __init__(self, point, grad_norm):
        super().__init__(
            f"level-set gradient norm {grad_norm:.3g} below floor near {tuple(point)}"
        )
        self.point = tuple(point)
        self.grad_norm = grad_norm
