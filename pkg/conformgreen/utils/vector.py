class V2(tuple):
    """Immutable point of the plane

    Source positions and curve centers are stored as V2 so they compare by
    value and can key the per-source solve cache. Arithmetic is done on numpy
    arrays; ``np.asarray(v)`` gives the coordinates.

    Args:
      x (number or 2-sequence): 1st coordinate or 2-sequence with coordinates
      y (number): 2nd coordinate. Ignored if x is a sequence
    """

    __slots__ = ()

    def __new__(cls, x=0.0, y=0.0):
        if hasattr(x, "__len__") or hasattr(x, "__iter__"):
            x, y = x
        return super().__new__(cls, (float(x), float(y)))

    def __init__(self, *args, **kw):
        # tuple.__init__ must not see the coordinates
        return

    x = property(lambda self: self[0])
    y = property(lambda self: self[1])

    def __repr__(self):
        return f"V2({self.x!r}, {self.y!r})"
