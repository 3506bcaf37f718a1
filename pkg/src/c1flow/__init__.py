"""C1 finite elements for fourth-order parabolic systems with semi-implicit
Euler and BDF2 time stepping."""

__version__ = "0.1.0"
