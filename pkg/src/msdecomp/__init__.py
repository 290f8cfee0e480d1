"""Multiscale Tikhonov-type decomposition for linear inverse problems.

Pieces:

* :mod:`msdecomp.engine`    -- the generic decomposition loop, traces and
  identity diagnostics;
* :mod:`msdecomp.gradsolve` -- the Barzilai-Borwein/Armijo inner solver;
* :mod:`msdecomp.deblur`    -- the image-deblurring instantiation;
* :mod:`msdecomp.seqspace`  -- exact rational certification of the
  sequence-space construction with unbounded iterates;
* :mod:`msdecomp.cli`       -- the ``msdecomp`` command-line tool.
"""

__version__ = "0.1.0"

from .engine import (  # noqa: F401
    LambdaSchedule,
    MultiscaleTrace,
    ProblemInstance,
    check_residual_monotonicity,
    parseval_report,
    run_multiscale,
    run_single_step,
)
from .gradsolve import SolverParams, SolveResult, grad_check, minimize  # noqa: F401
from .seqspace import SequenceParams, params_from, verify_claim  # noqa: F401
