"""hiros: gesture-to-robot-command pipeline.

Subpackages: ``tensor`` (autodiff core), ``kernels`` (compiled/numpy conv
backends), plus ``dataset``, ``model``, ``evaluate``, ``stream``,
``protocol``, ``robotsim``, ``bus`` and the ``cli`` entry point.
"""

__version__ = "0.1.0"
