from __future__ import annotations

from blinker import Namespace  # type: ignore[import]

_signals = Namespace()

#: Called after every accepted time step with the stepper as sender,
# connected functions receive the ``state`` and ``report`` keywords.
step_finished = _signals.signal("step-finished")

#: Called when a quadratic program has been solved with the solver as
# sender, connected functions receive the ``stats`` keyword.
qp_solved = _signals.signal("qp-solved")

#: Called when the final collision verification failed and the
# proximity parameter is reduced, connected functions receive the
# ``omega`` and ``crossings`` keywords.
omega_reduced = _signals.signal("omega-reduced")

#: Called for every recorded frame of a scenario run, connected
# functions receive the ``index``, ``time``, ``positions`` and
# ``report`` keywords, the report of the initial frame is None.
frame_recorded = _signals.signal("frame-recorded")
