"""flagstall: deterministic simulator of the transient-flag timing channel.

The compiled core exposes the simulator (assemble/run), the attack harness
(build_attack_program, run_pass, leak_byte, leak_string), the channel
statistics (argmax_histogram, mean_profile, decoder_accuracy,
stall_window_sweep) and the mitigation gadgets (apply_gadget,
evaluate_mitigation).
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__ as _core_doc

__version__ = "0.1.0"
