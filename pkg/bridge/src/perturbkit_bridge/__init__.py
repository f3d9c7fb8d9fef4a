"""In-process bridge for external training loops.

The surface is intentionally small: open_session/close plus the three
operations perturb_text, perturb_image, and sample_step. Results are
byte-identical to the perturbkit CLI for the same inputs; image buffers
are exchanged through the numpy array protocol and copied only when the
caller's buffer is non-contiguous.
"""

from .session import (
    BridgeSession,
    open_session,
    perturb_image,
    perturb_text,
    sample_step,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeSession",
    "open_session",
    "perturb_image",
    "perturb_text",
    "sample_step",
]
