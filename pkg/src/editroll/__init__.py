"""Music generation as a self-correcting stream of note add/remove edits.

The package trains a convolutional scorer to rank single-cell edits of a
piano roll, samples those edits one at a time (fixing its own earlier
mistakes along the way), estimates edit-path likelihoods, and scores
corpora with standard pitch statistics. A FastAPI session service and a
CLI sit on top for interactive composition.
"""

__version__ = "0.1.0"

from .core import EditEvent, EditSequence, PianoRoll, apply_event, note_list, realize, symmetric_difference

__all__ = [
    "EditEvent",
    "EditSequence",
    "PianoRoll",
    "apply_event",
    "note_list",
    "realize",
    "symmetric_difference",
]
