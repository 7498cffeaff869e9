"""Transfer-learning toolkit: baseline DNN, pre-train/fine-tune, and
progressive networks on fixed-length feature vectors, with the full
speaker-stratified repeated-CV evaluation protocol."""

__version__ = "0.1.0"
