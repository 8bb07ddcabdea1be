"""Desk-scale NL2SQL laboratory.

Sketch-based subtask decoding over typed single tables, with table-aware
condition value resolution, a restricted SQL executor, a synthetic corpus
generator and an evaluation harness.
"""

__version__ = "0.1.0"
