"""
Post-processing of traces: summaries and the enumeration oracle.
"""
from voltgrid.analysis.summary import policy_ordering, summarize, voltage_envelope
