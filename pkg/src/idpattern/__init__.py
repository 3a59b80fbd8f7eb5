"""Multi-agent identification of stone deterioration patterns from photographs.

Specialist agents analyse a case image independently, comment on each other's
analyses, and a coordinator settles a final diagnosis. Predictions are scored
against expert ground truth with an ICOMOS-style pattern glossary.
"""

__version__ = "0.1.0"
