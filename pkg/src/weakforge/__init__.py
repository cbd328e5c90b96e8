"""weakforge: programmatic weak supervision with synthesized labeling functions.

The package is organized around the stages of a weak-supervision run:

- ``corpus``      dataset ingestion and class-space bookkeeping
- ``lfkit``       labeling-function representation and execution
- ``votes``       the n-by-m vote matrix produced by applying LFs
- ``labelmodels`` noise models (MV, WMV, Dawid-Skene, triplet method)
- ``lfstats``     coverage / overlap / conflict / accuracy diagnostics
- ``promptforge`` prompt assembly, generation clients, and the response cache
- ``endmodel``    hashed bag-of-words logistic regression and evaluation
- ``pipeline``    end-to-end orchestration and the CLI
"""

from weakforge.votes import ABSTAIN, VoteMatrix

__version__ = "0.1.0"

__all__ = ["ABSTAIN", "VoteMatrix", "__version__"]
