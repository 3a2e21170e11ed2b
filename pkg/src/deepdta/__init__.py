"""Drug-target binding affinity prediction from SMILES and protein sequences.

Subpackages and modules:

``deepdta.neural``      reverse-mode tensors, layers, Adam, checkpoints
``deepdta.encoding``    label encoding with the shipped vocabularies
``deepdta.dataio``      dataset directories, affinity transforms, fold plans
``deepdta.model``       the two-encoder network and its variants
``deepdta.train``       training, cross-validation, grid search
``deepdta.similarity``  Smith-Waterman and n-gram Tanimoto similarity
``deepdta.kronrls``     Kronecker regularised least squares baseline
``deepdta.metrics``     concordance index, MSE, paired t-test
``deepdta.cli``         the ``deepdta`` command
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
