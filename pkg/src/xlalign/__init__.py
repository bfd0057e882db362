"""Cross-lingual word embedding alignment.

Learns one orthogonal rotation per language plus a single shared
positive-definite metric, so that translations score highly under an
inner product in a common latent space.  Includes CSLS retrieval,
multilingual and pivot-based pipelines, and a semi-supervised
bootstrap loop.
"""

import os as _os

# Thread cap must land before the first numpy import anywhere in the
# process, otherwise the BLAS pools are already spawned.
_threads = _os.environ.get("XLALIGN_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
