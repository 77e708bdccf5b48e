"""Numeric kernel dispatch.

The compiled extension is used when it was built; otherwise the pure-Python
module with the same interface is loaded. Set ``CONDMODES_PURE_PYTHON=1`` to
force the fallback.
"""
import os

if os.environ.get("CONDMODES_PURE_PYTHON"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        from . import _pykernels as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION
log_betainc_lower = _impl.log_betainc_lower
log_betainc_upper = _impl.log_betainc_upper
trunc_beta_ppf = _impl.trunc_beta_ppf
sample_stick_fractions = _impl.sample_stick_fractions
log_block_evidence = _impl.log_block_evidence
log_block_evidence_path = _impl.log_block_evidence_path

__all__ = [
    "IMPLEMENTATION",
    "log_betainc_lower",
    "log_betainc_upper",
    "trunc_beta_ppf",
    "sample_stick_fractions",
    "log_block_evidence",
    "log_block_evidence_path",
]
