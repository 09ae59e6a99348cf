# src/nodes/__init__.py
from src.nodes import (
    besov_chain,
    energy_balance,
    holder_boundedness,
    linfty_truncation,
    molecule_ledger,
    picard,
    power_lemma,
    simulate,
    spectral_exactness,
    sqg_maxprinciple,
    transfer,
)

# preset name -> module exposing default_config() and run(ctx)
PRESETS = {
    "spectral_exactness": spectral_exactness,
    "sqg_maxprinciple": sqg_maxprinciple,
    "energy_balance": energy_balance,
    "besov_chain": besov_chain,
    "power_lemma": power_lemma,
    "picard": picard,
    "transfer": transfer,
    "molecule_ledger": molecule_ledger,
    "holder_boundedness": holder_boundedness,
    "linfty_truncation": linfty_truncation,
    "simulate": simulate,
}
