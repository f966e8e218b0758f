"""Regional PET SUVR, Centiloid/CenTauRz harmonization and A/T2/N staging."""

__version__ = "0.1.0"
