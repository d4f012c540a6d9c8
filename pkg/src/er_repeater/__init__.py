"""Parameter models, analytic bounds and master-equation gate simulations for
cavity-coupled erbium ions in a quantum repeater."""
from .params import (CavityParams, DerivedRates, IonParams, ParameterError, derive_rates,
                     load_preset)

__version__ = "0.1.0"

__all__ = ["CavityParams", "DerivedRates", "IonParams", "ParameterError", "derive_rates",
           "load_preset", "__version__"]
