"""Digital self-interference cancellation toolkit.

Core pieces:

* ``signals``      -- OFDM transmit generator, nonlinear SI channel, dataset files
* ``cancellers``   -- linear FIR and memory-polynomial cancellers (LS fit)
* ``network``      -- small real-valued MLP canceller that augments the FIR
* ``fixed_point``  -- saturating fixed-point arithmetic and model quantization
* ``pipeline``     -- cycle-accurate simulator of the macro-pipelined datapath
* ``complexity``   -- arithmetic cost model (real multiplies / adds / parameters)
* ``metrics``      -- cancellation ratio and bit-width sweeps
* ``service``      -- FastAPI application exposing the above
* ``cli``          -- command line front end (thin client of the service)
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, DataFormatError, NumericError

__all__ = [
    "__version__",
    "ConfigurationError",
    "DataFormatError",
    "NumericError",
]
