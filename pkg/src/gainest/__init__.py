"""Maximum-likelihood estimation of an unknown channel gain applied to a
lattice-quantization watermarked Gaussian host signal.

Subpackage map:

* :mod:`gainest.specfun`     -- self-contained special functions
* :mod:`gainest.lattices`    -- scalar, product, and convolutional-coset quantizers
* :mod:`gainest.model`       -- model-parameter algebra and the embed/attack pipeline
* :mod:`gainest.target`      -- the estimation objective and its statistics
* :mod:`gainest.initial`     -- initial (coarse) gain estimators
* :mod:`gainest.intervals`   -- search-interval lower/upper bounds
* :mod:`gainest.sampling`    -- candidate-set construction over the interval
* :mod:`gainest.optimize`    -- the estimation algorithms
* :mod:`gainest.theory`      -- Fisher information, bias, and MSE bounds
* :mod:`gainest.experiments` -- Monte-Carlo experiment harness and CSV/SVG output
"""

__version__ = "0.1.0"
