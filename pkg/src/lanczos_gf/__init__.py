"""Green's functions and transport coefficients from Lanczos coefficients.

Submodules:
    sequences   coefficient sequences, staggering split, growth fits, tables
    pauli       Pauli-string algebra for translation-invariant operators
    lanczos     infinite-chain Lanczos driver and dense ED oracle
    cfrac       orthogonal polynomials, continued fractions, Cauchy transforms
    jets        truncated Taylor arithmetic for derivatives at z = 0
    stitching   stitched approximants, zero-frequency formulas, error bounds
    products    alternating products, convergence criteria, diffusion estimates
    smoothness  derivative scaling and the integral smoothness criterion
    fitting     series containers and scaling fits
    experiments builtin experiments and coefficient caching
    cli         the ``lanczos-gf`` command
"""

__version__ = "0.1.0"
