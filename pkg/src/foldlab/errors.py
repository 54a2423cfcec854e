"""Exception types shared across the toolkit."""


class FoldlabError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FoldlabError):
    """A point (or a finite-difference stencil around it) leaves the declared domain."""


class NonFiniteError(FoldlabError):
    """An evaluation produced NaN or infinity."""


class DegenerateFrameError(FoldlabError):
    """A geometric frame collapsed below the degeneracy floor."""


class NewtonError(FoldlabError):
    """An implicit solve failed to converge."""


class QuadratureError(FoldlabError):
    """An oscillatory quadrature failed its self-consistency check."""


class SamplerError(FoldlabError):
    """A rejection sampler starved (acceptance rate collapsed)."""


class ConfigError(FoldlabError):
    """Invalid experiment configuration; carries the full list of problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
