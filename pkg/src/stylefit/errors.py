"""Exception types shared across the package."""

from __future__ import annotations


class StylefitError(Exception):
    """Base class for all package errors."""


class InputError(StylefitError, ValueError):
    """Caller supplied an argument that violates an operation's contract."""


class DegenerateInputError(InputError):
    """Input is structurally valid but numerically unusable (e.g. a
    removal direction with vanishing norm)."""


class ConfigError(InputError):
    """Configuration file or override could not be parsed or validated."""


class BackendError(StylefitError):
    """A generation backend failed or was misconfigured."""


class JobCancelled(StylefitError):
    """Raised inside a sampling loop when a cooperative cancel flag is set.

    Checked once per denoising step, so cancellation lands on a step
    boundary and never leaves a half-written latent behind.
    """


class OracleError(StylefitError):
    """A judge oracle could not produce a verdict after retries."""
