"""Exception hierarchy shared across the package.

Three broad families matter to callers: ``ConfigError`` (bad user input or
analysis configuration, CLI exit code 2), ``DataError`` (malformed or
inconsistent genetic data, CLI exit code 3), and model-level errors raised
by the meiosis machinery.
"""


class AemrError(Exception):
    """Base class for all package errors."""


class ConfigError(AemrError):
    """Invalid analysis configuration or CLI arguments."""


class DataError(AemrError):
    """Malformed or internally inconsistent input data."""


class MapParseError(DataError):
    """Genetic map file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NegativeDistance(MapParseError):
    """A locus declared a negative genetic distance."""


class NonMonotoneIndex(MapParseError):
    """Locus indices are not contiguous and strictly increasing."""


class LengthMismatch(DataError):
    """A haplotype does not match the genetic map length."""


class NonBinaryAllele(DataError):
    """An allele string contains characters other than 0/1."""


class MissingMember(DataError):
    """A family lacks one of its six required haplotype rows."""


class UnmatchedFamily(DataError):
    """A family is present in one input file but missing in another."""


class ImpossibleHaplotype(AemrError):
    """Observed offspring alleles have zero probability under the model.

    Raised when the mutation rate is zero and an offspring allele matches
    neither parental haplotype anywhere on a forward/backward pass; this
    usually signals phasing errors or corrupted input rather than biology.
    """


class FlankNotHeterozygous(AemrError):
    """Truncated propensity computation requires heterozygous flank loci."""


class NoHeterozygousFlank(AemrError):
    """No heterozygous locus exists on the requested side of a target."""

    def __init__(self, message, side=None, direction=None):
        super().__init__(message)
        self.side = side
        self.direction = direction


class ConditioningError(AemrError):
    """Conditioning loci do not form two contiguous flanks around a window."""
