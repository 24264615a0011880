##^# error taxonomy ############################################################
"""Domain errors, each tagged with a module-qualified code."""


class NcbmoError(Exception):
    module = "ncbmo"

    def __init__(self, message="", **info):
        super().__init__(message)
        self.info = info

    @property
    def code(self):
        return "%s.%s" % (self.module, type(self).__name__)

    def __str__(self):
        msg = super().__str__()
        if len(self.info) > 0:
            extra = ", ".join("%s=%s" % (k, self.info[k]) for k in sorted(self.info))
            msg = "%s (%s)" % (msg, extra) if msg else extra
        return msg


##$#############################################################################
##^# linalg ####################################################################
class NonHermitian(NcbmoError):
    module = "linalg"


class SingularPower(NcbmoError):
    module = "linalg"


class BadExponent(NcbmoError):
    module = "linalg"


##$#############################################################################
##^# algebra ###################################################################
class DimensionMismatch(NcbmoError):
    module = "algebra"


class BadSpec(NcbmoError):
    module = "algebra"


class NotIncreasing(NcbmoError):
    module = "algebra"


class NotModularInvariant(NcbmoError):
    module = "algebra"


class StateNotFaithful(NcbmoError):
    module = "algebra"


##$#############################################################################
##^# martingale ################################################################
class TooLarge(NcbmoError):
    module = "martingale"


##$#############################################################################
##^# norms #####################################################################
class NotPSD(NcbmoError):
    module = "norms"


class OptimizerDiverged(NcbmoError):
    module = "norms"


class NotCommutative(NcbmoError):
    module = "norms"


class LengthMismatch(NcbmoError):
    module = "norms"


##$#############################################################################
##^# interval ##################################################################
class NotNested(NcbmoError):
    module = "interval"


##$#############################################################################
##^# verify ####################################################################
class BadWitness(NcbmoError):
    module = "verify"


class NotTracial(NcbmoError):
    module = "verify"


class EmptyStream(NcbmoError):
    module = "verify"


##$#############################################################################
##^# cli #######################################################################
class ParseError(NcbmoError):
    module = "cli"

    def __init__(self, message="", path=None, line=None, **info):
        super().__init__(message, **info)
        self.path, self.line = path, line

    def __str__(self):
        loc = ""
        if self.path is not None:
            loc = "%s:%s: " % (self.path, self.line) if self.line else "%s: " % self.path
        return loc + super().__str__()


class IoError(NcbmoError):
    module = "cli"


##$#############################################################################
