"""Exception hierarchy shared by the engines and the command-line front end."""


class QnetEnergyError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(QnetEnergyError, ValueError):
    """Input violates a documented range or structural invariant."""


class CatalogError(QnetEnergyError):
    """Catalog file cannot be parsed or references an unknown component."""


class UnknownComponentError(CatalogError, KeyError):
    def __init__(self, component_id: str):
        super().__init__(component_id)
        self.component_id = component_id

    def __str__(self) -> str:
        return f"unknown component id {self.component_id!r}"


class InfeasibleTargetError(QnetEnergyError):
    """The requested target cannot be reached because the key rate is zero."""


class NumericalDomainError(QnetEnergyError, ArithmeticError):
    """Parameters lead outside the physical region (negative variance, complex root...)."""
