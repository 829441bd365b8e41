# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Exception hierarchy shared by every fluidhopf unit.

The CLI maps ``ConfigError`` to exit code 1 and every other
``FluidHopfError`` to exit code 2.
"""


class FluidHopfError(Exception):
    pass


class ConfigError(FluidHopfError, ValueError):
    pass


# Model structure

class ModelError(FluidHopfError, ValueError):
    pass


class InvalidRates(ModelError):
    pass


class InvalidGenerator(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


# Evolution system

class IntegrationError(FluidHopfError):
    pass


# Time-homogeneous factorization

class FactorizationError(FluidHopfError):
    pass


class SpectralSplitError(FactorizationError):
    pass


class SubspaceDefect(FactorizationError):
    pass


class NoConvergence(FactorizationError):
    pass


# Generator-equation solver

class PassageError(FluidHopfError):
    pass


class GridError(PassageError, ValueError):
    pass


class DomainError(PassageError, ValueError):
    pass


class DerivativeUnavailable(PassageError):
    pass


# Simulation

class HazardError(FluidHopfError):
    pass


# Queries

class QueryError(FluidHopfError):
    pass


class NotConstantFamily(QueryError, ValueError):
    pass


class IllConditioned(QueryError):
    pass
