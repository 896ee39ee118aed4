"""
Jerarquía de Excepciones

Cada error que puede llegar hasta la línea de comandos pertenece a una de
estas clases. La CLI traduce la clase a un código de salida:

- UsageError      -> 1 (flags desconocidos, combinaciones inválidas)
- DataError       -> 2 (documentos mal formados, validación, esquemas)
- NumericalError  -> 3 (pérdidas o evaluaciones no finitas)
"""


class ConfnetError(Exception):
    """Clase base de todos los errores de la biblioteca."""


class UsageError(ConfnetError):
    """Uso incorrecto de la línea de comandos o de la configuración."""


class DataError(ConfnetError):
    """Un dato de entrada no cumple el formato o los invariantes esperados."""


class ShapeError(DataError):
    """Dimensiones incompatibles entre matrices, vectores o secuencias."""


class NumericalError(ConfnetError):
    """Se produjo un valor no finito (NaN o infinito) durante un cálculo."""
