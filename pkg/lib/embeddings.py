"""
Módulo de Embeddings (Vocabulario y Tabla Congelada)

La tabla de embeddings asigna a cada token un vector de dimensión `dim`. Se
construye una sola vez (aleatoria con semilla, o leída de un archivo de
vectores preentrenados) y nunca se modifica: el entrenamiento no la actualiza.
El arreglo interno se marca como de solo lectura para que cualquier intento
de escritura falle en lugar de pasar desapercibido.
"""

# Se importa 'hashlib' para calcular la huella SHA-256 de la tabla, que se
# compara antes y después de entrenar.
import hashlib

# Se importa 'field' para declarar el índice interno del vocabulario, que no
# forma parte de la igualdad ni del constructor.
from dataclasses import dataclass, field

import numpy as np

from . import config
from .confnet import EPS
from .errors import DataError, ShapeError
from .logger import logger

# Se importa 'as_mat' para validar la forma y la finitud de cualquier tabla
# que llegue al constructor.
from .numerics import Rng, as_mat

# Token que reemplaza a cualquier palabra fuera del vocabulario.
UNK = "<unk>"

# Rango de los valores de una tabla aleatoria.
RANGO_INICIAL = 0.1


@dataclass(frozen=True)
class Vocabulary:
    """Lista ordenada de tokens únicos. El índice de cada token es estable."""

    tokens: tuple
    _indice: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if len(set(tokens)) != len(tokens):
            raise DataError("el vocabulario contiene tokens repetidos")
        for reservado in (UNK, EPS):
            if reservado not in tokens:
                raise DataError(f"falta el token reservado {reservado}")
        # La clase es inmutable, así que los campos derivados se fijan con
        # `object.__setattr__`.
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "_indice", {token: i for i, token in enumerate(tokens)})

    @classmethod
    def build(cls, tokens):
        """Crea un vocabulario con los reservados primero y el resto ordenado."""
        resto = sorted(set(tokens) - {UNK, EPS})
        return cls((UNK, EPS, *resto))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._indice

    def index(self, token):
        """Índice del token, o el de `<unk>` si no pertenece al vocabulario."""
        return self._indice.get(token, self._indice[UNK])


class EmbeddingTable:
    """
    Tabla |vocab| x dim de solo lectura.

    La fila de `<eps>` es siempre cero: un arco nulo no aporta contenido léxico.
    """

    def __init__(self, vocab, table):
        # 1. Se copia la tabla (nunca se comparte con quien la construyó) y se
        #    valida su forma contra el vocabulario.
        tabla = np.array(as_mat(table, "tabla de embeddings"), dtype=np.float64)
        if tabla.shape[0] != len(vocab):
            raise ShapeError(f"la tabla tiene {tabla.shape[0]} filas para {len(vocab)} tokens")
        if tabla.shape[1] < 2:
            raise ShapeError(f"la dimensión del embedding debe ser al menos 2: {tabla.shape[1]}")

        # 2. Se anula la fila de <eps> y se congela el arreglo.
        tabla[vocab.index(EPS)] = 0.0
        tabla.setflags(write=False)
        self.vocab = vocab
        self.table = tabla
        self.dim = tabla.shape[1]

    def lookup(self, token):
        """Fila del token (o de `<unk>` si es desconocido). Operación total."""
        return self.table[self.vocab.index(token)]

    def lookup_many(self, tokens):
        """Matriz len(tokens) x dim con una fila por token."""
        return self.table[[self.vocab.index(token) for token in tokens]]

    def fingerprint(self):
        """Hash SHA-256 del vocabulario y la tabla; permite verificar que no cambió."""
        resumen = hashlib.sha256()
        resumen.update("\n".join(self.vocab.tokens).encode("utf-8"))
        resumen.update(self.table.tobytes())
        return resumen.hexdigest()


def build_table(vocab, dim=config.DIM_EMBEDDING, rng=None):
    """
    Construye una tabla aleatoria: filas i.i.d. uniformes en [-0.1, 0.1],
    salvo `<eps>` que es cero. Es determinista para una misma semilla.

    Raises:
        ValueError: Si `dim < 2`.
    """
    if dim < 2:
        raise ValueError(f"la dimensión del embedding debe ser al menos 2: {dim}")
    rng = rng or Rng(config.SEMILLA)
    return EmbeddingTable(vocab, rng.uniform(-RANGO_INICIAL, RANGO_INICIAL, (len(vocab), dim)))


def load_table(path, vocab, rng=None, dim=config.DIM_EMBEDDING):
    """
    Carga vectores preentrenados en formato texto "token v1 v2 ... vd".

    Los tokens del vocabulario que no aparecen en el archivo reciben una fila
    aleatoria (la misma que daría `build_table` con ese generador). Un archivo
    vacío se comporta exactamente como `build_table`. Si el archivo tiene
    vectores, su ancho manda sobre `dim`.

    Raises:
        DataError: Si el archivo no se puede leer o las dimensiones no coinciden.
                   Los errores nombran la línea física del archivo.
    """
    # 1. Leer el archivo completo, numerando las líneas antes de descartar las vacías.
    try:
        with open(path, encoding="utf-8") as handle:
            lineas = [(numero, linea.split()) for numero, linea in enumerate(handle, start=1) if linea.strip()]
    except OSError as error:
        logger.error(f"No se pudo leer el archivo de embeddings '{path}': {error}")
        raise DataError(f"no se pudo leer '{path}': {error}") from error

    # 2. Convertir cada línea en un vector. El primer vector fija la dimensión
    #    y todos los demás deben tener la misma.
    vectores = {}
    for numero, partes in lineas:
        token, valores = partes[0], partes[1:]
        if vectores and len(valores) != dim:
            raise DataError(f"línea {numero}: dimensión {len(valores)}, se esperaba {dim}")
        try:
            vectores[token] = [float(valor) for valor in valores]
        except ValueError as error:
            raise DataError(f"línea {numero}: valor no numérico ({error})") from error
        dim = len(valores)

    # 3. Partir de la tabla aleatoria y sobrescribir las filas que trae el archivo.
    #    Los tokens del archivo que no están en el vocabulario se ignoran.
    base = build_table(vocab, dim, rng)
    tabla = np.array(base.table)
    encontrados = 0
    for token, vector in vectores.items():
        if token in vocab:
            tabla[vocab.index(token)] = vector
            encontrados += 1
    logger.info(f"Embeddings: {encontrados} de {len(vocab)} tokens leídos de '{path}'.")
    return EmbeddingTable(vocab, tabla)
