"""
Módulo del Codificador de Confusion Networks

Transforma cada posición de una red (un conjunto de arcos paralelos) en un
único vector, de modo que la red completa se vuelve una secuencia de
embeddings de una dimensión que cualquier rastreador de estado puede consumir.

Variantes (π_i es la confianza ASR del arco i, E_i su embedding):
- V1: e = Σ π_i E_i
- V2: e = Σ π_i tanh(W1 E_i)
- V3: q_i = tanh(W1 E_i); α = softmax(w2·q_i); e = Σ α_i q_i   (no lee π)
- V4: q_i = tanh(W1 (π_i E_i)); α = softmax(w2·q_i); e = Σ α_i q_i

El paso hacia atrás está escrito a mano y se valida con `numerics.grad_check`.
La tabla de embeddings no recibe gradiente: está congelada.
"""

# Se importa 'enum' para las cuatro variantes, que se guardan por su valor
# ("v1".."v4") en los checkpoints.
import enum

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

# Se importan las operaciones numéricas compartidas con el modelo: la
# activación, el producto matriz-vector y el softmax con su derivada.
from .numerics import Rng, matvec, softmax, softmax_backward, tanh, tanh_grad


class EncoderVariant(enum.Enum):
    V1 = "v1"
    V2 = "v2"
    V3 = "v3"
    V4 = "v4"

    @classmethod
    def parse(cls, text):
        """Acepta "v1".."v4" (o "V1".."V4")."""
        try:
            return cls(str(text).lower())
        except ValueError as error:
            raise DataError(f"variante desconocida: {text!r}") from error

    @property
    def has_attention(self):
        return self in (EncoderVariant.V3, EncoderVariant.V4)


@dataclass(frozen=True)
class EncoderParams:
    """
    Parámetros entrenables del codificador. Todas las variantes guardan `w1`
    (d x d) y `w2` (d); V1 no lee ninguno y V2 no lee `w2`.
    """

    variant: EncoderVariant
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        d = self.w2.shape[0]
        if self.w1.shape != (d, d):
            raise ShapeError(f"w1 debe ser {d}x{d}, es {self.w1.shape}")

    @property
    def dim(self):
        return self.w2.shape[0]


@dataclass(frozen=True)
class EncoderGrads:
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class PositionEncoding:
    """El vector de una posición y, para V3/V4, los pesos de atención por arco."""

    embedding: np.ndarray
    attention: np.ndarray = None


def init_params(variant, dim, rng):
    """Inicialización uniforme en [-1/√d, 1/√d] para `w1` y `w2`."""
    cota = 1.0 / np.sqrt(dim)
    w1 = rng.uniform(-cota, cota, (dim, dim))
    w2 = rng.uniform(-cota, cota, dim)
    return EncoderParams(variant, w1, w2)


def _adelante(params, table, position):
    """
    Paso hacia adelante de una posición, vectorizado sobre sus arcos.

    Devuelve la codificación y la caché que necesita el paso hacia atrás:
    `(entradas, q, pi, alfa)`, o None para V1.
    """
    if len(position) == 0:
        raise DataError("no se puede codificar un conjunto de arcos vacío")
    if table.dim != params.dim:
        raise ShapeError(f"la tabla tiene dimensión {table.dim} y el codificador {params.dim}")

    # 1. Una fila de embedding por arco y el vector de confianzas.
    emb = table.lookup_many(position.tokens)
    pi = np.asarray(position.scores, dtype=np.float64)
    variante = params.variant

    # 2. V1 es solo la suma ponderada de los embeddings.
    if variante is EncoderVariant.V1:
        return PositionEncoding(pi @ emb), None

    # 3. Proyección no lineal de cada arco. V4 escala el embedding por su
    #    confianza antes de proyectarlo.
    entradas = pi[:, None] * emb if variante is EncoderVariant.V4 else emb
    q = tanh(entradas @ params.w1.T)

    if variante is EncoderVariant.V2:
        return PositionEncoding(pi @ q), (entradas, q, pi, None)

    # 4. V3/V4: la atención reemplaza a las confianzas como pesos de la suma.
    alfa = softmax(matvec(q, params.w2))
    return PositionEncoding(alfa @ q, alfa), (entradas, q, pi, alfa)


def encode_position(params, table, position):
    """
    Codifica un conjunto de arcos con la variante de `params`.

    Raises:
        DataError: Si la posición está vacía.
        ShapeError: Si la dimensión de la tabla no coincide con la de los parámetros.
    """
    codificacion, _ = _adelante(params, table, position)
    return codificacion


def encode_network(params, table, net):
    """Una codificación por posición; la longitud de la salida es la de la red."""
    return [encode_position(params, table, position) for position in net.positions]


def encode_backward(params, table, net, upstream):
    """
    Gradientes de Σ_t upstream_t · e_t respecto de `w1` y `w2`.

    Args:
        params (EncoderParams): Parámetros con los que se codificó la red.
        table (EmbeddingTable): La tabla congelada.
        net (ConfusionNetwork): La red codificada.
        upstream (list[np.ndarray]): dL/de_t, uno por posición.

    Returns:
        EncoderGrads: Gradientes con la forma de `w1` y `w2` (cero para V1).
    """
    if len(upstream) != len(net):
        raise ShapeError(f"{len(upstream)} gradientes para {len(net)} posiciones")
    grad_w1 = np.zeros_like(params.w1)
    grad_w2 = np.zeros_like(params.w2)
    # V1 no tiene parámetros que lea.
    if params.variant is EncoderVariant.V1:
        return EncoderGrads(grad_w1, grad_w2)

    for position, g in zip(net.positions, upstream):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (params.dim,):
            raise ShapeError(f"gradiente de forma {g.shape}, se esperaba ({params.dim},)")
        # Se recalcula la caché de la posición en lugar de guardarla del paso hacia adelante.
        _, (entradas, q, pi, alfa) = _adelante(params, table, position)

        if params.variant is EncoderVariant.V2:
            grad_q = pi[:, None] * g
        else:
            # e = Σ α_i q_i: camino directo por q y camino a través de α.
            grad_alfa = matvec(q, g)
            grad_logits = softmax_backward(alfa, grad_alfa)
            grad_w2 += grad_logits @ q
            grad_q = alfa[:, None] * g + grad_logits[:, None] * params.w2

        # Se atraviesa la tanh y se acumula el gradiente de W1 de todos los arcos.
        grad_z = grad_q * tanh_grad(q)
        grad_w1 += grad_z.T @ entradas

    return EncoderGrads(grad_w1, grad_w2)


def random_params(variant, dim, seed):
    """Parámetros con semilla; atajo para la CLI `encode` y las pruebas."""
    return init_params(variant, dim, Rng(seed, stream=1))
