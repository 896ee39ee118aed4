"""
Módulo de Confusion Networks (Modelo de Datos y Operaciones de Grafo)

Una confusion network ("confnet") es una secuencia de posiciones; cada
posición es un conjunto de arcos paralelos (token, confianza ASR). Cualquier
elección de un arco por posición es una hipótesis (un camino) y su puntaje es
el producto de las confianzas elegidas, porque las posiciones son
independientes entre sí.

Todas las funciones de este módulo son puras: reciben valores inmutables y
devuelven valores nuevos, por lo que se pueden compartir entre hilos.

Funciones clave:
- parse_confnet: Lee y valida un documento JSON.
- prune / remove_interjections / truncate_arcs: El preprocesamiento de las redes.
- from_transcript: Convierte una transcripción en una red de un arco por posición.
- n_best_paths / best_path: Extracción exacta de los N mejores caminos.
"""

# Se importa 'heapq' para la búsqueda "best-first" de los N mejores caminos:
# el heap siempre entrega primero el candidato de mayor puntaje.
import heapq
import json

# Se importa 'math' por `fsum` (sumas de confianzas sin error de redondeo
# acumulado) y `prod` (puntaje de un camino).
import math
from dataclasses import dataclass, replace

from . import config
from .errors import DataError
from .logger import logger

# Token reservado para el arco nulo ("aquí no hay palabra").
EPS = "<eps>"

# Tolerancia de la comprobación "la suma de confianzas no supera 1".
TOLERANCIA_SUMA = 1e-6


@dataclass(frozen=True)
class Arc:
    """Una hipótesis (token, confianza) en una posición de la red."""

    token: str
    score: float

    def __post_init__(self):
        if not isinstance(self.token, str) or not self.token:
            raise DataError(f"token inválido: {self.token!r}")
        # `bool` es subclase de `int`; un `true` en el JSON no es una confianza.
        if isinstance(self.score, bool) or not isinstance(self.score, (int, float)):
            raise DataError(f"score no numérico: {self.score!r}")
        if not (math.isfinite(self.score) and 0.0 < self.score <= 1.0):
            raise DataError(f"score out of range: {self.score!r} no está en (0, 1]")
        object.__setattr__(self, "score", float(self.score))


def _orden_arco(arc):
    # Mayor confianza primero; a igual confianza, orden alfabético del token.
    return (-arc.score, arc.token)


@dataclass(frozen=True)
class ArcSet:
    """
    Conjunto de arcos paralelos de una posición.

    Al construirse, los arcos se reordenan por confianza descendente (empates
    por token ascendente), de modo que el primer arco es siempre el mejor.
    """

    arcs: tuple

    def __post_init__(self):
        arcs = tuple(sorted(self.arcs, key=_orden_arco))
        if not arcs:
            raise DataError("conjunto de arcos vacío")
        for arc in arcs:
            if not isinstance(arc, Arc):
                raise DataError(f"se esperaba un Arc, se recibió {type(arc).__name__}")
        total = math.fsum(arc.score for arc in arcs)
        if total > 1.0 + TOLERANCIA_SUMA:
            raise DataError(f"la suma de confianzas {total:.9f} supera 1")
        object.__setattr__(self, "arcs", arcs)

    def __len__(self):
        return len(self.arcs)

    def __iter__(self):
        return iter(self.arcs)

    @property
    def tokens(self):
        return [arc.token for arc in self.arcs]

    @property
    def scores(self):
        return [arc.score for arc in self.arcs]

    @property
    def top(self):
        return self.arcs[0]


@dataclass(frozen=True)
class ConfusionNetwork:
    """Secuencia de posiciones (ArcSet) de un enunciado."""

    utterance_id: str
    positions: tuple

    def __post_init__(self):
        posiciones = tuple(self.positions)
        for indice, posicion in enumerate(posiciones):
            if not isinstance(posicion, ArcSet):
                raise DataError(f"posición {indice}: se esperaba un ArcSet")
        object.__setattr__(self, "positions", posiciones)

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True)
class Path:
    """Una hipótesis extraída de la red. Los arcos `<eps>` no aparecen en `tokens`."""

    tokens: tuple
    score: float


# --- Lectura y escritura ---

def confnet_from_dict(doc):
    """
    Construye y valida una red a partir de su representación JSON ya decodificada.

    Raises:
        DataError: Si falta algún campo o un arco no cumple los invariantes.
                   El mensaje nombra el índice de la posición problemática.
    """
    if not isinstance(doc, dict):
        raise DataError("el documento de la red debe ser un objeto JSON")
    utterance_id = doc.get("utterance_id")
    posiciones_crudas = doc.get("positions")
    if not isinstance(utterance_id, str):
        raise DataError("falta el campo 'utterance_id' (texto)")
    if not isinstance(posiciones_crudas, list):
        raise DataError("falta el campo 'positions' (lista)")

    posiciones = []
    for indice, arcos_crudos in enumerate(posiciones_crudas):
        if not isinstance(arcos_crudos, list) or not arcos_crudos:
            raise DataError(f"posición {indice}: conjunto de arcos vacío o inválido")
        try:
            arcs = [Arc(crudo["token"], crudo["score"]) for crudo in arcos_crudos]
            posiciones.append(ArcSet(tuple(arcs)))
        except (KeyError, TypeError) as error:
            raise DataError(f"posición {indice}: arco mal formado ({error})") from error
        except DataError as error:
            raise DataError(f"posición {indice}: {error}") from error
    return ConfusionNetwork(utterance_id, tuple(posiciones))


def parse_confnet(text):
    """
    Lee un documento JSON de una red:
    `{"utterance_id": str, "positions": [[{"token": str, "score": float}, ...], ...]}`.

    Returns:
        ConfusionNetwork: La red validada, con los arcos de cada posición ordenados.

    Raises:
        DataError: Documento mal formado o que viola algún invariante.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as error:
        raise DataError(f"documento mal formado: {error}") from error
    return confnet_from_dict(doc)


def confnet_to_dict(net):
    """Representación JSON de una red (inversa de `confnet_from_dict`)."""
    return {
        "utterance_id": net.utterance_id,
        "positions": [
            [{"token": arc.token, "score": arc.score} for arc in posicion]
            for posicion in net.positions
        ],
    }


def path_to_dict(path):
    return {"tokens": list(path.tokens), "score": path.score}


# --- Preprocesamiento ---

def prune(net, threshold=config.UMBRAL_PODA):
    """
    Elimina los arcos con confianza menor que `threshold`.

    El mejor arco de cada posición se conserva siempre, aunque esté por debajo
    del umbral, para que ninguna posición quede vacía y la longitud de la red
    no cambie. Las confianzas no se renormalizan.

    Args:
        net (ConfusionNetwork): La red a podar.
        threshold (float): Umbral en [0, 1).
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"el umbral de poda debe estar en [0, 1): {threshold}")
    posiciones = []
    for posicion in net.positions:
        conservados = [arc for arc in posicion if arc.score >= threshold]
        # Regla de supervivencia: si nada supera el umbral, queda el mejor arco.
        posiciones.append(ArcSet(tuple(conservados or [posicion.top])))
    return replace(net, positions=tuple(posiciones))


def remove_interjections(net, stoplist=config.INTERJECCIONES):
    """
    Quita los arcos cuyo token es una interjección ("um", "ah", ...).

    Si todos los arcos de una posición son interjecciones, se elimina la
    posición completa. Los arcos restantes conservan su confianza y su orden.
    """
    if not stoplist:
        raise ValueError("la lista de interjecciones no puede estar vacía")
    posiciones = []
    for posicion in net.positions:
        conservados = [arc for arc in posicion if arc.token not in stoplist]
        if conservados:
            posiciones.append(ArcSet(tuple(conservados)))
    return replace(net, positions=tuple(posiciones))


def truncate_arcs(net, max_arcs=config.MAX_ARCOS):
    """Conserva solo los `max_arcs` arcos de mayor confianza de cada posición."""
    if max_arcs < 1:
        raise ValueError(f"max_arcs debe ser al menos 1: {max_arcs}")
    posiciones = [ArcSet(posicion.arcs[:max_arcs]) for posicion in net.positions]
    return replace(net, positions=tuple(posiciones))


def renormalize(net):
    """Reescala las confianzas de cada posición para que sumen 1."""
    posiciones = []
    for posicion in net.positions:
        total = math.fsum(posicion.scores)
        posiciones.append(ArcSet(tuple(Arc(arc.token, arc.score / total) for arc in posicion)))
    return replace(net, positions=tuple(posiciones))


def preprocess(net, threshold=config.UMBRAL_PODA, stoplist=config.INTERJECCIONES,
               max_arcs=config.MAX_ARCOS, renormalize_scores=config.RENORMALIZAR):
    """
    Aplica el preprocesamiento completo en orden: interjecciones, poda,
    truncado y (opcionalmente) renormalización.
    """
    limpia = remove_interjections(net, stoplist)
    if len(limpia) == 0 and len(net) > 0:
        logger.debug(f"'{net.utterance_id}' quedó vacía tras quitar interjecciones.")
    limpia = truncate_arcs(prune(limpia, threshold), max_arcs)
    if renormalize_scores:
        limpia = renormalize(limpia)
    return limpia


def from_transcript(tokens, utterance_id="transcript"):
    """
    Codifica una transcripción como una red con un único arco (confianza 1.0)
    por posición.

    Raises:
        DataError: Si la lista de tokens está vacía o contiene tokens vacíos.
    """
    tokens = list(tokens)
    if not tokens:
        raise DataError("no se puede crear una red a partir de una transcripción vacía")
    posiciones = tuple(ArcSet((Arc(token, 1.0),)) for token in tokens)
    return ConfusionNetwork(utterance_id, posiciones)


def ensure_nonempty(net):
    """
    Devuelve la red tal cual o, si no tiene posiciones, una red con una única
    posición `<eps>`. El codificador de contexto necesita al menos una posición.
    """
    if len(net) > 0:
        return net
    logger.warning(f"'{net.utterance_id}' no tiene posiciones; se codifica como <eps>.")
    return ConfusionNetwork(net.utterance_id, (ArcSet((Arc(EPS, 1.0),)),))


def lift_path(path, utterance_id="hypothesis"):
    """Red de un arco por posición para una hipótesis N-best."""
    if not path.tokens:
        return ensure_nonempty(ConfusionNetwork(utterance_id, ()))
    return from_transcript(path.tokens, utterance_id)


# --- Caminos ---

def count_paths(net):
    """Número total de caminos: el producto de los anchos de las posiciones."""
    return math.prod(len(posicion) for posicion in net.positions)


def _puntaje_camino(net, indices):
    return math.prod(net.positions[t].arcs[i].score for t, i in enumerate(indices))


def _armar_camino(net, indices, score):
    tokens = tuple(
        net.positions[t].arcs[i].token
        for t, i in enumerate(indices)
        if net.positions[t].arcs[i].token != EPS
    )
    return Path(tokens, score)


def n_best_paths(net, n):
    """
    Extrae los `n` caminos de mayor puntaje, en orden descendente.

    Como las posiciones son independientes y cada una tiene sus arcos
    ordenados, el mejor camino elige el arco 0 en todas partes. A partir de
    ahí se hace una búsqueda "best-first" sobre el producto cartesiano: cada
    candidato sacado del heap genera sus sucesores incrementando el índice de
    una sola posición. El conjunto `vistos` evita repetir candidatos.

    El heap ordena por (-puntaje, índices), así que los empates se resuelven
    lexicográficamente por la secuencia de índices elegidos.

    Args:
        net (ConfusionNetwork): La red.
        n (int): Cantidad de caminos pedidos (>= 1).

    Returns:
        list[Path]: `min(n, count_paths(net))` caminos.
    """
    if n < 1:
        raise ValueError(f"n debe ser al menos 1: {n}")
    anchos = [len(posicion) for posicion in net.positions]
    inicio = (0,) * len(anchos)
    heap = [(-_puntaje_camino(net, inicio), inicio)]
    vistos = {inicio}
    caminos = []

    while heap and len(caminos) < n:
        puntaje_neg, indices = heapq.heappop(heap)
        caminos.append(_armar_camino(net, indices, -puntaje_neg))
        for t, ancho in enumerate(anchos):
            if indices[t] + 1 < ancho:
                sucesor = indices[:t] + (indices[t] + 1,) + indices[t + 1:]
                if sucesor not in vistos:
                    vistos.add(sucesor)
                    heapq.heappush(heap, (-_puntaje_camino(net, sucesor), sucesor))
    return caminos


def best_path(net):
    """El camino de mayor puntaje (la primera fila de un mapa de atención)."""
    return n_best_paths(net, 1)[0]


def network_stats(net):
    """Resumen de una red para el comando `stats`."""
    anchos = [len(posicion) for posicion in net.positions]
    return {
        "utterance_id": net.utterance_id,
        "positions": len(anchos),
        "arcs": sum(anchos),
        "max_width": max(anchos, default=0),
        "mean_width": (sum(anchos) / len(anchos)) if anchos else 0.0,
        "paths": count_paths(net),
        "best_score": best_path(net).score,
    }
