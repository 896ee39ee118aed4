"""
Módulo de Datos de Diálogo (Esquema, Generador Sintético y Aumentación)

Define los diálogos y turnos con sus etiquetas (turn-inform, turn-request y
el objetivo acumulado), y un generador con semilla que produce tríos
(transcripción, confnet, etiquetas) con un modelo de ruido ASR controlable.

El contenido de las frases es irrelevante para el método: lo que importa es
la estructura de confusión. Por eso las plantillas son una gramática pequeña
y fija ("i need <valor> <slot>", "what about <valor>", pedidos, ...).

Funciones clave:
- generate_corpus: Genera diálogos con transcripción, red ruidosa y etiquetas.
- noisy_confnet: Construye la red ruidosa de una transcripción.
- augment: Duplica un corpus con copias cuya red es la transcripción limpia.
"""

# Se importa 'dataclass' para los registros inmutables del corpus y 'replace'
# para crear las copias limpias de cada turno sin tocar el original.
from dataclasses import dataclass, replace

# Se importa la configuración para las probabilidades de ruido por defecto,
# la semilla y la lista de interjecciones.
from . import config

# Se importan los tipos de confusion network y su esquema JSON.
from .confnet import EPS, Arc, ArcSet, ConfusionNetwork, confnet_from_dict, confnet_to_dict, from_transcript
from .embeddings import Vocabulary
from .errors import DataError
from .logger import logger

# Los pedidos se etiquetan como pares del slot reservado de la ontología.
from .model import REQUEST_SLOT

# Se importa el generador con semilla: todo el azar del corpus sale de él.
from .numerics import Rng

# Sustantivo con el que las plantillas nombran a cada slot.
SUSTANTIVOS = {"food": "food", "area": "area", "pricerange": "price", "day": "day"}

PLANTILLAS_INFORM = (
    ("i", "need", "{value}", "{noun}"),
    ("what", "about", "{value}"),
    ("i", "want", "a", "{value}", "{noun}", "restaurant"),
    ("how", "about", "{value}", "{noun}"),
)

PLANTILLAS_REQUEST = (
    ("what", "is", "the", "{slot}"),
    ("can", "i", "have", "the", "{slot}", "please"),
    ("i", "need", "the", "{slot}"),
)

CONECTOR = "and"

# Probabilidad de que un turno empiece con una interjección.
PROB_INTERJECCION = 0.15

# Flujo del generador reservado para el ruido ASR.
FLUJO_RUIDO = 3


@dataclass(frozen=True)
class Turn:
    """
    Un turno de usuario. `gold_goal` es el objetivo acumulado después de este
    turno (último valor informado por slot).
    """

    transcript: tuple
    confnet: ConfusionNetwork
    turn_inform: frozenset
    turn_request: frozenset
    gold_goal: dict


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    turns: tuple

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise DataError(f"el diálogo '{self.dialogue_id}' no tiene turnos")


@dataclass(frozen=True)
class NoiseModel:
    """
    Ruido ASR sintético. Cada posición, con probabilidad `substitution_prob`,
    se reemplaza por hasta `max_confusions` alternativas con confianzas
    aleatorias que suman 1; el token verdadero queda fuera con probabilidad
    `truth_drop_prob`. Si el vocabulario tiene menos alternativas que
    `max_confusions`, se usan todas las que hay.
    """

    substitution_prob: float = config.PROB_SUSTITUCION
    max_confusions: int = config.MAX_CONFUSIONES
    truth_drop_prob: float = config.PROB_PERDER_VERDAD
    seed: int = config.SEMILLA

    def __post_init__(self):
        for nombre in ("substitution_prob", "truth_drop_prob"):
            if not 0.0 <= getattr(self, nombre) <= 1.0:
                raise ValueError(f"{nombre} debe estar en [0, 1]")
        if self.max_confusions < 1:
            raise ValueError("max_confusions debe ser al menos 1")


def template_vocabulary(ontology):
    """Todos los tokens que el generador puede producir para una ontología."""
    tokens = {CONECTOR, *config.INTERJECCIONES}
    # Las palabras fijas de las plantillas (los campos "{...}" se rellenan después).
    for plantilla in PLANTILLAS_INFORM + PLANTILLAS_REQUEST:
        tokens.update(palabra for palabra in plantilla if not palabra.startswith("{"))
    # Los sustantivos y valores de cada slot, y los slots que se pueden pedir.
    for slot in ontology.slots:
        tokens.add(SUSTANTIVOS.get(slot, slot))
        tokens.update(ontology.values[slot])
    tokens.update(ontology.requestable)
    return sorted(tokens)


def corpus_vocabulary(corpus, ontology):
    """Vocabulario con los tokens del corpus y los de las plantillas."""
    tokens = set(template_vocabulary(ontology))
    for dialogo in corpus:
        for turno in dialogo.turns:
            tokens.update(turno.transcript)
            for posicion in turno.confnet.positions:
                tokens.update(posicion.tokens)
    return Vocabulary.build(tokens)


def check_labels(corpus, ontology):
    """
    Verifica que todas las etiquetas del corpus existan en la ontología.

    Raises:
        DataError: Nombra el diálogo y el par desconocido.
    """
    conocidas = set(ontology.pairs)
    for dialogo in corpus:
        for turno in dialogo.turns:
            # Se juntan los informes, los pedidos (como pares del slot reservado)
            # y el objetivo acumulado, y se compara contra la ontología.
            etiquetas = set(turno.turn_inform) | {(REQUEST_SLOT, s) for s in turno.turn_request}
            etiquetas |= set(turno.gold_goal.items())
            desconocidas = etiquetas - conocidas
            if desconocidas:
                raise DataError(f"diálogo '{dialogo.dialogue_id}': etiquetas fuera de la ontología {sorted(desconocidas)}")


# --- Generación ---

def _rellenar(plantilla, **campos):
    return [palabra.format(**campos) if palabra.startswith("{") else palabra for palabra in plantilla]


def _sortear_contenido(ontology, rng):
    """Elige qué se informa y qué se pide en un turno, y arma la transcripción."""
    # 1. Cuántos slots se informan (0 a 2) y si se pide algo. Un turno nunca
    #    queda vacío: sin pedido, se informa al menos un slot.
    n_informes = rng.integers(0, min(2, len(ontology.slots)) + 1)
    con_pedido = bool(ontology.requestable) and rng.random() < 0.3
    if n_informes == 0 and not con_pedido:
        n_informes = 1

    # 2. Se sortean los slots (sin repetir) y un valor para cada uno.
    informes = []
    for slot in rng.choice(list(ontology.slots), n_informes):
        informes.append((slot, rng.choice(list(ontology.values[slot]), 1)[0]))
    pedidos = rng.choice(list(ontology.requestable), 1) if con_pedido else []

    # 3. Cada informe y cada pedido se convierte en un segmento con una plantilla.
    segmentos = []
    for slot, valor in informes:
        plantilla = PLANTILLAS_INFORM[rng.integers(0, len(PLANTILLAS_INFORM))]
        segmentos.append(_rellenar(plantilla, value=valor, noun=SUSTANTIVOS.get(slot, slot)))
    for slot in pedidos:
        plantilla = PLANTILLAS_REQUEST[rng.integers(0, len(PLANTILLAS_REQUEST))]
        segmentos.append(_rellenar(plantilla, slot=slot))

    # 4. Los segmentos se unen con el conector y, a veces, se antepone una interjección.
    transcripcion = []
    for segmento in segmentos:
        if transcripcion:
            transcripcion.append(CONECTOR)
        transcripcion.extend(segmento)
    if rng.random() < PROB_INTERJECCION:
        transcripcion.insert(0, rng.choice(sorted(config.INTERJECCIONES), 1)[0])
    return tuple(transcripcion), frozenset(informes), frozenset(pedidos)


def noisy_confnet(transcript, noise, vocabulary, rng, utterance_id):
    """
    Construye la red ruidosa de una transcripción.

    Las alternativas se sacan del vocabulario global (más `<eps>`), sin el
    token verdadero y sin repetir, y las confianzas son sorteos uniformes
    normalizados.
    """
    posiciones = []
    for token in transcript:
        # 1. Sin sustitución, la posición es el token verdadero con confianza 1.
        if rng.random() >= noise.substitution_prob:
            posiciones.append(ArcSet((Arc(token, 1.0),)))
            continue

        # 2. Se decide si el token verdadero sobrevive y cuántos arcos tendrá la
        #    posición. La cantidad nunca supera las alternativas disponibles.
        conserva_verdad = rng.random() >= noise.truth_drop_prob
        n_arcos = rng.integers(1, noise.max_confusions + 1)
        alternativas = [palabra for palabra in vocabulary if palabra != token]
        tokens = [token] if conserva_verdad else []
        n_arcos = min(n_arcos, len(alternativas) + len(tokens))

        # 3. Se completan los arcos con alternativas distintas y se reparten
        #    confianzas aleatorias que suman 1.
        if n_arcos > len(tokens):
            tokens += rng.choice(alternativas, n_arcos - len(tokens))
        crudos = rng.uniform(0.05, 1.0, len(tokens))
        posiciones.append(ArcSet(tuple(Arc(tok, float(s)) for tok, s in zip(tokens, crudos / crudos.sum()))))
    return ConfusionNetwork(utterance_id, tuple(posiciones))


def generate_corpus(ontology, n_dialogues, noise=None, rng=None):
    """
    Genera `n_dialogues` diálogos de 1 a 5 turnos.

    El contenido de los turnos sale de `rng`; el ruido ASR sale de un flujo
    propio derivado de `noise.seed`, así que se puede variar el ruido sin
    cambiar las transcripciones.

    Raises:
        DataError: Si la ontología no tiene slots.
        ValueError: Si `n_dialogues < 1`.
    """
    if not ontology.slots:
        raise DataError("la ontología está vacía")
    if n_dialogues < 1:
        raise ValueError("se necesita al menos un diálogo")
    noise = noise or NoiseModel()
    rng = rng or Rng(config.SEMILLA)
    rng_ruido = Rng(noise.seed, stream=FLUJO_RUIDO)
    vocabulario = [*template_vocabulary(ontology), EPS]

    corpus = []
    for d in range(n_dialogues):
        id_dialogo = f"dlg-{rng.seed}-{d:05d}"
        objetivo = {}
        turnos = []
        for t in range(rng.integers(1, 6)):
            transcripcion, informes, pedidos = _sortear_contenido(ontology, rng)
            # El objetivo acumulado guarda el último valor informado de cada slot.
            for slot, valor in sorted(informes):
                objetivo[slot] = valor
            red = noisy_confnet(transcripcion, noise, vocabulario, rng_ruido, f"{id_dialogo}-t{t}")
            turnos.append(Turn(transcripcion, red, informes, pedidos, dict(objetivo)))
        corpus.append(Dialogue(id_dialogo, tuple(turnos)))

    logger.info(f"Corpus generado: {n_dialogues} diálogos, {sum(len(d.turns) for d in corpus)} turnos.")
    return corpus


def augment(corpus):
    """
    Duplica el corpus: agrega una copia de cada diálogo en la que la red de
    cada turno es la transcripción limpia (un arco por posición). Las copias
    llevan el sufijo "-clean" en el identificador.

    Raises:
        DataError: Si el corpus está vacío.
    """
    if not corpus:
        raise DataError("no se puede aumentar un corpus vacío")
    copias = []
    for dialogo in corpus:
        turnos = tuple(
            replace(turno, confnet=from_transcript(turno.transcript, turno.confnet.utterance_id))
            for turno in dialogo.turns
        )
        copias.append(Dialogue(f"{dialogo.dialogue_id}-clean", turnos))
    return list(corpus) + copias


# --- Esquema JSON ---

def dialogue_to_dict(dialogue):
    return {
        "dialogue_id": dialogue.dialogue_id,
        "turns": [
            {
                "transcript": list(turno.transcript),
                "confnet": confnet_to_dict(turno.confnet),
                "turn_inform": [list(par) for par in sorted(turno.turn_inform)],
                "turn_request": sorted(turno.turn_request),
                "gold_goal": dict(sorted(turno.gold_goal.items())),
            }
            for turno in dialogue.turns
        ],
    }


def dialogue_from_dict(doc):
    """
    Raises:
        DataError, KeyError, TypeError: Si el documento no sigue el esquema.
    """
    turnos = []
    for crudo in doc["turns"]:
        turnos.append(Turn(
            transcript=tuple(crudo["transcript"]),
            confnet=confnet_from_dict(crudo["confnet"]),
            turn_inform=frozenset((slot, valor) for slot, valor in crudo["turn_inform"]),
            turn_request=frozenset(crudo["turn_request"]),
            gold_goal=dict(crudo["gold_goal"]),
        ))
    if not isinstance(doc["dialogue_id"], str):
        raise DataError("'dialogue_id' debe ser texto")
    return Dialogue(doc["dialogue_id"], tuple(turnos))
