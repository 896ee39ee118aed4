"""
Módulo de Entrenamiento

Contiene los regímenes de entrenamiento y el bucle de SGD por mini-lotes:

- NON_AUG: solo las redes ruidosas.
- AUG: las redes ruidosas más una copia del corpus con las transcripciones
  limpias como redes de un arco por posición.
- JOINT: cada red ruidosa va acompañada de su transcripción; la pérdida es
  L1 + λ·L2.
- ASR_N_BASELINE: las N mejores hipótesis de cada red (y la transcripción),
  cada una como un ejemplo independiente.

Todo el azar (tabla de embeddings, inicialización, orden de los ejemplos y
dropout) sale de flujos derivados de una única semilla, así que dos corridas
con la misma configuración producen los mismos parámetros bit a bit.
"""

# Se importa 'enum' para los regímenes, que la CLI recibe por su nombre corto.
import enum
import math

# Se importa 'time' para medir la duración total de la corrida.
import time

# Se importa 'replace' para actualizar los parámetros inmutables en cada paso
# de SGD sin modificar el estado anterior.
from dataclasses import asdict, dataclass, field, replace

import numpy as np

# Se importa la configuración para los hiperparámetros por defecto.
from . import config
from .confnet import from_transcript, lift_path, n_best_paths
from .datagen import augment, check_labels, corpus_vocabulary
from .embeddings import build_table, load_table
# El codificador y el modelo exponen ambos `init_params`; se renombran al importar.
from .encoder import EncoderVariant, PositionEncoding, encode_backward, encode_network
from .encoder import init_params as init_encoder
from .errors import DataError, NumericalError
# La evaluación en dev usa el mismo preprocesamiento de redes que la CLI `eval`.
from .evalbench import EvalMode, evaluate, prepare_network
from .logger import logger
from .model import Checkpoint, gold_vector, model_backward
from .model import init_params as init_model
from .numerics import Rng, check_finite

# Flujos del generador aleatorio, uno por uso.
FLUJO_TABLA = 1
FLUJO_INIT = 2
FLUJO_ORDEN = 4
FLUJO_DROPOUT = 5

# Nombres de los parámetros entrenables del modelo y del codificador.
PARAMS_MODELO = ("wf", "bf", "sv", "sb")
PARAMS_CODIFICADOR = ("w1", "w2")


class Regime(enum.Enum):
    NON_AUG = "nonaug"
    AUG = "aug"
    JOINT = "joint"
    ASR_N_BASELINE = "asr-n"

    @classmethod
    def parse(cls, text):
        try:
            return cls(str(text).lower())
        except ValueError as error:
            opciones = ", ".join(r.value for r in cls)
            raise DataError(f"régimen desconocido: {text!r} (opciones: {opciones})") from error


@dataclass(frozen=True)
class TrainConfig:
    """Hiperparámetros de una corrida; los valores por defecto salen de `config`."""

    regime: Regime = Regime.NON_AUG
    variant: EncoderVariant = EncoderVariant.V1
    max_arcs: int = config.MAX_ARCOS
    asr_list_size: int = config.TAMANO_LISTA_ASR
    learning_rate: float = config.TASA_APRENDIZAJE
    batch_size: int = config.TAMANO_LOTE
    dropout: float = config.DROPOUT
    lam: float = config.LAMBDA_SIMILITUD
    epochs: int = config.EPOCAS
    seed: int = config.SEMILLA
    emb_dim: int = config.DIM_EMBEDDING
    hidden_dim: int = config.DIM_OCULTA
    l1_branch: str = config.RAMA_L1
    prune_threshold: float = config.UMBRAL_PODA
    renormalize: bool = config.RENORMALIZAR
    decision_threshold: float = config.UMBRAL_DECISION
    embeddings_path: str = None

    def __post_init__(self):
        if not isinstance(self.regime, Regime):
            object.__setattr__(self, "regime", Regime.parse(self.regime))
        if not isinstance(self.variant, EncoderVariant):
            object.__setattr__(self, "variant", EncoderVariant.parse(self.variant))
        if self.learning_rate <= 0:
            raise ValueError(f"la tasa de aprendizaje debe ser positiva: {self.learning_rate}")
        if self.batch_size < 1 or self.max_arcs < 1 or self.asr_list_size < 1:
            raise ValueError("el tamaño de lote, max_arcs y el tamaño de la lista ASR deben ser positivos")
        if self.epochs < 0:
            raise ValueError(f"el número de épocas no puede ser negativo: {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout debe estar en [0, 1): {self.dropout}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda debe estar en [0, 1]: {self.lam}")
        if self.l1_branch not in ("confnet", "both"):
            raise ValueError(f"rama de L1 desconocida: {self.l1_branch}")

    @property
    def eval_mode(self):
        """El modo con el que se evalúa el dev: listas ASR-N para el baseline."""
        if self.regime is Regime.ASR_N_BASELINE:
            return EvalMode.parse(f"asr-{self.asr_list_size}")
        return EvalMode.parse("confnet")

    def settings(self):
        """Lo que el checkpoint necesita saber para preprocesar igual al evaluar."""
        return {
            "regime": self.regime.value,
            "max_arcs": self.max_arcs,
            "prune_threshold": self.prune_threshold,
            "renormalize": self.renormalize,
            "asr_list_size": self.asr_list_size,
            "decision_threshold": self.decision_threshold,
            "seed": self.seed,
        }

    def to_dict(self):
        doc = asdict(self)
        doc["regime"] = self.regime.value
        doc["variant"] = self.variant.value
        return doc


@dataclass(frozen=True)
class Example:
    """Un ejemplo de entrenamiento: la red ya preprocesada, sus etiquetas y,
    en el régimen conjunto, la transcripción como red."""

    net: object
    gold: np.ndarray
    transcript: object = None


@dataclass(frozen=True)
class TrainingState:
    encoder: object
    model: object


@dataclass
class TrainReport:
    config: dict
    n_examples: int
    epoch_losses: list
    dev_reports: list
    best_epoch: int
    seconds: float
    fingerprint_before: str
    fingerprint_after: str
    checkpoint: Checkpoint = field(repr=False, default=None)
    checkpoint_path: str = None

    @property
    def best_dev(self):
        return self.dev_reports[self.best_epoch]

    def to_dict(self):
        return {
            "config": self.config,
            "n_examples": self.n_examples,
            "epoch_losses": self.epoch_losses,
            "dev": [report.to_dict() for report in self.dev_reports],
            "best_epoch": self.best_epoch,
            "best_dev": self.best_dev.to_dict(),
            "embedding_fingerprint": {"before": self.fingerprint_before, "after": self.fingerprint_after},
            "checkpoint_path": self.checkpoint_path,
            "timing": {"seconds": self.seconds},
        }


# --- Construcción de ejemplos ---

def _preparar(net, train_config):
    return prepare_network(net, train_config.settings())


def build_examples(corpus, ontology, train_config):
    """
    Convierte un corpus en la lista de ejemplos del régimen elegido.

    El orden es determinista: diálogo por diálogo, turno por turno (y para
    AUG, primero el corpus original y luego las copias limpias).
    """
    regimen = train_config.regime
    dialogos = augment(corpus) if regimen is Regime.AUG else corpus
    ejemplos = []
    for dialogo in dialogos:
        for turno in dialogo.turns:
            # 1. Etiquetas del turno y sus dos redes ya preprocesadas: la ruidosa
            #    y la de la transcripción limpia.
            gold = gold_vector(ontology, turno.turn_inform, turno.turn_request)
            red = _preparar(turno.confnet, train_config)
            limpia = _preparar(from_transcript(turno.transcript, turno.confnet.utterance_id), train_config)

            # 2. Cada régimen arma sus ejemplos a partir de ellas.
            if regimen is Regime.JOINT:
                ejemplos.append(Example(red, gold, limpia))
            elif regimen is Regime.ASR_N_BASELINE:
                # Cada hipótesis es un ejemplo independiente, y la transcripción otro más.
                for camino in n_best_paths(red, train_config.asr_list_size):
                    ejemplos.append(Example(lift_path(camino, turno.confnet.utterance_id), gold))
                ejemplos.append(Example(limpia, gold))
            else:
                ejemplos.append(Example(red, gold))
    return ejemplos


# --- Paso de entrenamiento ---

def _aplicar_dropout(encs, rng, rate):
    """Aplica dropout invertido a las codificaciones; devuelve también la máscara."""
    # Sin dropout no se consume el generador.
    if rate <= 0.0:
        return encs, None
    apiladas = np.stack([enc.embedding for enc in encs])
    mascara = rng.keep_mask(apiladas.shape, 1.0 - rate) / (1.0 - rate)
    resultado = [PositionEncoding(fila, enc.attention) for fila, enc in zip(apiladas * mascara, encs)]
    return resultado, mascara


def example_gradients(state, table, example, train_config, rng=None):
    """
    Pérdida y gradientes de un ejemplo.

    Returns:
        tuple: (LossBreakdown, ModelGrads, EncoderGrads).
    """
    # 1. Codificar la red ruidosa y aplicarle dropout.
    encs, mascara = _aplicar_dropout(encode_network(state.encoder, table, example.net), rng, train_config.dropout)

    # 2. En el régimen conjunto, codificar también la transcripción limpia.
    encs_transcripcion = None
    if example.transcript is not None:
        # La transcripción se codifica con V1: no pasa por los parámetros del codificador.
        params_limpios = replace(state.encoder, variant=EncoderVariant.V1)
        encs_transcripcion, _ = _aplicar_dropout(encode_network(params_limpios, table, example.transcript),
                                                 rng, train_config.dropout)

    # 3. Gradientes del modelo y, a través de la máscara, del codificador.
    perdida, grads_modelo, upstream = model_backward(state.model, encs, example.gold, encs_transcripcion,
                                                     train_config.l1_branch)
    if mascara is not None:
        upstream = list(np.stack(upstream) * mascara)
    grads_codificador = encode_backward(state.encoder, table, example.net, upstream)
    return perdida, grads_modelo, grads_codificador


def train_step(state, table, batch, train_config, rng=None):
    """
    Un paso de SGD sobre un mini-lote: el gradiente es la suma de los
    gradientes de los ejemplos.

    Returns:
        tuple: (nuevo TrainingState, lista de LossBreakdown por ejemplo).

    Raises:
        NumericalError: Si alguna pérdida o gradiente no es finito.
    """
    modelo = state.model
    codificador = state.encoder
    sumas = {nombre: np.zeros_like(getattr(modelo, nombre)) for nombre in PARAMS_MODELO}
    sumas.update({nombre: np.zeros_like(getattr(codificador, nombre)) for nombre in PARAMS_CODIFICADOR})
    perdidas = []

    # 1. Acumular los gradientes de todos los ejemplos del lote.
    for ejemplo in batch:
        perdida, grads_modelo, grads_codificador = example_gradients(state, table, ejemplo, train_config, rng)
        if not math.isfinite(perdida.total):
            raise NumericalError(f"pérdida no finita ({perdida.total}) en '{ejemplo.net.utterance_id}'")
        perdidas.append(perdida)
        for nombre in PARAMS_MODELO:
            sumas[nombre] += getattr(grads_modelo, nombre)
        for nombre in PARAMS_CODIFICADOR:
            sumas[nombre] += getattr(grads_codificador, nombre)

    # 2. Verificar y aplicar la actualización. Los parámetros anteriores no se tocan.
    lr = train_config.learning_rate
    for nombre, grad in sumas.items():
        check_finite(grad, f"gradiente de {nombre}")
    nuevo_modelo = replace(modelo, **{n: getattr(modelo, n) - lr * sumas[n] for n in PARAMS_MODELO})
    nuevo_codificador = replace(codificador, **{n: getattr(codificador, n) - lr * sumas[n] for n in PARAMS_CODIFICADOR})
    return TrainingState(nuevo_codificador, nuevo_modelo), perdidas


# --- Bucle de entrenamiento ---

def init_state(train_config, ontology, rng):
    codificador = init_encoder(train_config.variant, train_config.emb_dim, rng)
    modelo = init_model(ontology, train_config.emb_dim, train_config.hidden_dim, rng, train_config.lam)
    return TrainingState(codificador, modelo)


def _construir_tabla(train_config, vocab, rng):
    if train_config.embeddings_path:
        return load_table(train_config.embeddings_path, vocab, rng, train_config.emb_dim)
    return build_table(vocab, train_config.emb_dim, rng)


def _armar_checkpoint(state, table, ontology, train_config):
    return Checkpoint(ontology, table, state.encoder, state.model, train_config.settings())


def train(train_config, train_corpus, dev_corpus, ontology):
    """
    Entrena un modelo y elige el checkpoint con mejor joint-goal en dev.

    Se evalúa en dev el modelo recién inicializado (época 0) y después de
    cada época. El mejor checkpoint se elige entre las épocas 1..E (la época
    0 solo si E = 0); los empates se quedan con la época más temprana.

    Con `embeddings_path`, el ancho de los vectores del archivo manda sobre
    `emb_dim`: el codificador y el modelo se dimensionan con él.

    Raises:
        DataError: Corpus vacíos o etiquetas fuera de la ontología.
        NumericalError: Pérdida no finita; nombra la época y el lote.
    """
    if not train_corpus or not dev_corpus:
        raise DataError("los corpus de entrenamiento y de dev no pueden estar vacíos")
    check_labels(train_corpus, ontology)
    check_labels(dev_corpus, ontology)

    # 1. Tabla de embeddings y estado inicial, cada uno desde su propio flujo.
    inicio = time.perf_counter()
    rng = Rng(train_config.seed)
    tabla = _construir_tabla(train_config, corpus_vocabulary(train_corpus, ontology), rng.derive(FLUJO_TABLA))
    if tabla.dim != train_config.emb_dim:
        logger.warning(f"Los embeddings de '{train_config.embeddings_path}' tienen dimensión {tabla.dim}; "
                       f"se usa en lugar de {train_config.emb_dim}.")
        train_config = replace(train_config, emb_dim=tabla.dim)
    huella_antes = tabla.fingerprint()
    state = init_state(train_config, ontology, rng.derive(FLUJO_INIT))
    rng_orden = rng.derive(FLUJO_ORDEN)
    rng_dropout = rng.derive(FLUJO_DROPOUT)

    ejemplos = build_examples(train_corpus, ontology, train_config)
    modo = train_config.eval_mode
    logger.info(f"Entrenando {train_config.regime.value}/{train_config.variant.value}: "
                f"{len(ejemplos)} ejemplos, {train_config.epochs} épocas.")

    def evaluar_dev(actual):
        return evaluate(_armar_checkpoint(actual, tabla, ontology, train_config), dev_corpus, modo,
                        train_config.decision_threshold)

    # 2. La época 0 es el modelo recién inicializado.
    reportes_dev = [evaluar_dev(state)]
    perdidas_epoca = []
    mejor_epoca = 0
    mejor_estado = state

    # 3. Cada época recorre los ejemplos en un orden nuevo, lote por lote.
    for epoca in range(1, train_config.epochs + 1):
        orden = rng_orden.permutation(len(ejemplos))
        total = 0.0
        for b, desde in enumerate(range(0, len(ejemplos), train_config.batch_size)):
            lote = [ejemplos[i] for i in orden[desde:desde + train_config.batch_size]]
            try:
                state, perdidas = train_step(state, tabla, lote, train_config, rng_dropout)
            except NumericalError as error:
                logger.critical(f"Entrenamiento detenido en la época {epoca}, lote {b}: {error}")
                raise NumericalError(f"época {epoca}, lote {b}: {error}") from error
            total += sum(perdida.total for perdida in perdidas)
        perdidas_epoca.append(total / len(ejemplos))

        # 4. Evaluar en dev y quedarse con la mejor época (la primera gana los empates).
        reporte = evaluar_dev(state)
        reportes_dev.append(reporte)
        logger.info(f"Época {epoca}: pérdida {perdidas_epoca[-1]:.4f}, joint-goal dev {reporte.joint_goal:.4f}.")
        if epoca == 1 or reporte.joint_goal > reportes_dev[mejor_epoca].joint_goal:
            mejor_epoca = epoca
            mejor_estado = state

    # 5. La tabla congelada debe salir intacta.
    huella_despues = tabla.fingerprint()
    if huella_despues != huella_antes:
        raise NumericalError("la tabla de embeddings cambió durante el entrenamiento")

    return TrainReport(
        config=train_config.to_dict(),
        n_examples=len(ejemplos),
        epoch_losses=perdidas_epoca,
        dev_reports=reportes_dev,
        best_epoch=mejor_epoca,
        seconds=time.perf_counter() - inicio,
        fingerprint_before=huella_antes,
        fingerprint_after=huella_despues,
        checkpoint=_armar_checkpoint(mejor_estado, tabla, ontology, train_config),
    )
