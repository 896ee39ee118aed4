"""
Módulo de Evaluación y Benchmarks

- Métricas por turno: joint-goal, turn-inform y turn-request.
- Agregación de varias corridas (media y error estándar).
- Medición del tiempo de inferencia: confnet frente a listas ASR-N.
- Exportación de los pesos de atención de una red a CSV.
"""

import csv
import enum
import io
import re
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

from . import config
from .confnet import ensure_nonempty, n_best_paths, preprocess
from .datagen import check_labels
from .encoder import encode_network
from .errors import DataError
from .logger import logger
from .model import REQUEST_SLOT, predict, predict_asr_nlist

METRICAS = ("joint_goal", "turn_inform", "turn_request")


class ModeKind(enum.Enum):
    CONFNET = "confnet"
    ASR = "asr"


@dataclass(frozen=True)
class EvalMode:
    """
    Cómo se alimenta el modelo al evaluar.

    - confnet: la red preprocesada; `n` opcional fuerza el máximo de arcos.
    - asr: las `n` mejores hipótesis de la red, combinadas con sus puntajes.
    """

    kind: ModeKind
    n: int = None

    @classmethod
    def parse(cls, text):
        """Acepta "confnet", "confnet-9", "asr-5" y también "asr_n(5)"."""
        text = str(text).strip().lower()
        match = re.fullmatch(r"(confnet|asr)(?:[-_]n?\(?(\d+)\)?)?", text)
        if not match:
            raise DataError(f"modo de evaluación desconocido: {text!r}")
        kind = ModeKind(match.group(1))
        n = int(match.group(2)) if match.group(2) else None
        if kind is ModeKind.ASR and n is None:
            n = config.TAMANO_LISTA_ASR
        if n is not None and n < 1:
            raise DataError(f"el modo {text!r} necesita un N positivo")
        return cls(kind, n)

    @property
    def label(self):
        return self.kind.value if self.n is None else f"{self.kind.value}-{self.n}"


@dataclass(frozen=True)
class EvalReport:
    joint_goal: float
    turn_inform: float
    turn_request: float
    n_turns: int
    timing: dict = None

    def to_dict(self):
        doc = asdict(self)
        if self.timing is None:
            del doc["timing"]
        return doc

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(float(doc["joint_goal"]), float(doc["turn_inform"]),
                       float(doc["turn_request"]), int(doc["n_turns"]), doc.get("timing"))
        except (KeyError, TypeError, ValueError) as error:
            raise DataError(f"reporte de evaluación mal formado ({error})") from error


@dataclass(frozen=True)
class SeedAggregate:
    """Media μ y error estándar σ (desvío muestral / √corridas) de cada métrica."""

    runs: int
    mean: dict
    stderr: dict

    def to_dict(self):
        return {
            "runs": self.runs,
            "metrics": {m: {"mean": self.mean[m], "stderr": self.stderr[m]} for m in METRICAS},
        }


# --- Predicción ---

def prepare_network(net, settings, max_arcs=None):
    """Preprocesa una red con la misma configuración usada al entrenar."""
    cleaned = preprocess(
        net,
        threshold=settings.get("prune_threshold", config.UMBRAL_PODA),
        max_arcs=max_arcs or settings.get("max_arcs", config.MAX_ARCOS),
        renormalize_scores=settings.get("renormalize", config.RENORMALIZAR),
    )
    return ensure_nonempty(cleaned)


def make_predictor(checkpoint, mode):
    """Función turno -> Prediction para un checkpoint y un modo."""
    mode = mode if isinstance(mode, EvalMode) else EvalMode.parse(mode)
    settings = checkpoint.settings

    if mode.kind is ModeKind.CONFNET:
        def predictor(turn):
            net = prepare_network(turn.confnet, settings, mode.n)
            return predict(checkpoint.model, encode_network(checkpoint.encoder, checkpoint.table, net))
    else:
        def predictor(turn):
            hyps = n_best_paths(prepare_network(turn.confnet, settings), mode.n)
            return predict_asr_nlist(checkpoint.model, checkpoint.encoder, checkpoint.table, hyps)
    return predictor


# --- Métricas ---

def decode_prediction(prediction, ontology, threshold=config.UMBRAL_DECISION):
    """
    Convierte probabilidades en decisiones.

    Returns:
        tuple: (conjunto de pares informados, conjunto de slots pedidos,
                actualización del objetivo {slot: valor}). Para el objetivo, se
                toma por slot el valor de mayor probabilidad entre los que
                superan el umbral; los empates se resuelven por el orden de la
                ontología.
    """
    informs = set()
    requests = set()
    for (slot, value), prob in prediction.probs.items():
        if prob > threshold:
            if slot == REQUEST_SLOT:
                requests.add(value)
            else:
                informs.add((slot, value))

    update = {}
    for slot in ontology.slots:
        best = None
        for value in ontology.values[slot]:
            prob = prediction.probs.get((slot, value), 0.0)
            if prob > threshold and (best is None or prob > best[0]):
                best = (prob, value)
        if best is not None:
            update[slot] = best[1]
    return informs, requests, update


def _score_dialogue(dialogue, ontology, predictor, threshold):
    goal = {}
    hits = [0, 0, 0]
    for turn in dialogue.turns:
        informs, requests, update = decode_prediction(predictor(turn), ontology, threshold)
        goal.update(update)
        hits[0] += goal == turn.gold_goal
        hits[1] += informs == set(turn.turn_inform)
        hits[2] += requests == set(turn.turn_request)
    return len(dialogue.turns), hits


def evaluate_predictions(corpus, ontology, predictor, threshold=config.UMBRAL_DECISION, threads=config.HILOS):
    """
    Calcula las tres métricas recorriendo cada diálogo por separado: el
    objetivo predicho se acumula turno a turno (último valor por slot).

    Args:
        predictor (callable): Turn -> Prediction.
        threads (int): Diálogos evaluados en paralelo; el resultado no depende de este valor.
    """
    def score(dialogue):
        return _score_dialogue(dialogue, ontology, predictor, threshold)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score, corpus))
    else:
        results = [score(dialogue) for dialogue in corpus]

    n_turns = sum(n for n, _ in results)
    if n_turns == 0:
        raise DataError("el corpus de evaluación no tiene turnos")
    totals = [sum(hits[i] for _, hits in results) for i in range(3)]
    return EvalReport(totals[0] / n_turns, totals[1] / n_turns, totals[2] / n_turns, n_turns)


def evaluate(checkpoint, corpus, mode="confnet", decision_threshold=config.UMBRAL_DECISION,
             threads=config.HILOS):
    """
    Evalúa un checkpoint sobre un corpus.

    Raises:
        DataError: Si el corpus tiene etiquetas fuera de la ontología del checkpoint.
    """
    check_labels(corpus, checkpoint.ontology)
    mode = mode if isinstance(mode, EvalMode) else EvalMode.parse(mode)
    report = evaluate_predictions(corpus, checkpoint.ontology, make_predictor(checkpoint, mode),
                                  decision_threshold, threads)
    logger.debug(f"Evaluación ({mode.label}): joint-goal {report.joint_goal:.4f} en {report.n_turns} turnos.")
    return report


def aggregate_seeds(reports):
    """
    Media y error estándar de cada métrica sobre varias corridas.

    Raises:
        DataError: Con menos de dos reportes.
    """
    if len(reports) < 2:
        raise DataError("se necesitan al menos dos reportes para agregar")
    mean = {}
    stderr = {}
    for metric in METRICAS:
        values = [getattr(report, metric) for report in reports]
        mean[metric] = statistics.mean(values)
        stderr[metric] = statistics.stdev(values) / len(values) ** 0.5
    return SeedAggregate(len(reports), mean, stderr)


# --- Tiempo de inferencia ---

def _timed_batch(checkpoint, batch, mode):
    """Prepara las entradas fuera del cronómetro y devuelve la función a medir."""
    settings = checkpoint.settings
    if mode.kind is ModeKind.CONFNET:
        nets = [prepare_network(turn.confnet, settings, mode.n) for turn in batch]
        return lambda: [predict(checkpoint.model, encode_network(checkpoint.encoder, checkpoint.table, net))
                        for net in nets]
    hyp_lists = [n_best_paths(prepare_network(turn.confnet, settings), mode.n) for turn in batch]
    return lambda: [predict_asr_nlist(checkpoint.model, checkpoint.encoder, checkpoint.table, hyps)
                    for hyps in hyp_lists]


def bench_inference(checkpoint, corpus, modes, batch_size=config.LOTE_BENCH,
                    repetitions=config.REPETICIONES_BENCH):
    """
    Mediana de los segundos por lote de cada modo, tras una pasada de
    calentamiento. Todos los modos reciben los mismos turnos.

    Returns:
        dict: etiqueta del modo -> segundos por lote.

    Raises:
        ValueError: Si `repetitions < 3`.
    """
    if repetitions < 3:
        raise ValueError(f"se necesitan al menos 3 repeticiones: {repetitions}")
    turns = [turn for dialogue in corpus for turn in dialogue.turns]
    if not turns:
        raise DataError("el corpus no tiene turnos")
    batch = [turns[i % len(turns)] for i in range(batch_size)]

    timing = {}
    for mode in modes:
        mode = mode if isinstance(mode, EvalMode) else EvalMode.parse(mode)
        run = _timed_batch(checkpoint, batch, mode)
        run()
        samples = []
        for _ in range(repetitions):
            start = time.perf_counter()
            run()
            samples.append(time.perf_counter() - start)
        timing[mode.label] = statistics.median(samples)
        logger.info(f"Benchmark {mode.label}: {timing[mode.label]:.4f} s por lote de {batch_size}.")
    return timing


# --- Atención ---

def attention_columns(checkpoint, net):
    """
    Pesos de atención por posición: una lista (token, peso) por columna, con
    los arcos en orden de confianza ASR descendente.

    Raises:
        DataError: Si la variante del checkpoint no tiene atención (V1, V2).
    """
    if not checkpoint.encoder.variant.has_attention:
        raise DataError("variant has no attention weights")
    encodings = encode_network(checkpoint.encoder, checkpoint.table, net)
    return [
        list(zip(position.tokens, (float(w) for w in enc.attention)))
        for position, enc in zip(net.positions, encodings)
    ]


def dump_attention(checkpoint, net):
    """
    CSV con una columna por posición y una fila por arco (la fila 1 es el
    mejor camino). Cada celda es "token:peso"; las columnas más cortas se
    completan con celdas vacías.
    """
    columns = attention_columns(checkpoint, net)
    height = max((len(column) for column in columns), default=0)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([str(t) for t in range(len(columns))])
    for row in range(height):
        writer.writerow([
            f"{column[row][0]}:{column[row][1]!r}" if row < len(column) else ""
            for column in columns
        ])
    return buffer.getvalue()
