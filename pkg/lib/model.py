"""
Módulo del Modelo de Seguimiento de Estado

Clasificador de pares (slot, valor) que consume la secuencia de embeddings
producida por el codificador de confusion networks:

1. `f`: codificador de contexto compartido. Proyecta cada posición con
   tanh(wf·e_t + bf) y promedia sobre las posiciones.
2. Un puntaje binario por par: p = sigmoid(c·sv + bias).

Como en la ontología de DSTC-2 que usa GLAD, los pedidos del usuario se
modelan como el slot reservado "request", cuyos valores son los slots
solicitables. Así todo el modelo trabaja solo con pares (slot, valor).

Pérdidas:
- L1: entropía cruzada binaria promediada sobre los pares.
- L2: distancia euclidiana al cuadrado entre los contextos de la transcripción
  limpia y de la red ruidosa.
- L = L1 + λ·L2.
"""

from dataclasses import dataclass, replace

import numpy as np

# Se importa la configuración para lambda, la rama de L1 y la escala inicial de `f`.
from . import config
from .confnet import EPS, Arc, ArcSet, ConfusionNetwork, from_transcript, lift_path
from .embeddings import EmbeddingTable, Vocabulary
# El baseline ASR-N y la verificación de gradientes codifican redes por su cuenta.
from .encoder import EncoderParams, EncoderVariant, encode_backward, encode_network
from .errors import DataError, ShapeError
from .numerics import Rng, grad_check, matvec, pack, sigmoid, tanh, tanh_grad, unpack

# Slot reservado cuyos valores son los slots que el usuario puede pedir.
REQUEST_SLOT = "request"

# Cota de las probabilidades antes de tomar logaritmos.
CLAMP = 1e-12


@dataclass(frozen=True)
class Ontology:
    """Slots informables con sus valores, más los slots solicitables."""

    slots: tuple
    values: dict
    requestable: tuple = ()

    def __post_init__(self):
        slots = tuple(self.slots)
        values = {slot: tuple(self.values.get(slot, ())) for slot in slots}
        requestable = tuple(self.requestable)
        if len(set(slots)) != len(slots) or len(set(requestable)) != len(requestable):
            raise DataError("la ontología contiene nombres repetidos")
        if REQUEST_SLOT in slots:
            raise DataError(f"'{REQUEST_SLOT}' es un nombre de slot reservado")
        for slot in slots:
            if not values[slot] or len(set(values[slot])) != len(values[slot]):
                raise DataError(f"el slot '{slot}' necesita valores únicos (al menos uno)")
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "requestable", requestable)

    @classmethod
    def default(cls):
        return cls(tuple(config.ONTOLOGIA), config.ONTOLOGIA, tuple(config.SLOTS_SOLICITABLES))

    @property
    def pairs(self):
        """Todos los pares puntuados: primero los informables, luego los pedidos."""
        informable = [(slot, value) for slot in self.slots for value in self.values[slot]]
        return tuple(informable + [(REQUEST_SLOT, slot) for slot in self.requestable])

    def to_dict(self):
        return {
            "slots": list(self.slots),
            "values": {slot: list(self.values[slot]) for slot in self.slots},
            "requestable": list(self.requestable),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(tuple(doc["slots"]), doc["values"], tuple(doc.get("requestable", ())))
        except (KeyError, TypeError) as error:
            raise DataError(f"ontología mal formada ({error})") from error


@dataclass(frozen=True)
class ModelParams:
    """
    Parámetros del modelo: `wf` (h x d) y `bf` (h) del codificador `f`, y una
    fila de `sv` (K x h) y un sesgo de `sb` (K) por par de la ontología.
    """

    ontology: Ontology
    wf: np.ndarray
    bf: np.ndarray
    sv: np.ndarray
    sb: np.ndarray
    lam: float = config.LAMBDA_SIMILITUD

    def __post_init__(self):
        hidden, dim = self.wf.shape
        n_pairs = len(self.ontology.pairs)
        if self.bf.shape != (hidden,):
            raise ShapeError(f"bf debe tener {hidden} entradas")
        if self.sv.shape != (n_pairs, hidden) or self.sb.shape != (n_pairs,):
            raise ShapeError(f"se esperaban {n_pairs} puntuadores de dimensión {hidden}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda debe estar en [0, 1]: {self.lam}")

    @property
    def dim(self):
        return self.wf.shape[1]

    @property
    def hidden(self):
        return self.wf.shape[0]


@dataclass(frozen=True)
class ModelGrads:
    wf: np.ndarray
    bf: np.ndarray
    sv: np.ndarray
    sb: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    l2: float
    total: float


@dataclass(frozen=True)
class Prediction:
    """Probabilidad de cada par (slot, valor) de la ontología."""

    probs: dict

    @classmethod
    def from_vector(cls, ontology, vector):
        return cls({pair: float(p) for pair, p in zip(ontology.pairs, vector)})


@dataclass(frozen=True)
class Checkpoint:
    """Todo lo necesario para evaluar un modelo entrenado."""

    ontology: Ontology
    table: EmbeddingTable
    encoder: EncoderParams
    model: ModelParams
    settings: dict


def init_params(ontology, dim, hidden, rng, lam=config.LAMBDA_SIMILITUD,
                init_scale=config.ESCALA_INIT_F):
    """
    `wf` uniforme en [-init_scale, init_scale]; `bf`, `sv` y `sb` en cero, de
    modo que el modelo recién creado predice 0.5 para todos los pares.
    """
    n_pairs = len(ontology.pairs)
    return ModelParams(
        ontology,
        wf=rng.uniform(-init_scale, init_scale, (hidden, dim)),
        bf=np.zeros(hidden),
        sv=np.zeros((n_pairs, hidden)),
        sb=np.zeros(n_pairs),
        lam=lam,
    )


def gold_vector(ontology, turn_inform, turn_request):
    """Etiquetas 0/1 en el orden de `ontology.pairs`."""
    activas = set(turn_inform) | {(REQUEST_SLOT, slot) for slot in turn_request}
    desconocidas = activas - set(ontology.pairs)
    if desconocidas:
        raise DataError(f"etiquetas fuera de la ontología: {sorted(desconocidas)}")
    return np.array([1.0 if par in activas else 0.0 for par in ontology.pairs])


# --- Paso hacia adelante ---

def _apilar(encs):
    if not encs:
        raise DataError("el codificador de contexto necesita al menos una posición")
    return np.stack([enc.embedding for enc in encs])


def _contexto_adelante(params, emb):
    proyectado = tanh(emb @ params.wf.T + params.bf)
    return proyectado.mean(axis=0), proyectado


def context(params, encs):
    """c = (1/T) Σ_t tanh(wf·e_t + bf)."""
    c, _ = _contexto_adelante(params, _apilar(encs))
    return c


def _puntajes(params, c):
    """Probabilidad de cada par dado el contexto: sigmoid(sv·c + sb)."""
    return sigmoid(matvec(params.sv, c) + params.sb)


def predict_vector(params, encs):
    """Probabilidades como vector, en el orden de `ontology.pairs`."""
    return _puntajes(params, context(params, encs))


def predict(params, encs):
    return Prediction.from_vector(params.ontology, predict_vector(params, encs))


def _bce(probs, gold):
    """Entropía cruzada media y su gradiente respecto de los logits."""
    recortadas = np.clip(probs, CLAMP, 1.0 - CLAMP)
    terminos = -(gold * np.log(recortadas) + (1.0 - gold) * np.log(1.0 - recortadas))
    # Donde la probabilidad quedó recortada, la pérdida no depende del logit.
    dentro = (probs > CLAMP) & (probs < 1.0 - CLAMP)
    grad_logits = np.where(dentro, probs - gold, 0.0) / len(probs)
    return float(terminos.mean()), grad_logits


def bce_loss(pred, gold):
    """
    Entropía cruzada binaria promediada sobre los pares.

    Args:
        pred (Prediction): Probabilidades predichas.
        gold (dict): (slot, valor) -> 0 o 1, para todos los pares de la predicción.

    Raises:
        DataError: Si falta la etiqueta de algún par.
    """
    faltantes = [pair for pair in pred.probs if pair not in gold]
    if faltantes:
        raise DataError(f"faltan etiquetas para {faltantes}")
    pairs = list(pred.probs)
    loss, _ = _bce(np.array([pred.probs[p] for p in pairs]), np.array([gold[p] for p in pairs], dtype=float))
    return loss


def similarity_loss(c_transcript, c_confnet):
    """Distancia euclidiana al cuadrado entre los dos vectores de contexto."""
    a = np.asarray(c_transcript, dtype=np.float64)
    b = np.asarray(c_confnet, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"similarity_loss: {a.shape} frente a {b.shape}")
    diff = a - b
    return float(diff @ diff)


def combined_loss(l1, l2, lam):
    return l1 + lam * l2


def forward_loss(params, encs, gold, transcript_encs=None, l1_branch=config.RAMA_L1):
    """Pérdida combinada sin gradientes (referencia para pruebas y reportes)."""
    c_cn = context(params, encs)
    l1, _ = _bce(_puntajes(params, c_cn), gold)
    l2 = 0.0
    if transcript_encs is not None:
        c_t = context(params, transcript_encs)
        l2 = similarity_loss(c_t, c_cn)
        if l1_branch == "both":
            l1 += _bce(_puntajes(params, c_t), gold)[0]
    return LossBreakdown(l1, l2, combined_loss(l1, l2, params.lam))


# --- Paso hacia atrás ---

def _contexto_atras(params, emb, proyectado, grad_c, grads):
    """Acumula dL/dwf y dL/dbf; devuelve dL/de_t por posición."""
    grad_z = (grad_c / len(emb))[None, :] * tanh_grad(proyectado)
    grads.wf[...] += grad_z.T @ emb
    grads.bf[...] += grad_z.sum(axis=0)
    return grad_z @ params.wf


def model_backward(params, encs, gold, transcript_encs=None, l1_branch=config.RAMA_L1):
    """
    Gradientes analíticos de la pérdida combinada.

    Args:
        params (ModelParams): Parámetros del modelo.
        encs (list[PositionEncoding]): Rama de la red (ruidosa).
        gold (np.ndarray): Etiquetas 0/1 en el orden de la ontología.
        transcript_encs (list[PositionEncoding] | None): Rama de la transcripción
            limpia; si se da, se agrega λ·L2.
        l1_branch (str): "confnet" o "both" (L1 también sobre la transcripción).

    Returns:
        tuple: (LossBreakdown, ModelGrads, lista de dL/de_t de la rama de la red).
    """
    if l1_branch not in ("confnet", "both"):
        raise ValueError(f"rama de L1 desconocida: {l1_branch}")
    gold = np.asarray(gold, dtype=np.float64)
    if gold.shape != params.sb.shape:
        raise ShapeError(f"{gold.shape[0]} etiquetas para {params.sb.shape[0]} pares")
    grads = ModelGrads(np.zeros_like(params.wf), np.zeros_like(params.bf),
                       np.zeros_like(params.sv), np.zeros_like(params.sb))

    emb_cn = _apilar(encs)
    c_cn, proj_cn = _contexto_adelante(params, emb_cn)
    l1, grad_logits = _bce(_puntajes(params, c_cn), gold)
    grads.sv[...] += np.outer(grad_logits, c_cn)
    grads.sb[...] += grad_logits
    grad_c_cn = params.sv.T @ grad_logits

    l2 = 0.0
    if transcript_encs is not None:
        emb_t = _apilar(transcript_encs)
        c_t, proj_t = _contexto_adelante(params, emb_t)
        diff = c_t - c_cn
        l2 = float(diff @ diff)
        grad_c_cn = grad_c_cn - params.lam * 2.0 * diff
        grad_c_t = params.lam * 2.0 * diff
        if l1_branch == "both":
            l1_t, grad_logits_t = _bce(_puntajes(params, c_t), gold)
            l1 += l1_t
            grads.sv[...] += np.outer(grad_logits_t, c_t)
            grads.sb[...] += grad_logits_t
            grad_c_t = grad_c_t + params.sv.T @ grad_logits_t
        # La rama limpia usa V1 (sin parámetros de codificador): solo llega a `f`.
        _contexto_atras(params, emb_t, proj_t, grad_c_t, grads)

    upstream = _contexto_atras(params, emb_cn, proj_cn, grad_c_cn, grads)
    return LossBreakdown(l1, l2, combined_loss(l1, l2, params.lam)), grads, list(upstream)


# --- Baseline ASR-N ---

def predict_asr_nlist(params, enc_params, table, hyps):
    """
    Predicción del baseline: suma de las predicciones de cada hipótesis,
    ponderada por su puntaje normalizado.

    Cada hipótesis se codifica como una red de un arco por posición, con la
    misma variante del codificador.

    Raises:
        DataError: Lista vacía o puntajes que suman cero.
    """
    if not hyps:
        raise DataError("la lista de hipótesis está vacía")
    puntajes = np.array([hyp.score for hyp in hyps], dtype=np.float64)
    total = puntajes.sum()
    if total <= 0.0:
        raise DataError("los puntajes de las hipótesis suman cero")
    probs = np.zeros(len(params.ontology.pairs))
    for peso, hyp in zip(puntajes / total, hyps):
        encs = encode_network(enc_params, table, lift_path(hyp))
        probs += peso * predict_vector(params, encs)
    return Prediction.from_vector(params.ontology, probs)


# --- Verificación de gradientes de todo el modelo ---

def _red_aleatoria(rng, tokens, max_positions, max_arcs):
    posiciones = []
    for _ in range(rng.integers(1, max_positions + 1)):
        elegidos = rng.choice(tokens, rng.integers(1, max_arcs + 1))
        crudos = rng.uniform(0.05, 1.0, len(elegidos))
        puntajes = crudos / crudos.sum()
        posiciones.append(ArcSet(tuple(Arc(tok, float(s)) for tok, s in zip(elegidos, puntajes))))
    return ConfusionNetwork("gradcheck", tuple(posiciones))


def check_pipeline_gradients(variant, seed, dim=8, hidden=8, instances=20,
                             lam=config.LAMBDA_SIMILITUD, step=1e-5, max_positions=4, max_arcs=4):
    """
    Compara los gradientes analíticos de codificador + `f` + puntuadores +
    pérdida combinada contra diferencias finitas, en instancias aleatorias.

    Returns:
        list[float]: El máximo error relativo de cada instancia.
    """
    rng = Rng(seed, stream=7)
    ontology = Ontology(("food",), {"food": ("thai", "indian")}, ("phone",))
    palabras = [f"w{i}" for i in range(6)]
    vocab = Vocabulary.build(palabras)
    n_pairs = len(ontology.pairs)
    errores = []

    for _ in range(instances):
        table = EmbeddingTable(vocab, rng.generator.normal(size=(len(vocab), dim)))
        net = _red_aleatoria(rng, [*palabras, EPS], max_positions, max_arcs)
        transcripcion = from_transcript(rng.choice(palabras, rng.integers(1, max_positions + 1), replace=True))
        gold = rng.generator.integers(0, 2, n_pairs).astype(np.float64)
        arreglos = [
            rng.uniform(-1, 1, (dim, dim)), rng.uniform(-1, 1, dim),
            rng.uniform(-1, 1, (hidden, dim)), rng.uniform(-1, 1, hidden),
            rng.uniform(-1, 1, (n_pairs, hidden)), rng.uniform(-1, 1, n_pairs),
        ]
        formas = [a.shape for a in arreglos]

        def armar(vector):
            w1, w2, wf, bf, sv, sb = unpack(vector, formas)
            enc = EncoderParams(variant, w1, w2)
            return enc, ModelParams(ontology, wf, bf, sv, sb, lam)

        def encs_transcripcion(enc):
            return encode_network(replace(enc, variant=EncoderVariant.V1), table, transcripcion)

        def perdida(vector):
            enc, params = armar(vector)
            return forward_loss(params, encode_network(enc, table, net), gold,
                                encs_transcripcion(enc)).total

        x = pack(arreglos)
        enc, params = armar(x)
        _, grads, upstream = model_backward(params, encode_network(enc, table, net), gold,
                                            encs_transcripcion(enc))
        enc_grads = encode_backward(enc, table, net, upstream)
        analitico = pack([enc_grads.w1, enc_grads.w2, grads.wf, grads.bf, grads.sv, grads.sb])
        errores.append(grad_check(perdida, x, analitico, step))
    return errores
