"""
Suite de Tests para el Modelo de Seguimiento de Estado (`model.py`)

Cubre el codificador de contexto `f`, los puntuadores por par, las pérdidas
(BCE, similitud y combinada), el baseline ASR-N y los gradientes de todo el
modelo contra diferencias finitas.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

import lib.config
from lib.confnet import Path, from_transcript
from lib.embeddings import EmbeddingTable, Vocabulary
from lib.encoder import EncoderVariant, PositionEncoding, encode_network, random_params
from lib.errors import DataError, ShapeError
from lib.model import (
    REQUEST_SLOT,
    ModelParams,
    Ontology,
    Prediction,
    bce_loss,
    check_pipeline_gradients,
    combined_loss,
    context,
    forward_loss,
    gold_vector,
    init_params,
    model_backward,
    predict,
    predict_asr_nlist,
    predict_vector,
    similarity_loss,
)
from lib.numerics import Rng


@pytest.fixture(autouse=True)
def sin_logs(monkeypatch):
    monkeypatch.setattr(lib.config, 'LOGGING_ACTIVADO', False)


@pytest.fixture
def ontologia():
    return Ontology(("food", "area"), {"food": ("thai", "indian"), "area": ("north",)}, ("phone",))


@pytest.fixture
def params(ontologia):
    """Parámetros aleatorios (no los de inicialización, que anulan `sv`)."""
    rng = Rng(7)
    k = len(ontologia.pairs)
    return ModelParams(ontologia, rng.uniform(-1, 1, (5, 4)), rng.uniform(-1, 1, 5),
                       rng.uniform(-1, 1, (k, 5)), rng.uniform(-1, 1, k), lam=0.5)


def codificaciones(*filas):
    return [PositionEncoding(np.array(fila, dtype=float)) for fila in filas]


# --- Ontología ---

def test_pares_de_la_ontologia(ontologia):
    assert ontologia.pairs == (("food", "thai"), ("food", "indian"), ("area", "north"), (REQUEST_SLOT, "phone"))


def test_ontologia_slot_reservado():
    with pytest.raises(DataError):
        Ontology((REQUEST_SLOT,), {REQUEST_SLOT: ("x",)})


def test_ontologia_slot_sin_valores():
    with pytest.raises(DataError):
        Ontology(("food",), {"food": ()})


def test_ontologia_por_defecto():
    ontologia = Ontology.default()

    assert len(ontologia.slots) == 4
    assert all(len(ontologia.values[slot]) == 8 for slot in ontologia.slots)
    assert Ontology.from_dict(ontologia.to_dict()) == ontologia


def test_gold_vector(ontologia):
    gold = gold_vector(ontologia, {("food", "indian")}, {"phone"})

    assert gold.tolist() == [0.0, 1.0, 0.0, 1.0]


def test_gold_vector_etiqueta_desconocida(ontologia):
    with pytest.raises(DataError):
        gold_vector(ontologia, {("food", "pizza")}, set())


# --- Contexto y predicción ---

def test_contexto_una_posicion(params):
    e = np.array([0.1, -0.2, 0.3, 0.4])

    c = context(params, codificaciones(e))

    assert np.allclose(c, np.tanh(params.wf @ e + params.bf), atol=1e-15, rtol=0)


def test_contexto_posiciones_identicas(params):
    e = [0.5, 0.1, -0.3, 0.2]

    assert np.allclose(context(params, codificaciones(e, e)), context(params, codificaciones(e)), atol=1e-15, rtol=0)


def test_contexto_invariante_a_permutaciones(params):
    filas = [[0.1, 0.2, 0.3, 0.4], [-0.5, 0.0, 0.5, 1.0], [0.9, -0.9, 0.1, 0.0]]

    a = context(params, codificaciones(*filas))
    b = context(params, codificaciones(*reversed(filas)))

    assert np.allclose(a, b, atol=1e-15, rtol=0)


def test_contexto_secuencia_vacia(params):
    with pytest.raises(DataError):
        context(params, [])


def test_prediccion_parametros_cero(ontologia):
    params = init_params(ontologia, 4, 5, Rng(0))

    pred = predict(params, codificaciones([1.0, 2.0, 3.0, 4.0]))

    assert set(pred.probs) == set(ontologia.pairs)
    assert all(p == 0.5 for p in pred.probs.values())


def test_prediccion_sesgo_grande(ontologia):
    params = init_params(ontologia, 4, 5, Rng(0))
    params = replace(params, sb=np.full(len(ontologia.pairs), 100.0))

    pred = predict(params, codificaciones([1.0, 2.0, 3.0, 4.0]))

    assert all(p == pytest.approx(1.0) for p in pred.probs.values())


def test_prediccion_contra_referencia(params):
    filas = [[0.1, 0.2, 0.3, 0.4], [-0.5, 0.0, 0.5, 1.0]]

    probs = predict_vector(params, codificaciones(*filas))

    c = sum(np.tanh(params.wf @ np.array(f) + params.bf) for f in filas) / 2
    esperado = [1 / (1 + math.exp(-(params.sv[k] @ c + params.sb[k]))) for k in range(len(params.sb))]
    assert np.allclose(probs, esperado, atol=1e-12, rtol=0)


def test_parametros_forma_incorrecta(ontologia):
    with pytest.raises(ShapeError):
        ModelParams(ontologia, np.zeros((5, 4)), np.zeros(5), np.zeros((2, 5)), np.zeros(2))


def test_lambda_fuera_de_rango(params):
    with pytest.raises(ValueError):
        replace(params, lam=1.5)


# --- Pérdidas ---

def test_bce_prediccion_perfecta():
    pred = Prediction({("a", "x"): 1.0, ("a", "y"): 0.0})

    assert bce_loss(pred, {("a", "x"): 1, ("a", "y"): 0}) == pytest.approx(0.0, abs=1e-11)


def test_bce_todo_un_medio():
    pred = Prediction({("a", "x"): 0.5, ("a", "y"): 0.5})

    assert bce_loss(pred, {("a", "x"): 1, ("a", "y"): 0}) == pytest.approx(math.log(2))


def test_bce_un_par():
    pred = Prediction({("a", "x"): 0.25})

    assert bce_loss(pred, {("a", "x"): 1}) == pytest.approx(1.3863, abs=1e-4)


def test_bce_siempre_finita():
    pred = Prediction({("a", "x"): 0.0, ("a", "y"): 1.0})

    assert math.isfinite(bce_loss(pred, {("a", "x"): 1, ("a", "y"): 0}))


def test_bce_falta_etiqueta():
    pred = Prediction({("a", "x"): 0.5, ("a", "y"): 0.5})

    with pytest.raises(DataError):
        bce_loss(pred, {("a", "x"): 1})


def test_similarity_loss_ejemplos():
    c = np.array([0.3, -0.2, 0.7])

    assert similarity_loss(c, c) == 0.0
    assert similarity_loss([1.0, 0.0], [0.0, 1.0]) == 2.0
    assert similarity_loss(c, c + 0.1) == pytest.approx(3 * 0.01, abs=1e-12)


def test_similarity_loss_dimensiones():
    with pytest.raises(ShapeError):
        similarity_loss([1.0, 0.0], [1.0])


def test_combined_loss():
    assert combined_loss(0.7, 0.2, 0.0) == 0.7
    assert combined_loss(0.7, 0.2, 0.5) == pytest.approx(0.8)
    assert combined_loss(0.7, 0.0, 0.5) == 0.7


def test_similitud_cero_transcripcion_contra_red_de_un_arco(params):
    """La rama de la transcripción y la red de un arco con V1 son el mismo cálculo."""
    vocab = Vocabulary.build(["cheap", "thai", "food"])
    table = EmbeddingTable(vocab, Rng(1).generator.normal(size=(len(vocab), 4)))
    enc = random_params(EncoderVariant.V1, 4, 0)
    tokens = ["cheap", "thai", "food"]

    c_t = context(params, encode_network(enc, table, from_transcript(tokens)))
    c_cn = context(params, [PositionEncoding(table.lookup(t)) for t in tokens])

    assert similarity_loss(c_t, c_cn) == 0.0


# --- Baseline ASR-N ---

@pytest.fixture
def entorno_asr(ontologia):
    vocab = Vocabulary.build(["thai", "indian", "food"])
    table = EmbeddingTable(vocab, Rng(2).generator.normal(size=(len(vocab), 4)))
    rng = Rng(3)
    k = len(ontologia.pairs)
    params = ModelParams(ontologia, rng.uniform(-1, 1, (5, 4)), rng.uniform(-1, 1, 5),
                         rng.uniform(-1, 1, (k, 5)), rng.uniform(-1, 1, k))
    return params, random_params(EncoderVariant.V1, 4, 0), table


def test_asr_una_hipotesis_igual_a_predict(entorno_asr):
    params, enc, table = entorno_asr
    hyp = Path(("thai", "food"), 0.4)

    pred = predict_asr_nlist(params, enc, table, [hyp])

    assert pred == predict(params, encode_network(enc, table, from_transcript(hyp.tokens)))


def test_asr_hipotesis_repetidas(entorno_asr):
    params, enc, table = entorno_asr
    hyp = Path(("indian",), 0.3)

    doble = predict_asr_nlist(params, enc, table, [hyp, hyp])
    simple = predict_asr_nlist(params, enc, table, [hyp])

    assert doble.probs == pytest.approx(simple.probs, abs=1e-15)


def test_asr_promedio_ponderado(entorno_asr, mocker):
    """Probabilidades 0.2 y 0.8 con puntajes 0.75 y 0.25 dan 0.35."""
    params, enc, table = entorno_asr
    k = len(params.ontology.pairs)
    mocker.patch("lib.model.predict_vector", side_effect=[np.full(k, 0.2), np.full(k, 0.8)])

    pred = predict_asr_nlist(params, enc, table, [Path(("thai",), 0.75), Path(("food",), 0.25)])

    assert all(p == pytest.approx(0.35, abs=1e-12) for p in pred.probs.values())


def test_asr_combinacion_convexa(entorno_asr):
    params, enc, table = entorno_asr
    hyps = [Path(("thai", "food"), 0.5), Path(("indian", "food"), 0.3), Path(("food",), 0.1)]

    pred = predict_asr_nlist(params, enc, table, hyps)

    individuales = [predict(params, encode_network(enc, table, from_transcript(h.tokens))).probs for h in hyps]
    for pair, p in pred.probs.items():
        valores = [ind[pair] for ind in individuales]
        assert min(valores) - 1e-15 <= p <= max(valores) + 1e-15


def test_asr_lista_vacia(entorno_asr):
    params, enc, table = entorno_asr

    with pytest.raises(DataError):
        predict_asr_nlist(params, enc, table, [])


# --- Gradientes ---

def test_backward_lambda_cero_es_bce(params):
    """Con λ = 0 la rama de la transcripción no cambia los gradientes."""
    encs = codificaciones([0.1, 0.2, 0.3, 0.4], [0.0, -0.1, 0.5, 0.2])
    transcript = codificaciones([0.3, 0.3, 0.3, 0.3])
    gold = np.array([1.0, 0.0, 1.0, 0.0])
    sin_lambda = replace(params, lam=0.0)

    _, con_rama, up_con = model_backward(sin_lambda, encs, gold, transcript)
    _, sin_rama, up_sin = model_backward(sin_lambda, encs, gold)

    for nombre in ("wf", "bf", "sv", "sb"):
        assert np.allclose(getattr(con_rama, nombre), getattr(sin_rama, nombre), atol=1e-15, rtol=0)
    assert np.allclose(np.stack(up_con), np.stack(up_sin), atol=1e-15, rtol=0)


def test_backward_en_el_minimo_gradientes_nulos(ontologia):
    """Probabilidades recortadas en la respuesta correcta: gradiente cero."""
    gold = np.array([1.0, 0.0, 1.0, 0.0])
    params = init_params(ontologia, 4, 5, Rng(0))
    params = replace(params, sb=np.where(gold > 0, 100.0, -100.0))

    loss, grads, upstream = model_backward(params, codificaciones([0.1, 0.2, 0.3, 0.4]), gold)

    assert loss.total < 1e-10
    assert not grads.sv.any() and not grads.sb.any() and not grads.wf.any()
    assert not np.stack(upstream).any()


def test_forward_loss_coincide_con_backward(params):
    encs = codificaciones([0.1, 0.2, 0.3, 0.4], [0.0, -0.1, 0.5, 0.2])
    transcript = codificaciones([0.3, 0.3, 0.3, 0.3])
    gold = np.array([0.0, 1.0, 0.0, 1.0])

    esperado = forward_loss(params, encs, gold, transcript)
    obtenido, _, _ = model_backward(params, encs, gold, transcript)

    assert obtenido.total == pytest.approx(esperado.total, abs=1e-15)
    assert obtenido.l2 > 0


def test_rama_l1_desconocida(params):
    with pytest.raises(ValueError):
        model_backward(params, codificaciones([0.0] * 4), np.zeros(4), l1_branch="transcript")


@pytest.mark.parametrize("variant", list(EncoderVariant))
def test_gradientes_de_todo_el_modelo(variant):
    """Codificador + f + puntuadores + pérdida combinada (λ = 0.5), 20 instancias."""
    errores = check_pipeline_gradients(variant, seed=1, instances=20, lam=0.5)

    assert len(errores) == 20
    assert max(errores) < 1e-4
