"""
Suite de Tests para la Evaluación (`evalbench.py`)

Verifica las métricas con predictores conocidos, los modos de evaluación,
la agregación por semillas, el volcado de atención y el benchmark de
inferencia.
"""

import csv
import io
import itertools

import numpy as np
import pytest

import lib.config
from lib.confnet import Arc, ArcSet, ConfusionNetwork
from lib.datagen import NoiseModel, corpus_vocabulary, generate_corpus
from lib.embeddings import build_table
from lib.encoder import EncoderVariant, random_params
from lib.errors import DataError
from lib.evalbench import (
    EvalMode,
    EvalReport,
    ModeKind,
    aggregate_seeds,
    attention_columns,
    bench_inference,
    decode_prediction,
    dump_attention,
    evaluate,
    evaluate_predictions,
)
from lib.model import REQUEST_SLOT, Checkpoint, ModelParams, Ontology, Prediction
from lib.numerics import Rng


@pytest.fixture(autouse=True)
def sin_logs(monkeypatch):
    monkeypatch.setattr(lib.config, 'LOGGING_ACTIVADO', False)


@pytest.fixture
def ontologia():
    return Ontology(("food", "area"), {"food": ("thai", "indian", "french"), "area": ("north", "south")}, ("phone",))


@pytest.fixture
def corpus(ontologia):
    return generate_corpus(ontologia, 10, NoiseModel(seed=3), Rng(3))


def crear_checkpoint(ontologia, corpus, variant=EncoderVariant.V4, dim=8, hidden=8, seed=0):
    """Checkpoint con parámetros aleatorios, para que las predicciones varíen."""
    rng = Rng(seed)
    table = build_table(corpus_vocabulary(corpus, ontologia), dim, rng)
    k = len(ontologia.pairs)
    model = ModelParams(ontologia, rng.uniform(-1, 1, (hidden, dim)), rng.uniform(-1, 1, hidden),
                        rng.uniform(-1, 1, (k, hidden)), rng.uniform(-1, 1, k))
    return Checkpoint(ontologia, table, random_params(variant, dim, seed), model, {"max_arcs": 5})


def oraculo(ontologia):
    """Predictor que conoce las etiquetas verdaderas de cada turno."""
    def predictor(turn):
        verdaderos = set(turn.turn_inform) | {(REQUEST_SLOT, slot) for slot in turn.turn_request}
        return Prediction({par: 1.0 if par in verdaderos else 0.0 for par in ontologia.pairs})
    return predictor


# --- Métricas ---

def test_oraculo_perfecto(corpus, ontologia):
    reporte = evaluate_predictions(corpus, ontologia, oraculo(ontologia))

    assert reporte.joint_goal == 1.0
    assert reporte.turn_inform == 1.0
    assert reporte.turn_request == 1.0
    assert reporte.n_turns == sum(len(d.turns) for d in corpus)


def test_predictor_vacio(corpus, ontologia):
    """Sin predicciones solo aciertan los turnos que no informan ni piden nada."""
    vacio = lambda turn: Prediction({par: 0.0 for par in ontologia.pairs})  # noqa: E731
    turnos = [t for d in corpus for t in d.turns]

    reporte = evaluate_predictions(corpus, ontologia, vacio)

    assert reporte.turn_inform == sum(not t.turn_inform for t in turnos) / len(turnos)
    assert reporte.turn_request == sum(not t.turn_request for t in turnos) / len(turnos)
    assert reporte.joint_goal == sum(t.gold_goal == {} for t in turnos) / len(turnos)


def test_decode_umbral_estricto(ontologia):
    probs = {par: 0.0 for par in ontologia.pairs}
    probs[("food", "thai")] = 0.5
    probs[("area", "north")] = 0.51

    informs, requests, update = decode_prediction(Prediction(probs), ontologia, 0.5)

    assert informs == {("area", "north")}
    assert requests == set()
    assert update == {"area": "north"}


def test_decode_mejor_valor_por_slot(ontologia):
    probs = {par: 0.0 for par in ontologia.pairs}
    probs[("food", "thai")] = 0.7
    probs[("food", "french")] = 0.9
    probs[("area", "north")] = 0.8
    probs[("area", "south")] = 0.8
    probs[(REQUEST_SLOT, "phone")] = 0.6

    informs, requests, update = decode_prediction(Prediction(probs), ontologia)

    assert len(informs) == 4
    assert requests == {"phone"}
    # Empate en "area": gana el primero en el orden de la ontología.
    assert update == {"food": "french", "area": "north"}


def test_objetivo_se_acumula(ontologia):
    """El objetivo predicho conserva los slots de turnos anteriores."""
    from lib.confnet import from_transcript
    from lib.datagen import Dialogue, Turn

    t0 = Turn(("thai",), from_transcript(["thai"], "d-t0"), frozenset({("food", "thai")}), frozenset(),
              {"food": "thai"})
    t1 = Turn(("north",), from_transcript(["north"], "d-t1"), frozenset({("area", "north")}), frozenset(),
              {"food": "thai", "area": "north"})

    reporte = evaluate_predictions([Dialogue("d", (t0, t1))], ontologia, oraculo(ontologia))

    assert reporte.joint_goal == 1.0


def test_corpus_sin_turnos(ontologia):
    with pytest.raises(DataError):
        evaluate_predictions([], ontologia, oraculo(ontologia))


def test_evaluate_independiente_del_orden(corpus, ontologia):
    checkpoint = crear_checkpoint(ontologia, corpus)

    directo = evaluate(checkpoint, corpus)
    invertido = evaluate(checkpoint, list(reversed(corpus)))

    assert directo == invertido


def test_evaluate_con_hilos(corpus, ontologia):
    checkpoint = crear_checkpoint(ontologia, corpus)

    assert evaluate(checkpoint, corpus, threads=4) == evaluate(checkpoint, corpus, threads=1)


def test_evaluate_etiquetas_desconocidas(corpus, ontologia):
    otra = Ontology(("food",), {"food": ("thai",)})
    checkpoint = crear_checkpoint(ontologia, corpus)
    checkpoint = Checkpoint(otra, checkpoint.table, checkpoint.encoder,
                            ModelParams(otra, checkpoint.model.wf, checkpoint.model.bf,
                                        np.zeros((1, 8)), np.zeros(1)), {})

    with pytest.raises(DataError):
        evaluate(checkpoint, corpus)


@pytest.mark.parametrize("variant", list(EncoderVariant))
def test_asr1_igual_a_confnet_sin_ruido(variant, ontologia):
    """Con redes de un arco por posición, ASR-1 y la red dan la misma predicción."""
    sin_ruido = generate_corpus(ontologia, 10, NoiseModel(substitution_prob=0.0, seed=4), Rng(4))
    checkpoint = crear_checkpoint(ontologia, sin_ruido, variant)

    assert evaluate(checkpoint, sin_ruido, "asr-1") == evaluate(checkpoint, sin_ruido, "confnet")


# --- Modos ---

@pytest.mark.parametrize("texto, kind, n", [
    ("confnet", ModeKind.CONFNET, None),
    ("confnet-9", ModeKind.CONFNET, 9),
    ("asr-5", ModeKind.ASR, 5),
    ("asr_n(9)", ModeKind.ASR, 9),
    ("ASR", ModeKind.ASR, lib.config.TAMANO_LISTA_ASR),
])
def test_parse_modo(texto, kind, n):
    modo = EvalMode.parse(texto)

    assert modo.kind is kind
    assert modo.n == n


@pytest.mark.parametrize("texto", ["lattice", "asr-0", "confnet-x"])
def test_parse_modo_invalido(texto):
    with pytest.raises(DataError):
        EvalMode.parse(texto)


# --- Agregación ---

def test_agregado_dos_semillas():
    reportes = [EvalReport(0.70, 0.5, 0.9, 100), EvalReport(0.72, 0.5, 0.9, 100)]

    agregado = aggregate_seeds(reportes)

    assert agregado.runs == 2
    assert agregado.mean["joint_goal"] == pytest.approx(0.71)
    assert agregado.stderr["joint_goal"] == pytest.approx(0.01)
    assert agregado.stderr["turn_inform"] == 0.0


def test_agregado_una_semilla():
    with pytest.raises(DataError):
        aggregate_seeds([EvalReport(0.7, 0.5, 0.9, 100)])


def test_agregado_a_dict():
    doc = aggregate_seeds([EvalReport(0.5, 0.5, 0.5, 10)] * 3).to_dict()

    assert doc["runs"] == 3
    assert doc["metrics"]["turn_request"] == {"mean": 0.5, "stderr": 0.0}


def test_reporte_dict_ida_y_vuelta():
    reporte = EvalReport(0.25, 0.5, 0.75, 8)

    assert "timing" not in reporte.to_dict()
    assert EvalReport.from_dict(reporte.to_dict()) == reporte


def test_reporte_mal_formado():
    with pytest.raises(DataError):
        EvalReport.from_dict({"joint_goal": 0.5})


# --- Atención ---

def red_de_prueba():
    return ConfusionNetwork("u1", (
        ArcSet((Arc("thai", 0.6), Arc("indian", 0.3), Arc("<eps>", 0.1))),
        ArcSet((Arc("food", 1.0),)),
        ArcSet((Arc("north", 0.5), Arc("south", 0.5))),
    ))


def test_atencion_csv(corpus, ontologia):
    checkpoint = crear_checkpoint(ontologia, corpus, EncoderVariant.V3)

    filas = list(csv.reader(io.StringIO(dump_attention(checkpoint, red_de_prueba()))))

    assert filas[0] == ["0", "1", "2"]
    assert len(filas) == 4
    assert filas[1][0].startswith("thai:")
    assert filas[1][1] == "food:1.0"
    assert filas[3] == [filas[3][0], "", ""]
    for columna in range(3):
        pesos = [float(fila[columna].rsplit(":", 1)[1]) for fila in filas[1:] if fila[columna]]
        assert sum(pesos) == pytest.approx(1.0, abs=1e-9)


def test_atencion_columnas_en_orden_asr(corpus, ontologia):
    checkpoint = crear_checkpoint(ontologia, corpus, EncoderVariant.V4)

    columnas = attention_columns(checkpoint, red_de_prueba())

    assert [token for token, _ in columnas[0]] == ["thai", "indian", "<eps>"]
    assert [token for token, _ in columnas[2]] == ["north", "south"]


@pytest.mark.parametrize("variant", [EncoderVariant.V1, EncoderVariant.V2])
def test_atencion_sin_pesos(variant, corpus, ontologia):
    checkpoint = crear_checkpoint(ontologia, corpus, variant)

    with pytest.raises(DataError, match="no attention"):
        dump_attention(checkpoint, red_de_prueba())


# --- Benchmark ---

def test_bench_pocas_repeticiones(corpus, ontologia):
    with pytest.raises(ValueError):
        bench_inference(crear_checkpoint(ontologia, corpus), corpus, ["confnet"], repetitions=2)


def test_bench_devuelve_un_tiempo_por_modo(corpus, ontologia, mocker):
    checkpoint = crear_checkpoint(ontologia, corpus)
    tiempos = itertools.count()
    mocker.patch("lib.evalbench.time.perf_counter", side_effect=lambda: float(next(tiempos)))

    timing = bench_inference(checkpoint, corpus, ["confnet", "asr-1"], batch_size=4, repetitions=3)

    assert set(timing) == {"confnet", "asr-1"}
    # Cada muestra dura exactamente una unidad del reloj simulado.
    assert timing == {"confnet": 1.0, "asr-1": 1.0}


@pytest.mark.lento
def test_bench_complejidad(ontologia):
    """ASR-N crece con N; la red casi no cambia al pasar de 5 a 9 arcos."""
    ruido = NoiseModel(substitution_prob=1.0, truth_drop_prob=0.0, max_confusions=9, seed=8)
    corpus = generate_corpus(ontologia, 60, ruido, Rng(8))
    checkpoint = crear_checkpoint(ontologia, corpus, EncoderVariant.V4, dim=64, hidden=64)

    timing = bench_inference(checkpoint, corpus, ["asr-1", "asr-9", "confnet-5", "confnet-9"],
                             batch_size=50, repetitions=5)

    assert timing["asr-9"] / timing["asr-1"] >= 3
    assert timing["confnet-9"] / timing["confnet-5"] <= 1.5
