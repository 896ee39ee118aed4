"""
Suite de Tests para la Capa de Persistencia (`storage.py`)

Verifica que el corpus y los checkpoints se lean exactamente como se
escribieron, y que los errores de esquema indiquen el número de línea.
"""

import io
import json

import numpy as np
import pytest

import lib.config
from lib.datagen import NoiseModel, generate_corpus
from lib.embeddings import Vocabulary, build_table
from lib.encoder import EncoderVariant, random_params
from lib.errors import DataError
from lib.model import Checkpoint, ModelParams, Ontology
from lib.numerics import Rng
from lib.storage import (
    checkpoint_from_dict,
    checkpoint_to_dict,
    load_checkpoint,
    load_corpus,
    read_confnets,
    read_json,
    save_checkpoint,
    save_corpus,
    write_json,
)


@pytest.fixture(autouse=True)
def sin_logs(monkeypatch):
    monkeypatch.setattr(lib.config, 'LOGGING_ACTIVADO', False)


@pytest.fixture
def corpus():
    return generate_corpus(Ontology.default(), 8, NoiseModel(seed=2), Rng(2))


@pytest.fixture
def checkpoint():
    ontologia = Ontology(("food",), {"food": ("thai", "indian")}, ("phone",))
    vocab = Vocabulary.build(["thai", "indian", "food"])
    rng = Rng(6)
    # Valores con muchos decimales para comprobar la ida y vuelta exacta.
    model = ModelParams(ontologia, rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, (3, 3)),
                        rng.uniform(-1, 1, 3), lam=0.5)
    return Checkpoint(ontologia, build_table(vocab, 4, rng), random_params(EncoderVariant.V4, 4, 1), model,
                      {"max_arcs": 5, "prune_threshold": 0.001})


def test_corpus_ida_y_vuelta(tmp_path, corpus):
    ruta = tmp_path / "corpus.jsonl"

    save_corpus(corpus, ruta)

    assert load_corpus(ruta) == corpus


def test_corpus_archivo_vacio(tmp_path):
    ruta = tmp_path / "vacio.jsonl"
    ruta.write_text("", encoding="utf-8")

    assert load_corpus(ruta) == []


def test_corpus_linea_sin_turns(tmp_path, corpus):
    ruta = tmp_path / "roto.jsonl"
    save_corpus(corpus[:2], ruta)
    with open(ruta, "a", encoding="utf-8") as handle:
        handle.write(json.dumps({"dialogue_id": "sin-turnos"}) + "\n")

    with pytest.raises(DataError, match="línea 3"):
        load_corpus(ruta)


def test_corpus_json_mal_formado(tmp_path):
    ruta = tmp_path / "roto.jsonl"
    ruta.write_text('{"dialogue_id": \n', encoding="utf-8")

    with pytest.raises(DataError, match="línea 1"):
        load_corpus(ruta)


def test_corpus_ids_repetidos(tmp_path, corpus):
    ruta = tmp_path / "repetidos.jsonl"
    save_corpus([corpus[0], corpus[0]], ruta)

    with pytest.raises(DataError, match="repetidos"):
        load_corpus(ruta)


def test_corpus_inexistente(tmp_path):
    with pytest.raises(DataError):
        load_corpus(tmp_path / "no_existe.jsonl")


def test_read_confnets_nombra_la_linea():
    flujo = io.StringIO(
        '{"utterance_id": "a", "positions": [[{"token": "hi", "score": 1.0}]]}\n'
        '\n'
        '{"utterance_id": "b", "positions": [[{"token": "hi", "score": 2.0}]]}\n'
    )

    with pytest.raises(DataError, match="línea 3"):
        read_confnets(flujo)


def test_checkpoint_ida_y_vuelta_exacta(tmp_path, checkpoint):
    ruta = tmp_path / "modelo.json"

    save_checkpoint(checkpoint, ruta)
    leido = load_checkpoint(ruta)

    assert leido.ontology == checkpoint.ontology
    assert leido.encoder.variant is EncoderVariant.V4
    assert leido.settings == checkpoint.settings
    assert leido.model.lam == 0.5
    assert leido.table.vocab.tokens == checkpoint.table.vocab.tokens
    assert np.array_equal(leido.table.table, checkpoint.table.table)
    for nombre in ("w1", "w2"):
        assert np.array_equal(getattr(leido.encoder, nombre), getattr(checkpoint.encoder, nombre))
    for nombre in ("wf", "bf", "sv", "sb"):
        assert np.array_equal(getattr(leido.model, nombre), getattr(checkpoint.model, nombre))


def test_checkpoint_version_desconocida(checkpoint):
    doc = checkpoint_to_dict(checkpoint)
    doc["version"] = 99

    with pytest.raises(DataError, match="versión"):
        checkpoint_from_dict(doc)


def test_checkpoint_incompleto(checkpoint):
    doc = checkpoint_to_dict(checkpoint)
    del doc["model"]

    with pytest.raises(DataError):
        checkpoint_from_dict(doc)


def test_no_es_un_checkpoint():
    with pytest.raises(DataError):
        checkpoint_from_dict({"format": "otro"})


def test_json_ida_y_vuelta(tmp_path):
    ruta = tmp_path / "reporte.json"

    write_json({"joint_goal": 0.5, "modo": "confnet"}, ruta)

    assert read_json(ruta) == {"joint_goal": 0.5, "modo": "confnet"}
