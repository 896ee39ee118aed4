"""
Módulo de Almacenamiento (Capa de Persistencia)

Este archivo centraliza toda la lectura y escritura de archivos. El resto de
la biblioteca (entrenamiento, evaluación, CLI) no necesita conocer los
formatos; simplemente llama a estas funciones.

Formatos:
- Corpus: JSONL, un diálogo por línea.
- Confnets sueltas: JSONL, una red por línea.
- Checkpoint: un documento JSON versionado con la ontología, la tabla de
  embeddings, los parámetros y la configuración usada al entrenar. Los reales
  se escriben con `repr`, que es exacto al volver a leerlos.
- Reportes: documentos JSON.
"""

import json

import numpy as np

from . import config
from .confnet import confnet_from_dict
from .datagen import dialogue_from_dict, dialogue_to_dict
from .embeddings import EmbeddingTable, Vocabulary
from .encoder import EncoderParams, EncoderVariant
from .errors import DataError
from .logger import logger
from .model import Checkpoint, ModelParams, Ontology

FORMATO_CHECKPOINT = "confnet-dst-checkpoint"


def _open(path, mode):
    try:
        return open(path, mode, encoding="utf-8")
    except OSError as error:
        logger.error(f"No se pudo abrir '{path}': {error}")
        raise DataError(f"no se pudo abrir '{path}': {error}") from error


def _parse_lines(lines, build, what):
    """Decodifica un flujo JSONL; los errores nombran el número de línea."""
    items = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            items.append(build(json.loads(line)))
        except json.JSONDecodeError as error:
            raise DataError(f"línea {number}: JSON mal formado ({error})") from error
        except (KeyError, TypeError, ValueError) as error:
            raise DataError(f"línea {number}: {what} no sigue el esquema (falta o sobra {error})") from error
        except DataError as error:
            raise DataError(f"línea {number}: {error}") from error
    return items


# --- Confnets ---

def read_confnets(stream):
    """Lee un flujo JSONL de redes (por ejemplo, la entrada estándar)."""
    return _parse_lines(stream, confnet_from_dict, "la red")


# --- Corpus ---

def save_corpus(corpus, path):
    with _open(path, "w") as handle:
        for dialogue in corpus:
            handle.write(json.dumps(dialogue_to_dict(dialogue), ensure_ascii=False) + "\n")
    logger.info(f"Corpus guardado en '{path}' ({len(corpus)} diálogos).")


def load_corpus(path):
    """
    Lee un corpus JSONL. Un archivo vacío devuelve un corpus vacío.

    Raises:
        DataError: Si alguna línea no sigue el esquema (con su número de línea)
                   o si hay identificadores de diálogo repetidos.
    """
    with _open(path, "r") as handle:
        corpus = _parse_lines(handle, dialogue_from_dict, "el diálogo")
    ids = [dialogue.dialogue_id for dialogue in corpus]
    if len(set(ids)) != len(ids):
        raise DataError(f"'{path}': identificadores de diálogo repetidos")
    logger.debug(f"Corpus leído de '{path}' ({len(corpus)} diálogos).")
    return corpus


# --- Checkpoints ---

def checkpoint_to_dict(checkpoint):
    encoder = checkpoint.encoder
    model = checkpoint.model
    return {
        "format": FORMATO_CHECKPOINT,
        "version": config.VERSION_CHECKPOINT,
        "ontology": checkpoint.ontology.to_dict(),
        "variant": encoder.variant.value,
        "dim": encoder.dim,
        "hidden": model.hidden,
        "lambda": model.lam,
        "vocab": list(checkpoint.table.vocab.tokens),
        "embeddings": checkpoint.table.table.tolist(),
        "encoder": {"w1": encoder.w1.tolist(), "w2": encoder.w2.tolist()},
        "model": {
            "wf": model.wf.tolist(),
            "bf": model.bf.tolist(),
            "sv": model.sv.tolist(),
            "sb": model.sb.tolist(),
        },
        "settings": checkpoint.settings,
    }


def checkpoint_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != FORMATO_CHECKPOINT:
        raise DataError("el documento no es un checkpoint")
    if doc.get("version") != config.VERSION_CHECKPOINT:
        raise DataError(f"versión de checkpoint no soportada: {doc.get('version')}")
    try:
        ontology = Ontology.from_dict(doc["ontology"])
        table = EmbeddingTable(Vocabulary(tuple(doc["vocab"])), np.array(doc["embeddings"]))
        encoder = EncoderParams(EncoderVariant.parse(doc["variant"]),
                                np.array(doc["encoder"]["w1"], dtype=np.float64),
                                np.array(doc["encoder"]["w2"], dtype=np.float64))
        raw = doc["model"]
        model = ModelParams(ontology, *(np.array(raw[k], dtype=np.float64) for k in ("wf", "bf", "sv", "sb")),
                            lam=float(doc["lambda"]))
    except (KeyError, TypeError, ValueError) as error:
        raise DataError(f"checkpoint mal formado ({error})") from error
    return Checkpoint(ontology, table, encoder, model, dict(doc.get("settings", {})))


def save_checkpoint(checkpoint, path):
    write_json(checkpoint_to_dict(checkpoint), path)
    logger.info(f"Checkpoint guardado en '{path}'.")


def load_checkpoint(path):
    return checkpoint_from_dict(read_json(path))


# --- Documentos JSON ---

def write_json(doc, path):
    with _open(path, "w") as handle:
        json.dump(doc, handle, indent=2, ensure_ascii=False)
        handle.write("\n")


def read_json(path):
    with _open(path, "r") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as error:
            raise DataError(f"'{path}': JSON mal formado ({error})") from error
