"""
Módulo de Línea de Comandos

Un único ejecutable con un subcomando por operación de la biblioteca:

    prune, nbest, stats, encode   filtros JSONL: leen redes por stdin
    gen-data                      genera un corpus sintético
    train, eval, bench, attn      entrenamiento, métricas, tiempos y atención
    aggregate                     media y error estándar de varios reportes
    gradcheck                     verificación de gradientes del modelo completo

Todos los subcomandos aceptan `--config ARCHIVO` (líneas `clave = valor`, las
claves son los nombres largos de los flags), `--log-level` y `--threads`.
Los flags explícitos tienen prioridad sobre el archivo.

Códigos de salida: 0 éxito, 1 uso incorrecto, 2 datos inválidos, 3 error numérico.
"""

import argparse
import configparser
import json
import shlex
import sys
from pathlib import Path

from . import config
from .confnet import (
    confnet_to_dict,
    n_best_paths,
    network_stats,
    path_to_dict,
    prune,
    renormalize,
    truncate_arcs,
)
from .datagen import NoiseModel, generate_corpus
from .embeddings import Vocabulary, build_table, load_table
from .encoder import EncoderVariant, encode_network, random_params
from .errors import DataError, NumericalError, UsageError
from .evalbench import EvalMode, EvalReport, aggregate_seeds, bench_inference, dump_attention, evaluate, prepare_network
from .logger import establecer_nivel, logger
from .model import Ontology, check_pipeline_gradients
from .numerics import Rng
from .storage import load_checkpoint, load_corpus, read_confnets, read_json, save_checkpoint, save_corpus, write_json
from .trainer import Regime, TrainConfig, train

# Tolerancia de la verificación de gradientes.
TOLERANCIA_GRADIENTES = 1e-4

MODOS_BENCH = ["confnet", "asr-1", "asr-5", "asr-9"]
BOOLEANOS = {"true": True, "yes": True, "on": True, "false": False, "no": False, "off": False}


class ArgumentParser(argparse.ArgumentParser):
    """argparse que lanza `UsageError` en lugar de terminar el proceso."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# --- Salida ---

def _write_json(doc, stdout):
    stdout.write(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def _write_jsonl(doc, stdout):
    stdout.write(json.dumps(doc, ensure_ascii=False) + "\n")


def _resolved(args):
    """La configuración efectiva de la corrida, para incluirla en la salida."""
    return {key: value for key, value in sorted(vars(args).items()) if key not in ("func", "config")}


# --- Subcomandos de redes ---

def cmd_prune(args, stdin, stdout):
    for net in read_confnets(stdin):
        result = prune(net, args.threshold)
        if args.max_arcs:
            result = truncate_arcs(result, args.max_arcs)
        if args.renormalize:
            result = renormalize(result)
        _write_jsonl(confnet_to_dict(result), stdout)


def cmd_nbest(args, stdin, stdout):
    for net in read_confnets(stdin):
        for rank, path in enumerate(n_best_paths(net, args.n), start=1):
            _write_jsonl({"utterance_id": net.utterance_id, "rank": rank, **path_to_dict(path)}, stdout)


def cmd_stats(args, stdin, stdout):
    rows = [network_stats(net) for net in read_confnets(stdin)]
    if not args.tsv:
        for row in rows:
            _write_jsonl(row, stdout)
        return
    columns = ["utterance_id", "positions", "arcs", "max_width", "mean_width", "paths", "best_score"]
    stdout.write("\t".join(columns) + "\n")
    for row in rows:
        stdout.write("\t".join(str(row[column]) for column in columns) + "\n")


def cmd_encode(args, stdin, stdout):
    nets = read_confnets(stdin)
    vocab = Vocabulary.build({token for net in nets for position in net.positions for token in position.tokens})
    rng = Rng(args.seed)
    if args.embeddings:
        table = load_table(args.embeddings, vocab, rng, args.emb_dim)
    else:
        table = build_table(vocab, args.emb_dim, rng)
    params = random_params(EncoderVariant.parse(args.variant), table.dim, args.seed)
    for net in nets:
        encodings = encode_network(params, table, net)
        doc = {"utterance_id": net.utterance_id, "embeddings": [enc.embedding.tolist() for enc in encodings]}
        if params.variant.has_attention:
            doc["attention"] = [enc.attention.tolist() for enc in encodings]
        _write_jsonl(doc, stdout)


# --- Datos, entrenamiento y evaluación ---

def _ontology(args):
    if getattr(args, "ontology", None):
        return Ontology.from_dict(read_json(args.ontology))
    return Ontology.default()


def cmd_gen_data(args, stdin, stdout):
    noise = NoiseModel(args.sub_prob, args.max_confusions, args.truth_drop, args.seed)
    corpus = generate_corpus(_ontology(args), args.dialogues, noise, Rng(args.seed))
    save_corpus(corpus, args.out)
    _write_json({
        "config": _resolved(args),
        "dialogues": len(corpus),
        "turns": sum(len(dialogue.turns) for dialogue in corpus),
        "out": args.out,
    }, stdout)


def cmd_train(args, stdin, stdout):
    train_config = TrainConfig(
        regime=Regime.parse(args.regime),
        variant=EncoderVariant.parse(args.variant),
        max_arcs=args.max_arcs,
        asr_list_size=args.asr_n,
        learning_rate=args.lr,
        batch_size=args.batch,
        dropout=args.dropout,
        lam=args.lambda_,
        epochs=args.epochs,
        seed=args.seed,
        emb_dim=args.emb_dim,
        hidden_dim=args.hidden,
        l1_branch=args.l1_branch,
        prune_threshold=args.threshold,
        renormalize=args.renormalize,
        decision_threshold=args.decision_threshold,
        embeddings_path=args.embeddings,
    )
    ontology = _ontology(args)
    report = train(train_config, load_corpus(args.train), load_corpus(args.dev), ontology)

    report.checkpoint_path = args.out
    save_checkpoint(report.checkpoint, args.out)
    doc = report.to_dict()
    doc["config"] = {**_resolved(args), "train_config": doc["config"]}
    write_json(doc, Path(args.out).with_suffix(".report.json"))
    _write_json(doc, stdout)


def cmd_eval(args, stdin, stdout):
    checkpoint = load_checkpoint(args.ckpt)
    mode = EvalMode.parse(args.mode)
    report = evaluate(checkpoint, load_corpus(args.data), mode, args.decision_threshold, args.threads)
    _write_json({"config": _resolved(args), "mode": mode.label, **report.to_dict()}, stdout)


def cmd_bench(args, stdin, stdout):
    checkpoint = load_checkpoint(args.ckpt)
    modes = [EvalMode.parse(mode) for mode in args.modes]
    timing = bench_inference(checkpoint, load_corpus(args.data), modes, args.batch, args.reps)
    _write_json({"config": _resolved(args), "timing": timing}, stdout)


def _find_network(args, stdin):
    if args.data:
        nets = [turn.confnet for dialogue in load_corpus(args.data) for turn in dialogue.turns]
    else:
        nets = read_confnets(stdin)
    for net in nets:
        if args.utterance_id is None or net.utterance_id == args.utterance_id:
            return net
    raise DataError(f"no se encontró la red '{args.utterance_id}'")


def cmd_attn(args, stdin, stdout):
    checkpoint = load_checkpoint(args.ckpt)
    net = prepare_network(_find_network(args, stdin), checkpoint.settings)
    document = dump_attention(checkpoint, net)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        logger.info(f"Mapa de atención de '{net.utterance_id}' guardado en '{args.out}'.")
    else:
        stdout.write(document)


def _report_from_doc(doc):
    if not isinstance(doc, dict):
        raise DataError("el reporte debe ser un objeto JSON")
    # Un reporte de entrenamiento se resume con su mejor época en dev.
    return EvalReport.from_dict(doc.get("best_dev", doc))


def cmd_aggregate(args, stdin, stdout):
    aggregate = aggregate_seeds([_report_from_doc(read_json(path)) for path in args.reports])
    _write_json({"config": _resolved(args), **aggregate.to_dict()}, stdout)


def cmd_gradcheck(args, stdin, stdout):
    errors = check_pipeline_gradients(EncoderVariant.parse(args.variant), args.seed, args.dim, args.hidden,
                                      args.instances, args.lambda_, args.step)
    worst = max(errors)
    _write_json({"config": _resolved(args), "instances": len(errors), "max_rel_err": worst}, stdout)
    if worst >= TOLERANCIA_GRADIENTES:
        raise NumericalError(f"error relativo {worst:.3e} >= {TOLERANCIA_GRADIENTES}")


# --- Construcción del parser ---

def _common_options():
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="archivo 'clave = valor' con valores para los flags")
    common.add_argument("--log-level", default=config.NIVEL_LOG,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], type=str.upper)
    common.add_argument("--threads", type=int, default=config.HILOS)
    return common


def _model_options(parser):
    parser.add_argument("--seed", type=int, default=config.SEMILLA)
    parser.add_argument("--emb-dim", type=int, default=config.DIM_EMBEDDING)
    parser.add_argument("--embeddings", help="vectores preentrenados en formato texto")


def build_parser():
    parser = ArgumentParser(prog="confnet", description="Codificadores de confusion networks para seguimiento de estado.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    common = _common_options()

    def command(name, func, help_text):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.set_defaults(func=func)
        return sub

    sub = command("prune", cmd_prune, "poda arcos de baja confianza")
    sub.add_argument("--threshold", type=float, default=config.UMBRAL_PODA)
    sub.add_argument("--max-arcs", type=int)
    sub.add_argument("--renormalize", action="store_true")

    sub = command("nbest", cmd_nbest, "extrae las N mejores hipótesis")
    sub.add_argument("-n", type=int, default=config.TAMANO_LISTA_ASR)

    sub = command("stats", cmd_stats, "resumen de cada red")
    sub.add_argument("--tsv", action="store_true")

    sub = command("encode", cmd_encode, "codifica redes como secuencias de vectores")
    sub.add_argument("--variant", default="v1", choices=[v.value for v in EncoderVariant])
    _model_options(sub)

    sub = command("gen-data", cmd_gen_data, "genera un corpus sintético")
    sub.add_argument("--dialogues", type=int, required=True)
    sub.add_argument("--sub-prob", type=float, default=config.PROB_SUSTITUCION)
    sub.add_argument("--max-confusions", type=int, default=config.MAX_CONFUSIONES)
    sub.add_argument("--truth-drop", type=float, default=config.PROB_PERDER_VERDAD)
    sub.add_argument("--seed", type=int, default=config.SEMILLA)
    sub.add_argument("--ontology", help="ontología en JSON (por defecto, la de config.py)")
    sub.add_argument("--out", required=True)

    sub = command("train", cmd_train, "entrena un modelo")
    sub.add_argument("--regime", default=Regime.NON_AUG.value, choices=[r.value for r in Regime])
    sub.add_argument("--variant", default="v1", choices=[v.value for v in EncoderVariant])
    sub.add_argument("--max-arcs", type=int, default=config.MAX_ARCOS)
    sub.add_argument("--asr-n", type=int, default=config.TAMANO_LISTA_ASR)
    sub.add_argument("--lr", type=float, default=config.TASA_APRENDIZAJE)
    sub.add_argument("--batch", type=int, default=config.TAMANO_LOTE)
    sub.add_argument("--dropout", type=float, default=config.DROPOUT)
    sub.add_argument("--lambda", dest="lambda_", type=float, default=config.LAMBDA_SIMILITUD)
    sub.add_argument("--epochs", type=int, default=config.EPOCAS)
    sub.add_argument("--hidden", type=int, default=config.DIM_OCULTA)
    sub.add_argument("--l1-branch", default=config.RAMA_L1, choices=["confnet", "both"])
    sub.add_argument("--threshold", type=float, default=config.UMBRAL_PODA)
    sub.add_argument("--renormalize", action="store_true")
    sub.add_argument("--decision-threshold", type=float, default=config.UMBRAL_DECISION)
    sub.add_argument("--ontology")
    sub.add_argument("--train", required=True)
    sub.add_argument("--dev", required=True)
    sub.add_argument("--out", required=True)
    _model_options(sub)

    sub = command("eval", cmd_eval, "mide joint-goal, turn-inform y turn-request")
    sub.add_argument("--ckpt", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--mode", default="confnet")
    sub.add_argument("--decision-threshold", type=float, default=config.UMBRAL_DECISION)

    sub = command("bench", cmd_bench, "mide el tiempo de inferencia por lote")
    sub.add_argument("--ckpt", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--modes", nargs="+", default=MODOS_BENCH)
    sub.add_argument("--batch", type=int, default=config.LOTE_BENCH)
    sub.add_argument("--reps", type=int, default=config.REPETICIONES_BENCH)

    sub = command("attn", cmd_attn, "exporta los pesos de atención de una red a CSV")
    sub.add_argument("--ckpt", required=True)
    sub.add_argument("--utterance-id")
    sub.add_argument("--data", help="corpus donde buscar la red (por defecto, stdin)")
    sub.add_argument("--out")

    sub = command("aggregate", cmd_aggregate, "media y error estándar de varios reportes")
    sub.add_argument("reports", nargs="+")

    sub = command("gradcheck", cmd_gradcheck, "verifica los gradientes analíticos")
    sub.add_argument("--variant", default="v4", choices=[v.value for v in EncoderVariant])
    sub.add_argument("--seed", type=int, default=config.SEMILLA)
    sub.add_argument("--instances", type=int, default=20)
    sub.add_argument("--dim", type=int, default=8)
    sub.add_argument("--hidden", type=int, default=8)
    sub.add_argument("--lambda", dest="lambda_", type=float, default=config.LAMBDA_SIMILITUD)
    sub.add_argument("--step", type=float, default=1e-5)

    return parser


# --- Archivo de configuración ---

def config_file_args(path):
    """
    Traduce un archivo `clave = valor` a flags (las claves de una letra son
    flags cortos, como `n` -> `-n`). Los valores booleanos
    ("true", "no", ...) activan o no un flag sin argumento; los demás se
    separan como en la shell (para flags con varios valores).
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_string("[confnet]\n" + handle.read(), source=str(path))
    except configparser.Error as error:
        raise UsageError(f"archivo de configuración inválido '{path}': {error}") from error

    flags = []
    for key, value in parser.items("confnet"):
        flag = ("-" if len(key) == 1 else "--") + key.replace("_", "-")
        if value.strip().lower() in BOOLEANOS:
            if BOOLEANOS[value.strip().lower()]:
                flags.append(flag)
        else:
            flags.extend([flag, *shlex.split(value)])
    return flags


def parse_args(argv):
    """
    Parsea `argv`. Si hay `--config`, sus valores se insertan justo después
    del subcomando, antes de los flags explícitos, que así tienen prioridad.
    """
    parser = build_parser()
    # 1. Se busca el archivo antes de parsear, así puede aportar flags obligatorios.
    ruta_config = _ruta_config(argv)
    if ruta_config is None:
        return parser.parse_args(argv)
    # 2. El subcomando es el primer argumento que no es un flag.
    posicion = next((i for i, arg in enumerate(argv) if not arg.startswith("-")), len(argv)) + 1
    extendido = [*argv[:posicion], *config_file_args(ruta_config), *argv[posicion:]]
    return parser.parse_args(extendido)


def _ruta_config(argv):
    """Devuelve la ruta de `--config` en `argv` (la última si se repite), o None."""
    ruta = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            ruta = argv[i + 1]
        elif arg.startswith("--config="):
            ruta = arg.split("=", 1)[1]
    return ruta


def run(argv=None, stdin=None, stdout=None):
    """
    Ejecuta un subcomando y devuelve el código de salida.

    Los diagnósticos van por el logger (stderr); los datos, por `stdout`.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    try:
        args = parse_args(argv)
        establecer_nivel(args.log_level)
        logger.debug(f"Configuración: {_resolved(args)}")
        args.func(args, stdin, stdout)
        return 0
    except SystemExit as exit_request:
        # --help termina el parser con código 0.
        return exit_request.code or 0
    except UsageError as error:
        logger.error(str(error))
        return 1
    except NumericalError as error:
        logger.critical(f"Error numérico: {error}")
        return 3
    except (DataError, OSError, ValueError) as error:
        logger.error(str(error))
        return 2
