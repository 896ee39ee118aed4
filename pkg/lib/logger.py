"""
Módulo de Configuración de Logging

Este archivo se encarga de una única tarea: configurar y proporcionar una
instancia centralizada del sistema de registro (logger) para toda la biblioteca.

Los mensajes van siempre a la salida de error (stderr). La salida estándar
queda reservada para los datos (JSON/JSONL/CSV) que producen los comandos,
así los resultados se pueden encadenar con tuberías sin mezclarse con el log.

La librería `colorlog` se utiliza para mejorar la legibilidad de los logs en
la terminal, asignando colores a cada nivel de severidad.
"""

import logging

import colorlog

from . import config


def configurar_logger():
    """
    Crea, configura y devuelve el logger de la aplicación.

    - Si `config.LOGGING_ACTIVADO` es `True`, agrega un handler de colorlog
      que escribe en stderr con el nivel indicado en `config.NIVEL_LOG`.
    - Si es `False`, agrega un `NullHandler` y no se imprime nada.

    Returns:
        logging.Logger: La instancia del logger configurada.
    """
    log = logging.getLogger("confnet_dst")

    # Solo se configura una vez, aunque el módulo se importe varias veces.
    if config.LOGGING_ACTIVADO and not log.handlers:
        log.setLevel(config.NIVEL_LOG)

        # `colorlog.StreamHandler` escribe en sys.stderr por defecto.
        handler = colorlog.StreamHandler()
        formatter = colorlog.ColoredFormatter(
            '%(log_color)s%(levelname)-8s%(reset)s %(blue)s%(message)s',
            log_colors={
                'DEBUG':    'cyan',
                'INFO':     'green',
                'WARNING':  'yellow',
                'ERROR':    'red',
                'CRITICAL': 'red,bg_white',
            }
        )
        handler.setFormatter(formatter)
        log.addHandler(handler)

    elif not config.LOGGING_ACTIVADO:
        log.addHandler(logging.NullHandler())

    return log


def establecer_nivel(nivel):
    """
    Cambia el nivel mínimo del logger en tiempo de ejecución (flag --log-level).

    Args:
        nivel (str): Nombre del nivel ("DEBUG", "INFO", "WARNING", "ERROR").
    """
    logger.setLevel(nivel.upper())


# --- Instancia Única (Singleton) ---
# Se configura una sola vez, cuando este módulo es importado por primera vez.
# Los demás módulos hacen `from .logger import logger`.
logger = configurar_logger()
