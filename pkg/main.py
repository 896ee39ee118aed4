"""
Punto de Entrada Principal de la Aplicación

Este es el script que se debe ejecutar para usar la línea de comandos
`confnet`. Su responsabilidad es mínima: delegar en `lib.cli.run` y
devolver al sistema operativo el código de salida que este calcula
(0 éxito, 1 uso incorrecto, 2 datos inválidos, 3 error numérico).

Ejemplos:
    python main.py nbest -n 3 < redes.jsonl
    python main.py train --regime aug --train train.jsonl --dev dev.jsonl --out modelo.json
"""

import sys

from lib import cli


def main():
    """Función principal: ejecuta el subcomando pedido en `sys.argv`."""
    return cli.run(sys.argv[1:])


# --- Punto de Entrada del Script ---
if __name__ == "__main__":
    sys.exit(main())
