"""
Módulo de Configuración

Este archivo centraliza las constantes y parámetros por defecto de la
biblioteca y de la línea de comandos. Permite modificar el comportamiento del
programa fácilmente sin tener que cambiar la lógica principal: cada función
que tiene un parámetro ajustable toma aquí su valor por defecto, y cada flag
de la CLI también.
"""

# --- CONFIGURACIÓN DE LOGGING ---
# Establecer en True para mostrar logs en la terminal (siempre por stderr).
# Establecer en False para una operación completamente silenciosa.
LOGGING_ACTIVADO = True

# Nivel mínimo de los mensajes mostrados. La CLI lo puede cambiar con --log-level.
NIVEL_LOG = "INFO"

# --- PREPROCESAMIENTO DE CONFUSION NETWORKS ---
# Los arcos con una confianza ASR menor a este valor se podan
# (siempre se conserva el mejor arco de cada posición).
UMBRAL_PODA = 0.001

# Interjecciones que se eliminan antes de codificar una red.
INTERJECCIONES = frozenset({"um", "uh", "ah", "oh", "hmm"})

# Número máximo de arcos paralelos que se conservan por posición (N en Cnet-N).
MAX_ARCOS = 5

# Renormalizar las confianzas después de podar/truncar. Desactivado por defecto.
RENORMALIZAR = False

# --- DIMENSIONES DEL MODELO ---
# Dimensión de los embeddings de palabras (la tabla congelada).
DIM_EMBEDDING = 64

# Dimensión del vector de contexto que produce el codificador `f`.
DIM_OCULTA = 64

# Los pesos de `f` se inicializan uniformes en [-ESCALA_INIT_F, ESCALA_INIT_F].
ESCALA_INIT_F = 1.0

# --- ENTRENAMIENTO ---
TASA_APRENDIZAJE = 0.01
TAMANO_LOTE = 50
DROPOUT = 0.2
LAMBDA_SIMILITUD = 0.5
EPOCAS = 30
SEMILLA = 0

# Tamaño de la lista N-best del baseline ASR-N.
TAMANO_LISTA_ASR = 5

# Rama sobre la que se calcula la pérdida de clasificación en el régimen
# conjunto: "confnet" (solo la red ruidosa) o "both" (red y transcripción).
RAMA_L1 = "confnet"

# --- EVALUACIÓN ---
# Un par (slot, valor) se considera predicho si su probabilidad supera este umbral.
UMBRAL_DECISION = 0.5

# Repeticiones y tamaño de lote por defecto del benchmark de inferencia.
REPETICIONES_BENCH = 5
LOTE_BENCH = 50

# Hilos para evaluar diálogos en paralelo. 1 garantiza reproducibilidad bit a bit.
HILOS = 1

# --- ONTOLOGÍA POR DEFECTO (dominio de restaurantes, 4 slots x 8 valores) ---
# Cada valor es un único token para que las plantillas sean simples.
ONTOLOGIA = {
    "food": ["chinese", "italian", "indian", "thai", "french", "korean", "spanish", "turkish"],
    "area": ["north", "south", "east", "west", "centre", "downtown", "riverside", "harbour"],
    "pricerange": ["cheap", "moderate", "expensive", "budget", "luxury", "affordable", "pricey", "reasonable"],
    "day": ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "weekend"],
}

# Slots cuyo valor el usuario puede pedir (turn-request).
SLOTS_SOLICITABLES = ["phone", "address", "postcode"]

# --- MODELO DE RUIDO DEL GENERADOR SINTÉTICO ---
PROB_SUSTITUCION = 0.5
MAX_CONFUSIONES = 5
PROB_PERDER_VERDAD = 0.3

# --- FORMATO DE ARCHIVOS ---
# Versión del formato JSON de los checkpoints.
VERSION_CHECKPOINT = 1
