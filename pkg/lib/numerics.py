"""
Módulo de Numérica Densa

Vectores y matrices son arreglos `numpy` de reales de 64 bits. Aquí viven las
funciones de activación con sus derivadas analíticas, el generador aleatorio
con semilla y el verificador de gradientes por diferencias centrales que se
usa para validar cada paso hacia atrás escrito a mano.

Funciones clave:
- matvec, tanh, sigmoid, softmax: Las operaciones que usan el codificador y el modelo.
- Rng: El generador reproducible del que sale todo el azar de la biblioteca.
- grad_check: Compara un gradiente analítico con diferencias finitas.
"""

# Se importa 'math' para comprobar la finitud de escalares de Python sin
# pasar por numpy.
import math

# Se importa 'numpy', la base de todo el cálculo vectorial del proyecto.
import numpy as np

# Se importan los errores propios: las formas incompatibles y los valores no
# finitos tienen su propia excepción (y su propio código de salida en la CLI).
from .errors import NumericalError, ShapeError


def as_vec(values, nombre="vector"):
    """
    Convierte `values` en un vector float64 de una dimensión y verifica que
    todas sus entradas sean finitas.

    Raises:
        ShapeError: Si el arreglo no es unidimensional o está vacío.
        NumericalError: Si contiene NaN o infinitos.
    """
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        raise ShapeError(f"{nombre}: se esperaba un vector no vacío, forma {vector.shape}")
    check_finite(vector, nombre)
    return vector


def as_mat(values, nombre="matriz"):
    """Igual que `as_vec` pero para matrices (arreglos de dos dimensiones)."""
    matriz = np.asarray(values, dtype=np.float64)
    if matriz.ndim != 2 or matriz.size == 0:
        raise ShapeError(f"{nombre}: se esperaba una matriz no vacía, forma {matriz.shape}")
    check_finite(matriz, nombre)
    return matriz


def check_finite(array, nombre="valor"):
    """Lanza `NumericalError` si `array` contiene algún valor no finito."""
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"{nombre}: contiene valores no finitos")


def matvec(m, v):
    """
    Producto matriz-vector.

    Raises:
        ShapeError: Si `m.cols != v.len`.
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: dimensiones incompatibles {m.shape} · {v.shape}")
    return m @ v


# --- Activaciones y sus derivadas ---

def tanh(x):
    """Tangente hiperbólica elemento a elemento (de escalares, vectores o matrices)."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_grad(y):
    """Derivada de tanh expresada con la salida `y = tanh(x)`."""
    return 1.0 - y * y


def sigmoid(x):
    """Sigmoide estable: nunca evalúa `exp` de un argumento positivo."""
    x = np.asarray(x, dtype=np.float64)
    # Con z = exp(-|x|) ambas ramas quedan acotadas: 1/(1+z) para x >= 0 y
    # z/(1+z) para x < 0.
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(logits):
    """
    Softmax con resta del máximo para evitar desbordamientos.

    Acepta un vector no vacío; para `[1000, 0]` devuelve `[≈1, ≈0]`.
    """
    logits = as_vec(logits, "logits")
    exponenciales = np.exp(logits - logits.max())
    return exponenciales / exponenciales.sum()


def softmax_backward(probs, upstream):
    """
    Gradiente respecto de los logits dado el gradiente respecto de la salida.

    Args:
        probs (np.ndarray): Salida del softmax.
        upstream (np.ndarray): dL/dprobs.

    Returns:
        np.ndarray: dL/dlogits = p * (g - p·g).
    """
    return probs * (upstream - probs @ upstream)


# --- Generador aleatorio ---

class Rng:
    """
    Generador aleatorio reproducible.

    Usa el algoritmo PCG64 de numpy, alimentado por una `SeedSequence` con la
    tupla `(seed, stream)`. El mismo par produce el mismo flujo en cualquier
    plataforma. Una instancia pertenece a un único dueño; no se comparte entre
    hilos.
    """

    def __init__(self, seed, stream=0):
        if seed < 0 or stream < 0:
            raise ValueError("la semilla y el flujo deben ser enteros no negativos")
        self.seed = int(seed)
        self.stream = int(stream)
        # Dos flujos de la misma semilla son independientes entre sí.
        secuencia = np.random.SeedSequence([self.seed, self.stream])
        self.generator = np.random.Generator(np.random.PCG64(secuencia))

    def derive(self, stream):
        """Devuelve un generador independiente para la misma semilla."""
        return Rng(self.seed, stream)

    def uniform(self, low, high, size=None):
        return self.generator.uniform(low, high, size)

    def random(self):
        return float(self.generator.random())

    def integers(self, low, high):
        """Entero uniforme en [low, high)."""
        return int(self.generator.integers(low, high))

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, items, size, replace=False):
        """Elige `size` elementos de la secuencia `items` preservando su tipo."""
        # Se sortean índices y no los elementos: así las tuplas y cadenas no
        # se convierten en arreglos de numpy.
        indices = self.generator.choice(len(items), size=size, replace=replace)
        return [items[i] for i in indices]

    def keep_mask(self, shape, keep_prob):
        """Máscara de 0/1 donde cada entrada vale 1 con probabilidad `keep_prob`."""
        return (self.generator.random(shape) < keep_prob).astype(np.float64)


# --- Empaquetado de parámetros ---

def pack(arrays):
    """Concatena varios arreglos en un único vector plano."""
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def unpack(vector, shapes):
    """Operación inversa de `pack`: corta `vector` según `shapes`."""
    arreglos = []
    desplazamiento = 0
    for forma in shapes:
        # Una forma vacía `()` es un escalar y ocupa un lugar.
        tamano = int(np.prod(forma)) if forma else 1
        arreglos.append(np.asarray(vector[desplazamiento:desplazamiento + tamano]).reshape(forma))
        desplazamiento += tamano
    if desplazamiento != len(vector):
        raise ShapeError(f"unpack: sobran {len(vector) - desplazamiento} valores")
    return arreglos


# --- Verificación de gradientes ---

def _escalar(valor):
    arreglo = np.asarray(valor, dtype=np.float64)
    if arreglo.size != 1:
        raise ShapeError(f"grad_check: la función devolvió {arreglo.size} valores")
    return float(arreglo.reshape(-1)[0])


def grad_check(f, x, analytic_grad, step=1e-5):
    """
    Compara un gradiente analítico con diferencias finitas centrales.

    Para cada coordenada i calcula `(f(x + h e_i) - f(x - h e_i)) / 2h` y el
    error relativo `|analítico - numérico| / max(1e-8, |analítico| + |numérico|)`.

    Args:
        f (callable): Función escalar de un vector de parámetros.
        x (array-like): Punto donde se evalúa.
        analytic_grad (array-like): Gradiente analítico en `x`, misma forma.
        step (float): Paso `h` de las diferencias (> 0).

    Returns:
        float: El máximo error relativo sobre todas las coordenadas.

    Raises:
        NumericalError: Si `f` devuelve un valor no finito.
        ShapeError: Si `x` y el gradiente no tienen el mismo tamaño.
    """
    if step <= 0:
        raise ValueError("el paso debe ser positivo")
    # 1. Se trabaja sobre copias planas, así `f` nunca ve el arreglo original.
    x = np.array(x, dtype=np.float64).ravel()
    analitico = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if x.shape != analitico.shape:
        raise ShapeError(f"grad_check: {x.shape} frente a {analitico.shape}")

    # 2. Se perturba una coordenada por vez en ambos sentidos.
    peor = 0.0
    for i in range(x.size):
        mas = x.copy()
        mas[i] += step
        menos = x.copy()
        menos[i] -= step
        f_mas = _escalar(f(mas))
        f_menos = _escalar(f(menos))
        if not (math.isfinite(f_mas) and math.isfinite(f_menos)):
            raise NumericalError(f"grad_check: evaluación no finita en la coordenada {i}")

        # 3. Error relativo con piso 1e-8, así dos gradientes nulos no dividen por cero.
        numerico = (f_mas - f_menos) / (2.0 * step)
        error = abs(analitico[i] - numerico) / max(1e-8, abs(analitico[i]) + abs(numerico))
        peor = max(peor, error)
    return peor
