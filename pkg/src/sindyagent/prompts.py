"""Prompt templates, versioned.

The summarization templates are filled verbatim (slots in braces); the main
prompt is assembled section by section by the orchestrator. The candidate
grammar documentation embedded here is the same normative text shipped in
docs/candidate_grammar.md; a test keeps the two in sync.
"""

PROMPT_VERSION = "1"

DATA_SUMMARY_TEMPLATE = """\
You will be shown time-series data with {n} dimension{s}. Read over it carefully and provide a comprehensive description of the data.
Make sure to include in your detailed description:
* The shape and common features of the trajectory.
* Whether noise seems to be present, or if the curve is smooth.
* Does the data resemble any known dynamical systems.
* Does any dimension of the data repeat, i.e. whether it seems to have a certain frequency or period.
* Does it look like there are any relationships between each of the state dimensions?
* If it repeats, try and provide an estimate of its amplitude and period from the plot.
* Anything additional you observe about the data that you think is relevant to form a complete description.
The data is as follows:
t,{xdims}
{data}"""

IMAGE_SUMMARY_TEMPLATE = """\
You will be shown an image of a time-series plot of measured data with {n} dimension{s}. Look at it carefully and provide a comprehensive description of what you see.
Make sure to include in your detailed description:
* The shape and common features of the trajectory.
* Whether noise seems to be present, or if the curve is smooth.
* Does the data resemble any known dynamical systems.
* Does any dimension of the data repeat, i.e. whether it seems to have a certain frequency or period.
* Does it look like there are any relationships between each of the state dimensions?
* If it repeats, try and provide an estimate of its amplitude and period from the plot.
* Anything additional you observe about the data that you think is relevant to form a complete description."""


def fill_data_summary(n: int, xdims: str, data: str) -> str:
    return DATA_SUMMARY_TEMPLATE.format(n=n, s="s" if n > 1 else "", xdims=xdims, data=data)


def fill_image_summary(n: int) -> str:
    return IMAGE_SUMMARY_TEMPLATE.format(n=n, s="s" if n > 1 else "")


MAIN_CONTEXT = """\
You are an expert at inferring dynamical systems using data-driven methods and we will use a method called Sparse Identification of Nonlinear Dynamics (SINDy).
*Requirements:*
* If given, analyze the system observation and identify relevant primitive functions.
* Effectively utilize the available feature library parts.
* Create a comprehensive feature library containing the primitive functions.
* Provide the library as a single fenced configuration block in the documented grammar (no commentary inside the block).
{optimizer_requirements}* Respond with exactly one fenced block.
*Chain of Thought:*
1. Understand the System: Review observations to grasp key components and behaviors.
2. Select Features: Choose feature library parts with appropriate arguments and consider custom terms with appropriate additional primitive functions to model the dynamics.
{optimizer_cot}{build_step}. Build the Library: Assemble the selected parts into a valid configuration block.
{validate_step}. Validate and Refine: Ensure the library balances simplicity and accuracy for optimal interpretability.
*Example:*
Respond with a fenced configuration block like this:
```
library:
  - polynomial:
      degree: 2
      include_interaction: true
      include_bias: true
  - custom:
      terms: ["exp(x0)"]
{optimizer_example}```"""

OPTIMIZER_REQUIREMENTS = """\
* Also, if given, analyze the system observation and identify a relevant optimizer for the sparse regression.
* Effectively utilize available optimizers, if one does not work well, try something else.
"""

OPTIMIZER_COT = "3. Select Optimizer: Choose an optimizer with appropriate arguments.\n"

OPTIMIZER_EXAMPLE = """\
optimizer:
  kind: STLSQ
  threshold: 0.1
"""


def main_context(choose_optimizer: bool) -> str:
    return MAIN_CONTEXT.format(
        optimizer_requirements=OPTIMIZER_REQUIREMENTS if choose_optimizer else "",
        optimizer_cot=OPTIMIZER_COT if choose_optimizer else "",
        build_step="4" if choose_optimizer else "3",
        validate_step="5" if choose_optimizer else "4",
        optimizer_example=OPTIMIZER_EXAMPLE if choose_optimizer else "",
    )


LIBRARY_DOC = """\
A candidate is one fenced block containing a YAML mapping. The `library` key
is a non-empty list of parts; every part is a single-key mapping choosing one
of the three part types:

- `polynomial`: all monomials of the state variables.
    - `degree` (required, integer 0..6): maximum total degree.
    - `include_interaction` (default true): include cross terms such as
      `x0 x1`; when false only pure powers `x0^k` are generated.
    - `include_bias` (default true): include the constant feature `1`.
- `fourier`: sines and cosines of integer multiples of each variable.
    - `n_frequencies` (required, integer 1..8): frequencies 1..n_frequencies.
    - `include_sin` / `include_cos` (default true): which functions to emit.
- `custom`: explicit extra features, one per term expression.
    - `terms` (required): non-empty list of strings in the term grammar.

Term grammar: arithmetic over the state variables `x0`, `x1`, ... with
numbers, `+ - * / ^`, unary minus, parentheses, and the functions
sin, cos, tan, exp, log, sqrt, abs. Juxtaposition multiplies (`x0 x1`).
Examples: `exp(-x0)`, `log(abs(x1))`, `x0^2 x1`, `x0/(1 + x1^2)`.

Feature names must be unique across all parts: do not list a custom term
that duplicates a polynomial or fourier feature. Keep the library as small
as the dynamics allow; sparse regression works best when only plausible
primitive functions are present.
"""

OPTIMIZER_DOC = """\
The `optimizer` key selects how the sparse regression is solved:

- `STLSQ` (sequentially thresholded least squares): alternates least-squares
  fits with hard thresholding of small coefficients.
    - `threshold` (default 0.1): coefficients below this magnitude are
      zeroed. Raise it for sparser models, lower it when legitimate terms
      are being discarded.
    - `ridge_alpha` (default 0.05): ridge regularization inside iterations.
    - `max_iter` (default 20).
- `SR3` (sparse relaxed regularized regression): relaxation with an
  auxiliary thresholded copy; more robust on poorly conditioned libraries.
    - `threshold` (default 0.03), `nu` (relaxation weight, default 1.0),
      `max_iter` (default 20).
- `LeastSquares`: plain least squares, no sparsification.

Practical tips: start with STLSQ and the default threshold; if the fit
misses small coefficients, lower the threshold; if spurious terms appear,
raise it or try SR3. A model with very many active terms that still scores
poorly usually means the library is missing the right primitives.
"""

PINNED_OPTIMIZER_NOTE = """\
The optimizer is fixed for this task: emit only the `library` key. Any
`optimizer` key in your block will be ignored in favor of the pinned
configuration.
"""
