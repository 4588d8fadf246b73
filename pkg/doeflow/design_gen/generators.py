import logging
from typing import List, Optional, Sequence

from allennlp.common import Params, Registrable

from doeflow.common.checks import DesignError, TooManyFactors
from doeflow.design_gen import classical, modern
from doeflow.design_gen.design import Design, DesignMetadata
from doeflow.spec_model.schema import DesignRequest, Factor

logger = logging.getLogger(__name__)


class DesignGenerator(Registrable):
    """This class lets a `DesignRequest` pick its design family by name. Each subclass is
    registered under the family's name and takes the family's parameters as constructor
    arguments, so `DesignGenerator.from_params` rejects unknown or mistyped parameters. See
    `build_design` for how a request is turned into a design.
    """

    default_implementation = "full_factorial"

    def generate(self, factors: Sequence[Factor], seed: int) -> Design:
        """Returns a design with one column per factor in `factors`, named after them."""
        design = self._generate(factors, seed)
        return design.renamed([factor.name for factor in factors])

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        raise NotImplementedError


def _level_count(factor: Factor) -> int:
    levels = factor.level_values()
    if levels is not None:
        return len(levels)
    return 2


@DesignGenerator.register("full_factorial")
class FullFactorialGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "full_factorial".

    # Parameters

    levels : `List[int]`, optional (default = `None`)
        Level count per factor. By default, the number of explicit levels (or labels) a factor
        declares, and 2 for continuous factors without explicit levels.
    """

    def __init__(self, levels: Optional[List[int]] = None) -> None:
        self.levels = levels

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        levels = self.levels or [_level_count(factor) for factor in factors]
        if len(levels) != len(factors):
            raise DesignError(f"Got {len(levels)} level counts for {len(factors)} factors")
        return classical.full_factorial(levels)


@DesignGenerator.register("fractional_factorial")
class FractionalFactorialGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "fractional_factorial". Factors are lettered
    `A`, `B`, ... in declaration order; `generators` define the last `p` of them."""

    def __init__(self, generators: List[str]) -> None:
        self.generators = generators

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return classical.fractional_factorial(len(factors), self.generators)


@DesignGenerator.register("plackett_burman")
class PlackettBurmanGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "plackett_burman"."""

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return classical.plackett_burman(len(factors))


@DesignGenerator.register("central_composite")
class CentralCompositeGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "central_composite".

    # Parameters

    alpha_mode : `str`, optional (default = `"rotatable"`)
        One of "rotatable", "face_centered" or "custom".
    n_center : `int`, optional (default = `1`)
    alpha : `float`, optional (default = `None`)
        Axial distance, required when `alpha_mode` is "custom".
    """

    def __init__(
        self, alpha_mode: str = "rotatable", n_center: int = 1, alpha: Optional[float] = None
    ) -> None:
        try:
            self.alpha_mode = classical.AlphaMode(alpha_mode)
        except ValueError:
            raise DesignError(
                f"alpha_mode must be one of {[mode.value for mode in classical.AlphaMode]}, "
                f"got {alpha_mode!r}"
            )
        self.n_center = n_center
        self.alpha = alpha

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return classical.central_composite(len(factors), self.alpha_mode, self.n_center, self.alpha)


@DesignGenerator.register("box_behnken")
class BoxBehnkenGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "box_behnken"."""

    def __init__(self, n_center: int = 1) -> None:
        self.n_center = n_center

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return classical.box_behnken(len(factors), self.n_center)


@DesignGenerator.register("latin_hypercube")
class LatinHypercubeGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "latin_hypercube". Without an explicit
    `seed` the experiment's master seed is used."""

    def __init__(self, n_samples: int, seed: Optional[int] = None) -> None:
        self.n_samples = n_samples
        self.seed = seed

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return modern.latin_hypercube(len(factors), self.n_samples, _pick_seed(self.seed, seed))


@DesignGenerator.register("sobol")
class SobolGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "sobol"."""

    def __init__(self, n_samples: int) -> None:
        self.n_samples = n_samples

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return modern.sobol(len(factors), self.n_samples)


@DesignGenerator.register("monte_carlo")
class MonteCarloGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "monte_carlo"."""

    def __init__(self, n_samples: int, seed: Optional[int] = None) -> None:
        self.n_samples = n_samples
        self.seed = seed

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        return modern.monte_carlo(len(factors), self.n_samples, _pick_seed(self.seed, seed))


@DesignGenerator.register("orthogonal_array")
class OrthogonalArrayGenerator(DesignGenerator):
    """Registered as a `DesignGenerator` with name "orthogonal_array". Uses the first `k`
    columns of the named array."""

    def __init__(self, array: str) -> None:
        self.array = array

    def _generate(self, factors: Sequence[Factor], seed: int) -> Design:
        design = modern.orthogonal_array(self.array)
        k = len(factors)
        if k > design.k:
            raise TooManyFactors(f"Array {self.array} has {design.k} columns, got {k} factors")
        matrix = design.matrix[:, :k]
        if len({tuple(row) for row in matrix}) < design.n_runs:
            raise DesignError(
                f"The first {k} columns of {self.array} repeat runs; pick a smaller array"
            )
        metadata = design.metadata
        return Design(
            family=design.family,
            factor_names=design.factor_names[:k],
            matrix=matrix,
            coding=design.coding[:k],
            metadata=DesignMetadata(levels=metadata.levels[:k], array_name=metadata.array_name),
        )


def _pick_seed(explicit: Optional[int], master_seed: int) -> int:
    return master_seed if explicit is None else explicit


def build_design(request: DesignRequest, factors: Sequence[Factor], seed: int) -> Design:
    """Generates the design a `DesignRequest` asks for over `factors`. The request's parameters
    are passed to the family's `DesignGenerator` through `Params`, so they are validated the
    same way any other configuration is."""
    generator = DesignGenerator.from_params(
        Params({"type": request.family.value, **request.parameters})
    )
    design = generator.generate(factors, seed)
    logger.info(
        "Generated %s design with %d runs over %s",
        request.family.value,
        design.n_runs,
        [factor.name for factor in factors],
    )
    return design
