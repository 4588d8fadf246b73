from doeflow.design_gen.design import Coding, Design, DesignMetadata
from doeflow.design_gen.aliasing import (
    ConfoundingPair,
    alias_structure,
    default_model_terms,
    detect_confounding,
)
from doeflow.design_gen.classical import (
    AlphaMode,
    box_behnken,
    central_composite,
    fractional_factorial,
    full_factorial,
    plackett_burman,
)
from doeflow.design_gen.modern import latin_hypercube, monte_carlo, orthogonal_array, sobol
from doeflow.design_gen.generators import DesignGenerator, build_design
from doeflow.design_gen.run_plan import (
    Run,
    RunPlan,
    Treatment,
    block_design,
    load_plan,
    plan_from_spec,
    randomize_order,
    scale_to_ranges,
    write_design,
    write_plan,
)
