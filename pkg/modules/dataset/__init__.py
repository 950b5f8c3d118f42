from .dataset import (
    Dataset,
    Partition,
    Standardizer,
    SyntheticSpec,
    load_csv,
    make_synthetic_spec,
    partition,
    synthesize,
    write_csv,
)
from .sampling import SAMPLERS, minibatch_balanced, minibatch_standard
