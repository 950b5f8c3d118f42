from .grid import GridPoint, GridSpec, dro_grid, erm_grid, expand_grid, stratified_grid
from .select import (
    BASELINE,
    CRITERIA,
    FAMILIES,
    CompositePredictor,
    Selection,
    StratifiedSelection,
    select,
    select_stratified,
    stratified_composites,
)
from .sweep import RecordStore, RunRecord, run_sweep
