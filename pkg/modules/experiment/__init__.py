from .config import ExperimentConfig, load_config, resolve
from .pipeline import cmd_evaluate, cmd_report, cmd_run, cmd_select, cmd_select_evaluate, cmd_synth
