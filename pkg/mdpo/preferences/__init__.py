from .judge import JudgeConfig, judge_prefers
from .dataset import PreferenceRow, PreferenceDataset, generate_dataset, corrupt_noise, write_dataset, \
    read_dataset, read_provenance, dumps_dataset, loads_dataset, EXPERT, REFERENCE
