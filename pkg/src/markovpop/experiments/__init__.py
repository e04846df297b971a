"""Configuration, data, the simulation study, the ship analysis and the CLI."""
from .config import ExperimentConfig, load_config, parse_config
from .data import COVID_ROWS, covid_observations, disembarkment_hazard, ingest_csv

__all__ = ["COVID_ROWS", "ExperimentConfig", "covid_observations", "disembarkment_hazard",
           "ingest_csv", "load_config", "parse_config"]
