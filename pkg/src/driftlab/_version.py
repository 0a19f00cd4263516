__version__ = "0.1.0"

REPORT_SCHEMA = "driftlab-report/1"
REGISTRY_SCHEMA = "driftlab-registry/1"
MODEL_SCHEMA = "driftlab-model/1"
CONFIG_SCHEMA = "driftlab-config/1"
