import os

from dotenv import load_dotenv

load_dotenv()

TOOL_VERSION = "1.0.0"

LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Fallbacks for command-line flags
DEFAULT_THREADS = int(os.environ.get("NARRINF_THREADS", "1"))
DEFAULT_MAX_RHAT = float(os.environ.get("NARRINF_MAX_RHAT", "1.2"))
DEFAULT_ETA_CLAMP = float(os.environ.get("NARRINF_ETA_CLAMP", "30"))
