"""
Utility functions for the application.
"""
import os
import json
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from numkernel import DEFAULT_WINDOW, DEFAULT_Z0, LaurentSeries, QParams
from qdmod import BlockSystem
from validation import ConfigValidator, ValidationError, Validator

# Constants
APP_NAME = "qdx"
APP_VERSION = "1.0.0"
DATA_DIR = "data"
DEFAULT_SETTINGS_FILE = "settings.json"
DEFAULT_LOG_FILE = os.path.join(DATA_DIR, "qdx.log")
CONFIG_ENV_VAR = "QDX_CONFIG"

# tau for q = 4
DEFAULT_TAU = complex(0.0, -math.log(4) / (2 * math.pi))

DEFAULT_TOLERANCES = {
    "theta": 1e-10,
    "hex": 1e-12,
    "bad_q": 1e-9,
    "stokes": 1e-9,
    "oracle": 1e-6,
    "alien": 1e-8,
    "constraint": 1e-9,
    "formal": 1e-12,
    "group": 1e-10,
    "action": 1e-8,
    "conjugation": 1e-12,
    "cocycle": 1e-8,
    "ramify": 1e-9,
}

DEFAULT_SETTINGS = {
    "tau": [DEFAULT_TAU.real, DEFAULT_TAU.imag],
    "r": 1,
    "z0": [DEFAULT_Z0.real, DEFAULT_Z0.imag],
    "window": list(DEFAULT_WINDOW),
    "tolerances": dict(DEFAULT_TOLERANCES),
    "seed": 0,
}


def setup_logging(log_file: str = DEFAULT_LOG_FILE, level: int = logging.INFO):
    """Configure the root logger with a file handler and a stream handler"""
    directory = os.path.dirname(log_file)
    if directory:
        os.makedirs(directory, exist_ok=True)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ],
        force=True,
    )


def encode_complex(value: complex) -> List[float]:
    value = complex(value)
    return [value.real, value.imag]


def decode_complex(pair: Any, field_name: str = "value") -> complex:
    """[re, im] -> complex, raising ValidationError on anything else"""
    is_valid, error = Validator.validate_complex_pair(pair, field_name)
    if not is_valid:
        raise ValidationError(error)
    return complex(float(pair[0]), float(pair[1]))


class DataManager:
    """Class to manage data operations like save, load, etc."""

    logger = logging.getLogger(__name__)

    @staticmethod
    def ensure_data_dir():
        """Ensure the data directory exists"""
        try:
            os.makedirs(DATA_DIR, exist_ok=True)
            return True
        except Exception as e:
            DataManager.logger.error(f"Failed to create data directory: {e}")
            return False

    @staticmethod
    def get_file_path(filename: str) -> str:
        """Bare file names live in the data directory; paths are used as given"""
        if os.path.isabs(filename) or os.path.dirname(filename):
            return filename
        DataManager.ensure_data_dir()
        return os.path.join(DATA_DIR, filename)

    @staticmethod
    def validate_json_structure(data: Any, filename: str) -> Tuple[bool, str]:
        """Validate JSON data structure based on file type"""
        try:
            if os.path.basename(filename) == DEFAULT_SETTINGS_FILE:
                return ConfigValidator.validate_settings(data)
            if not isinstance(data, (dict, list)):
                return False, "Top-level JSON value must be an object or a list"
            return True, ""
        except Exception as e:
            return False, f"Validation error: {str(e)}"

    @staticmethod
    def save_data(data: Any, filename: str) -> Tuple[bool, str]:
        """
        Save data to a JSON file with validation

        Returns:
            Tuple of (success, error_message)
        """
        try:
            is_valid, error_msg = DataManager.validate_json_structure(data, filename)
            if not is_valid:
                DataManager.logger.error(f"Data validation failed for {filename}: {error_msg}")
                return False, f"Data validation failed: {error_msg}"

            file_path = DataManager.get_file_path(filename)
            with open(file_path, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=4, ensure_ascii=False, sort_keys=True)

            DataManager.logger.info(f"Data saved successfully to {filename}")
            return True, ""

        except PermissionError as e:
            error_msg = f"Permission denied when saving {filename}: {e}"
            DataManager.logger.error(error_msg)
            return False, error_msg
        except (TypeError, ValueError) as e:
            error_msg = f"JSON encoding error when saving {filename}: {e}"
            DataManager.logger.error(error_msg)
            return False, error_msg
        except Exception as e:
            error_msg = f"Unexpected error saving {filename}: {e}"
            DataManager.logger.error(error_msg)
            return False, error_msg

    @staticmethod
    def load_data(filename: str) -> Tuple[Any, str]:
        """
        Load data from a JSON file with error handling

        Returns:
            Tuple of (data, error_message). If error_message is empty, data is valid.
            If error occurs, returns appropriate default structure and error message.
        """
        try:
            file_path = DataManager.get_file_path(filename)

            if not os.path.exists(file_path):
                default_data = DataManager.get_default_data_structure(filename)
                DataManager.logger.info(f"File {filename} doesn't exist, returning default structure")
                return default_data, f"File {filename} not found"

            with open(file_path, 'r', encoding='utf-8') as f:
                data = json.load(f)

            is_valid, error_msg = DataManager.validate_json_structure(data, filename)
            if not is_valid:
                DataManager.logger.error(f"Loaded data validation failed for {filename}: {error_msg}")
                default_data = DataManager.get_default_data_structure(filename)
                return default_data, f"Data corrupted: {error_msg}"

            DataManager.logger.info(f"Data loaded successfully from {filename}")
            return data, ""

        except json.JSONDecodeError as e:
            error_msg = f"JSON decode error in {filename}: {e}"
            DataManager.logger.error(error_msg)
            default_data = DataManager.get_default_data_structure(filename)
            return default_data, error_msg
        except PermissionError as e:
            error_msg = f"Permission denied when loading {filename}: {e}"
            DataManager.logger.error(error_msg)
            default_data = DataManager.get_default_data_structure(filename)
            return default_data, error_msg
        except Exception as e:
            error_msg = f"Unexpected error loading {filename}: {e}"
            DataManager.logger.error(error_msg)
            default_data = DataManager.get_default_data_structure(filename)
            return default_data, error_msg

    @staticmethod
    def get_default_data_structure(filename: str) -> Any:
        """Get default data structure for a file type"""
        if os.path.basename(filename) == DEFAULT_SETTINGS_FILE:
            return json.loads(json.dumps(DEFAULT_SETTINGS))
        return {}

    @staticmethod
    def init_data_files():
        """Write the default settings file if it does not exist yet"""
        file_path = DataManager.get_file_path(DEFAULT_SETTINGS_FILE)
        if not os.path.exists(file_path):
            DataManager.save_data(DataManager.get_default_data_structure(DEFAULT_SETTINGS_FILE),
                                  DEFAULT_SETTINGS_FILE)


@dataclass
class RunConfig:
    """Typed run settings"""

    tau: complex = DEFAULT_TAU
    r: int = 1
    z0: complex = DEFAULT_Z0
    window: Tuple[int, int] = DEFAULT_WINDOW
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    source: str = "defaults"

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: str = "defaults") -> "RunConfig":
        is_valid, error = ConfigValidator.validate_settings(data)
        if not is_valid:
            raise ValidationError(error)
        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update({k: float(v) for k, v in data.get("tolerances", {}).items()})
        return cls(
            tau=decode_complex(data["tau"], "tau") if "tau" in data else DEFAULT_TAU,
            r=int(data.get("r", 1)),
            z0=decode_complex(data["z0"], "z0") if "z0" in data else DEFAULT_Z0,
            window=tuple(data.get("window", DEFAULT_WINDOW)),
            tolerances=tolerances,
            seed=int(data.get("seed", 0)),
            source=source,
        )

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES.get(name, 1e-9))

    def qparams(self) -> QParams:
        return QParams(self.tau, self.r, self.z0)

    def to_json(self) -> Dict[str, Any]:
        return {
            "tau": encode_complex(self.tau),
            "r": self.r,
            "z0": encode_complex(self.z0),
            "window": list(self.window),
            "tolerances": dict(sorted(self.tolerances.items())),
            "seed": self.seed,
        }


def load_run_config(path: Optional[str] = None) -> Tuple[RunConfig, str]:
    """
    Resolve the run settings: explicit path, then $QDX_CONFIG, then
    data/settings.json, then the built-in defaults

    Returns:
        Tuple of (config, error_message); on error the config holds the defaults
    """
    logger = DataManager.logger
    candidates = []
    if path:
        candidates.append(("--config", path))
    if os.environ.get(CONFIG_ENV_VAR):
        candidates.append((CONFIG_ENV_VAR, os.environ[CONFIG_ENV_VAR]))
    candidates.append(("settings", os.path.join(DATA_DIR, DEFAULT_SETTINGS_FILE)))

    for source, candidate in candidates:
        if not os.path.exists(candidate):
            if source != "settings":
                message = f"Config file {candidate} ({source}) not found"
                logger.error(message)
                return RunConfig(), message
            continue
        data, error = DataManager.load_data(candidate)
        if error:
            return RunConfig(), error
        is_valid, error = ConfigValidator.validate_settings(data)
        if not is_valid:
            logger.error(f"Invalid settings in {candidate}: {error}")
            return RunConfig(), error
        logger.info(f"Run configuration loaded from {candidate}")
        return RunConfig.from_dict(data, source), ""

    logger.info("No settings file found, using defaults")
    return RunConfig(), ""


def load_system(path: str, qp: QParams) -> BlockSystem:
    """Read a BlockSystem JSON file; raises ValidationError on any problem"""
    data, error = DataManager.load_data(path)
    if error:
        raise ValidationError(error)
    return BlockSystem.from_json(data, qp)


def load_operator(path: str) -> List[LaurentSeries]:
    """Read scalar operator coefficients a_0, ..., a_n stored under 'operator'"""
    data, error = DataManager.load_data(path)
    if error:
        raise ValidationError(error)
    if not isinstance(data, dict) or not isinstance(data.get("operator"), list):
        raise ValidationError("Operator files need an 'operator' list of Laurent series")
    return [LaurentSeries.from_json(entry) for entry in data["operator"]]
