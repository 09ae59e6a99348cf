# src/utils/config_utils.py
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from pydantic import BaseModel, ValidationError

from src.errors import ConfigurationError
from src.schemas import RunConfig

ROOT_KEYS = ["dt", "t_end", "seed", "preset", "initial_condition"]
SECTIONS = ["grid", "equation", "molecule", "ledger", "output"]


def _section_model(name: str) -> type[BaseModel]:
    annotation = RunConfig.model_fields[name].annotation
    # Optional[Model] -> Model
    for arg in getattr(annotation, "__args__", ()):
        if isinstance(arg, type) and issubclass(arg, BaseModel):
            return arg
    return annotation


def _check_keys(document: dict) -> None:
    for key, value in document.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigurationError(f"[{key}] must be a section")
            valid = list(_section_model(key).model_fields)
            unknown = sorted(set(value) - set(valid))
            if unknown:
                raise ConfigurationError(
                    f"unknown key(s) {', '.join(unknown)} in [{key}]; valid keys: {', '.join(valid)}"
                )
        elif key not in ROOT_KEYS:
            raise ConfigurationError(
                f"unknown key {key!r}; valid root keys: {', '.join(ROOT_KEYS)}; "
                f"valid sections: {', '.join(SECTIONS)}"
            )


def parse_config(text: str) -> RunConfig:
    """Parse a TOML run configuration and re-validate the molecule against the equation."""
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"malformed configuration: {e}") from e
    _check_keys(document)
    molecule = document.get("molecule")
    if molecule is not None and "x0" in molecule:
        molecule["x0"] = tuple(molecule["x0"])

    try:
        config = RunConfig(**document)
    except ValidationError as e:
        raise ConfigurationError(str(e)) from e

    if config.molecule is not None:
        # raises MoleculeConditionError naming the violated window
        config = config.model_copy(
            update={"molecule": config.molecule.validate_against(config.equation.alpha, config.grid.dim)}
        )
    return config


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def validate_config(path: str):
    try:
        config = load_config(path)
    except ConfigurationError as e:
        return False, str(e)
    return True, f"config valid (preset={config.preset or 'simulate'}, N={config.grid.points_per_axis})"
