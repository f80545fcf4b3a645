from pydantic import BaseModel, ConfigDict


class ConfigModel(BaseModel):
    """Base for configuration sections: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)
