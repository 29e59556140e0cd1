from datetime import datetime
from typing import Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """Provenance record written next to every command's outputs."""

    command: list[str]
    config: dict
    config_hash: str
    input_digests: dict[str, str] = Field(default_factory=dict)
    output_digests: dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    tool_version: str
    started_at: datetime
    wall_time_s: float = Field(ge=0)


class ManifestCheck(BaseModel):
    manifest: str
    mismatched: dict[str, str] = Field(default_factory=dict)  # path -> "missing" | "changed"

    @property
    def ok(self) -> bool:
        return not self.mismatched


class SimulationSettings(BaseModel):
    """Options of the synthetic dataset generator."""

    n: int = Field(default=200, ge=1)
    mean_degree: float = Field(default=5.0, ge=0)
    weight_max: int = Field(default=3, ge=1)
    source_fraction: float = Field(default=0.1, gt=0, le=1)
    hashtag: str = "MacronLeaks"
    start: datetime = datetime.fromisoformat("2017-05-05T18:00:00+00:00")
