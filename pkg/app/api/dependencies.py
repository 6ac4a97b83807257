"""Loaders for pipeline artifacts; a missing artifact names the stage that makes it."""
from pathlib import Path
from typing import Optional, Tuple

from app.a2m.sync import SyncScorer
from app.adapt.renderer import GenericRenderer
from app.models.errors import StageError
from app.nn.transformer import VelocityModel
from app.services.archive import Archive
from app.services.checkpoints import load_a2m_checkpoint, load_renderer, load_sync_scorer
from app.services.datasets import load_identity_world, load_speaker_dataset
from app.settings.config import RunConfig
from app.synth.identities import IdentityWorld
from app.synth.speakers import SpeakerDataset
from app.utils.logging import setup_logger

logger = setup_logger("Dependencies")


def _require(path: Path, stage: str, what: str) -> Path:
    if not path.exists():
        logger.critical(f"Missing {what}", extra={"path": str(path), "stage": stage})
        raise StageError(stage, f"{what} not found at {path}")
    return path


def get_speaker_dataset(config: RunConfig) -> SpeakerDataset:
    return load_speaker_dataset(_require(config.paths.speakers, "gen-data", "speaker dataset"))


def get_identity_world(config: RunConfig) -> IdentityWorld:
    return load_identity_world(_require(config.paths.identities, "gen-data", "identity world"))


def get_sync_scorer(config: RunConfig) -> SyncScorer:
    return load_sync_scorer(_require(config.paths.sync, "train-sync", "sync scorer checkpoint"))


def find_sync_scorer(config: RunConfig) -> Optional[SyncScorer]:
    """The scorer when one has been trained, else None"""
    return load_sync_scorer(config.paths.sync) if config.paths.sync.exists() else None


def get_a2m_model(config: RunConfig, path: Optional[Path] = None) -> Tuple[VelocityModel, Archive]:
    return load_a2m_checkpoint(_require(path or config.paths.a2m, "train-a2m", "audio-to-motion checkpoint"))


def get_renderer(config: RunConfig) -> GenericRenderer:
    return load_renderer(_require(config.paths.renderer, "adapt", "pretrained renderer"))
