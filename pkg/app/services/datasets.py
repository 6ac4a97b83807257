"""Dataset, audio, prompt and motion files on top of the archive codec."""
import json
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from app.models.errors import ArchiveError, DimensionError
from app.models.schemas import D_AUDIO, D_MOTION, Manifest, StylePrompt, SyntheticIdentity, SyntheticSpeaker
from app.services.archive import Archive, load_archive, save_archive
from app.synth.identities import IdentityWorld
from app.synth.speakers import Clip, SpeakerDataset
from app.utils.files import PathLike, atomic_write_text

KIND_SPEAKERS = "speakers"
KIND_IDENTITIES = "identities"
KIND_AUDIO = "audio"
KIND_PROMPT = "prompt"
KIND_MOTION = "motion"


def _meta(kind: str, config_echo: Optional[str], **extra: Any) -> Dict[str, Any]:
    meta: Dict[str, Any] = {"kind": kind, **extra}
    if config_echo is not None:
        meta["config"] = config_echo
    return meta


def save_speaker_dataset(path: PathLike, dataset: SpeakerDataset, seed: int, config_echo: Optional[str] = None) -> Path:
    speakers, clips = dataset.speakers, dataset.clips
    arrays = {
        "articulation": dataset.articulation,
        "speakers.gain": np.stack([s.gain for s in speakers]),
        "speakers.offset": np.stack([s.offset for s in speakers]),
        "speakers.tau": np.array([s.tau for s in speakers], dtype=np.float64),
        "clips.audio": np.stack([c.audio for c in clips]),
        "clips.motion": np.stack([c.motion for c in clips]),
        "clips.speaker": np.array([c.speaker_id for c in clips], dtype=np.float64),
        "clips.held_out": np.array([c.held_out for c in clips], dtype=np.float64),
    }
    return save_archive(path, Archive(seed=seed, meta=_meta(KIND_SPEAKERS, config_echo), arrays=arrays))


def load_speaker_dataset(path: PathLike) -> SpeakerDataset:
    archive = load_archive(path, KIND_SPEAKERS)
    articulation = archive.require("articulation")
    gains, offsets, taus = archive.require("speakers.gain"), archive.require("speakers.offset"), archive.require("speakers.tau")
    speakers = [
        SyntheticSpeaker(speaker_id=i, gain=gains[i], offset=offsets[i], tau=int(taus[i]), articulation=articulation)
        for i in range(gains.shape[0])
    ]
    audio, motion = archive.require("clips.audio"), archive.require("clips.motion")
    owners, held = archive.require("clips.speaker"), archive.require("clips.held_out")
    clips = [
        Clip(speaker_id=int(owners[k]), audio=audio[k], motion=motion[k], held_out=bool(held[k]))
        for k in range(audio.shape[0])
    ]
    return SpeakerDataset(speakers=speakers, clips=clips, seed=archive.seed, articulation=articulation)


def save_identity_world(path: PathLike, world: IdentityWorld, seed: int, config_echo: Optional[str] = None) -> Path:
    ids = world.identities
    arrays = {
        "identities.vector": np.stack([i.vector for i in ids]),
        "identities.open_gain": np.array([i.open_gain for i in ids]),
        "identities.skew": np.array([i.skew for i in ids]),
        "identities.jaw_drop": np.array([i.jaw_drop for i in ids]),
        "frames": world.frames,
        "conditions": world.conditions,
    }
    return save_archive(path, Archive(seed=seed, meta=_meta(KIND_IDENTITIES, config_echo), arrays=arrays))


def load_identity_world(path: PathLike) -> IdentityWorld:
    archive = load_archive(path, KIND_IDENTITIES)
    vectors = archive.require("identities.vector")
    open_gain, skew, jaw = (archive.require(f"identities.{k}") for k in ("open_gain", "skew", "jaw_drop"))
    identities = [
        SyntheticIdentity(identity_id=i, vector=vectors[i], open_gain=float(open_gain[i]), skew=float(skew[i]), jaw_drop=float(jaw[i]))
        for i in range(vectors.shape[0])
    ]
    return IdentityWorld(identities=identities, frames=archive.require("frames"), conditions=archive.require("conditions"))


def save_audio(path: PathLike, audio: np.ndarray, seed: int) -> Path:
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 2 or audio.shape[1] != D_AUDIO:
        raise DimensionError(f"audio must be (frames, {D_AUDIO}), got {audio.shape}")
    return save_archive(path, Archive(seed=seed, meta=_meta(KIND_AUDIO, None), arrays={"audio": audio}))


def load_audio(path: PathLike) -> np.ndarray:
    audio = load_archive(path, KIND_AUDIO).require("audio")
    if audio.ndim != 2 or audio.shape[1] != D_AUDIO:
        raise DimensionError(f"audio must be (frames, {D_AUDIO}), got {audio.shape}")
    return audio


def save_prompt(path: PathLike, prompt: StylePrompt, seed: int) -> Path:
    arrays = {"audio": prompt.prompt_audio, "motion": prompt.prompt_motion}
    return save_archive(path, Archive(seed=seed, meta=_meta(KIND_PROMPT, None), arrays=arrays))


def load_prompt(path: PathLike) -> StylePrompt:
    """
    Raises:
        DimensionError: If the prompt audio and motion are misaligned
    """
    archive = load_archive(path, KIND_PROMPT)
    audio, motion = archive.require("audio"), archive.require("motion")
    if audio.ndim != 2 or motion.ndim != 2 or audio.shape[0] != motion.shape[0] or motion.shape[1] != D_MOTION:
        raise DimensionError(f"prompt audio {audio.shape} and motion {motion.shape} are misaligned")
    return StylePrompt(prompt_audio=audio, prompt_motion=motion)


def save_motion(path: PathLike, motion: np.ndarray, seed: int, meta: Dict[str, Any]) -> Path:
    return save_archive(path, Archive(seed=seed, meta=_meta(KIND_MOTION, None, **meta), arrays={"motion": motion}))


def load_motion(path: PathLike) -> Archive:
    return load_archive(path, KIND_MOTION)


def write_manifest(path: PathLike, manifest: Manifest) -> Path:
    return atomic_write_text(path, json.dumps(manifest.model_dump(), sort_keys=True, indent=2) + "\n")


def load_manifest(path: PathLike) -> Manifest:
    try:
        return Manifest.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError) as e:
        raise ArchiveError(f"cannot read manifest {path}: {e}") from e
