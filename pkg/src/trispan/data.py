"""Dataset model: on-disk formats, validation, the time/token span map,
and a synthetic-sample generator for desk-scale training.

On disk a dataset is a directory with a `manifest.json` naming, per video,
the raw `.f32` feature payloads (little-endian float32, row-major), a
subtitle-span table, and a QA table. See FORMAT.md at the repo root for a
byte-level description.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MappingError, ValidationError

FORMAT_VERSION = 1

MODALITIES = ("visual", "audio", "textual")
LANGUAGES = ("zh", "en")


@dataclass
class FeatureSequence:
    """One modality's [length, dim] feature matrix.

    `time_step_s` is the seconds covered by one position; it is required
    for visual/audio sequences and must be absent for textual ones.
    """

    modality: str
    values: np.ndarray
    time_step_s: float | None = None

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def validate(self, context=""):
        where = f" ({context})" if context else ""
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}{where}")
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValidationError(
                f"{self.modality} features must be a non-empty matrix, got shape "
                f"{self.values.shape}{where}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"{self.modality} features hold non-finite values{where}")
        if self.modality == "textual":
            if self.time_step_s is not None:
                raise ValidationError(f"textual features must not carry a time step{where}")
        else:
            if self.time_step_s is None or self.time_step_s <= 0:
                raise ValidationError(
                    f"{self.modality} features need a positive time step, got "
                    f"{self.time_step_s!r}{where}"
                )
        return self


@dataclass(frozen=True)
class SubtitleToken:
    token_index: int
    start_s: float
    end_s: float


class TimeSpanMap:
    """Bidirectional mapping between video timestamps and subtitle tokens.

    Entries are sorted, non-overlapping spans; gaps between spans are
    legal and map to the nearest token by segment distance.
    """

    def __init__(self, entries):
        self.entries = list(entries)
        self._validate()
        self._by_index = {e.token_index: e for e in self.entries}
        self._starts = np.array([e.start_s for e in self.entries])
        self._ends = np.array([e.end_s for e in self.entries])

    def _validate(self):
        prev = None
        for e in self.entries:
            if not 0 <= e.start_s <= e.end_s:
                raise ValidationError(
                    f"subtitle token {e.token_index} has invalid span [{e.start_s}, {e.end_s}]"
                )
            if prev is not None:
                if e.token_index <= prev.token_index:
                    raise ValidationError(
                        f"subtitle token indices not strictly increasing at {e.token_index}"
                    )
                if e.start_s < prev.end_s:
                    raise ValidationError(
                        f"subtitle spans overlap: token {prev.token_index} ends at "
                        f"{prev.end_s}, token {e.token_index} starts at {e.start_s}"
                    )
            prev = e

    def __len__(self):
        return len(self.entries)

    def token_indices(self):
        return [e.token_index for e in self.entries]

    def time_to_token(self, t_seconds):
        """Token whose span is nearest to `t_seconds` (0 distance inside a
        span, else gap to the closest edge); ties resolve to the earlier token."""
        if not self.entries:
            raise MappingError("time_to_token on an empty span map")
        dist = np.maximum(self._starts - t_seconds, 0) + np.maximum(
            t_seconds - self._ends, 0
        )
        return self.entries[int(dist.argmin())].token_index

    def clamp_token(self, token_index):
        """Nearest token index that actually has an entry (ties go earlier).

        Predictors may emit positions without a subtitle entry when the
        token axis is only partially covered; conversions snap those to
        the closest mapped token instead of failing mid-training.
        """
        if not self.entries:
            raise MappingError("clamp_token on an empty span map")
        if token_index in self._by_index:
            return token_index
        indices = np.array([e.token_index for e in self.entries])
        return int(indices[np.abs(indices - token_index).argmin()])

    def token_to_time(self, token_index, endpoint):
        if endpoint not in ("start", "end"):
            raise ValidationError(f"endpoint must be 'start' or 'end', got {endpoint!r}")
        entry = self._by_index.get(token_index)
        if entry is None:
            raise MappingError(f"token {token_index} not present in span map")
        return entry.start_s if endpoint == "start" else entry.end_s

    def to_records(self):
        return [[e.token_index, e.start_s, e.end_s] for e in self.entries]

    @classmethod
    def from_records(cls, records):
        return cls(SubtitleToken(int(i), float(s), float(e)) for i, s, e in records)


def time_to_token(tsm: TimeSpanMap, t_seconds):
    return tsm.time_to_token(t_seconds)


def token_to_time(tsm: TimeSpanMap, token_index, endpoint):
    return tsm.token_to_time(token_index, endpoint)


def quantize_time_to_grid(t_seconds, time_step_s, grid_len):
    """Nearest grid index for a timestamp, clamped into [0, grid_len)."""
    return int(np.clip(round(t_seconds / time_step_s), 0, grid_len - 1))


@dataclass
class QAInstance:
    question_id: str
    gt_start_s: float
    gt_end_s: float
    language: str
    textual: FeatureSequence

    def validate(self, duration_s, video_id):
        ctx = f"video {video_id}, question {self.question_id}"
        if self.language not in LANGUAGES:
            raise ValidationError(f"unknown language {self.language!r} ({ctx})")
        if not 0 <= self.gt_start_s < self.gt_end_s <= duration_s + 1e-9:
            raise ValidationError(
                f"answer span [{self.gt_start_s}, {self.gt_end_s}] outside "
                f"[0, {duration_s}] ({ctx})"
            )
        self.textual.validate(ctx)
        return self


@dataclass
class VideoSample:
    video_id: str
    visual: FeatureSequence
    audio: FeatureSequence
    tsm: TimeSpanMap
    qa: list[QAInstance]
    duration_s: float

    def validate(self):
        self.visual.validate(f"video {self.video_id}")
        self.audio.validate(f"video {self.video_id}")
        if self.visual.modality != "visual" or self.audio.modality != "audio":
            raise ValidationError(f"modality mislabel in video {self.video_id}")
        covered = self.visual.length * self.visual.time_step_s
        if abs(covered - self.duration_s) > self.visual.time_step_s + 1e-9:
            raise ValidationError(
                f"visual grid covers {covered:.3f}s but duration is "
                f"{self.duration_s:.3f}s (video {self.video_id})"
            )
        if self.tsm.entries:
            max_end = max(e.end_s for e in self.tsm.entries)
            if max_end > self.duration_s + 1e-9:
                raise ValidationError(
                    f"subtitle span ends at {max_end}s beyond duration "
                    f"{self.duration_s}s (video {self.video_id})"
                )
        for qa in self.qa:
            qa.validate(self.duration_s, self.video_id)
            for e in self.tsm.entries:
                if not 0 <= e.token_index < qa.textual.length:
                    raise ValidationError(
                        f"subtitle token {e.token_index} outside textual length "
                        f"{qa.textual.length} (video {self.video_id}, "
                        f"question {qa.question_id})"
                    )
        return self


@dataclass
class DatasetManifest:
    split: str
    videos: list[VideoSample] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def all_qa(self):
        """Flat iteration over (video, qa) pairs in manifest order."""
        for video in self.videos:
            for qa in video.qa:
                yield video, qa

    def n_samples(self):
        return sum(len(v.qa) for v in self.videos)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _write_payload(path: Path, values: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(values, dtype="<f4").tobytes())


def _read_payload(path: Path, length, dim, video_id):
    if not path.is_file():
        raise ValidationError(f"missing feature payload {path} (video {video_id})")
    raw = path.read_bytes()
    expected = length * dim * 4
    if len(raw) != expected:
        raise ValidationError(
            f"payload {path} holds {len(raw)} bytes, expected {expected} "
            f"({length}x{dim} float32, video {video_id})"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(length, dim).copy()


def save_dataset(manifest: DatasetManifest, root):
    """Write a fully materialized dataset under `root`; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    index = {"format_version": manifest.format_version, "split": manifest.split, "videos": []}
    for video in manifest.videos:
        vdir = Path("videos") / video.video_id
        entry = {
            "video_id": video.video_id,
            "duration_s": video.duration_s,
            "visual": {
                "path": str(vdir / "visual.f32"),
                "length": video.visual.length,
                "dim": video.visual.dim,
                "time_step_s": video.visual.time_step_s,
            },
            "audio": {
                "path": str(vdir / "audio.f32"),
                "length": video.audio.length,
                "dim": video.audio.dim,
                "time_step_s": video.audio.time_step_s,
            },
            "subtitles": str(vdir / "subtitles.json"),
            "qa": str(vdir / "qa.json"),
        }
        _write_payload(root / vdir / "visual.f32", video.visual.values)
        _write_payload(root / vdir / "audio.f32", video.audio.values)
        (root / vdir / "subtitles.json").write_text(
            json.dumps(video.tsm.to_records(), indent=0)
        )
        qa_records = []
        for n, qa in enumerate(video.qa):
            text_rel = vdir / f"qa{n:03d}_text.f32"
            _write_payload(root / text_rel, qa.textual.values)
            qa_records.append(
                {
                    "question_id": qa.question_id,
                    "gt_start_s": qa.gt_start_s,
                    "gt_end_s": qa.gt_end_s,
                    "language": qa.language,
                    "textual": {
                        "path": str(text_rel),
                        "length": qa.textual.length,
                        "dim": qa.textual.dim,
                    },
                }
            )
        (root / vdir / "qa.json").write_text(json.dumps(qa_records, indent=1))
        index["videos"].append(entry)
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(index, indent=1))
    return manifest_path


def load_manifest(path) -> DatasetManifest:
    """Load and eagerly validate a dataset; raises on the first violation.

    Nothing partially loaded escapes: either every payload and table checks
    out or a ValidationError names the offending video and file.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ValidationError(f"manifest not found at {path}")
    try:
        index = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
    version = index.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported dataset format version {version!r}")
    split = index.get("split")
    if split not in ("train", "valid", "test"):
        raise ValidationError(f"unknown split {split!r}")
    root = path.parent
    videos = []
    seen_ids = set()
    for entry in index.get("videos", []):
        vid = entry.get("video_id")
        if not vid or vid in seen_ids:
            raise ValidationError(f"missing or duplicate video_id {vid!r}")
        seen_ids.add(vid)
        visual = FeatureSequence(
            "visual",
            _read_payload(
                root / entry["visual"]["path"],
                entry["visual"]["length"],
                entry["visual"]["dim"],
                vid,
            ),
            time_step_s=entry["visual"]["time_step_s"],
        )
        audio = FeatureSequence(
            "audio",
            _read_payload(
                root / entry["audio"]["path"],
                entry["audio"]["length"],
                entry["audio"]["dim"],
                vid,
            ),
            time_step_s=entry["audio"]["time_step_s"],
        )
        sub_path = root / entry["subtitles"]
        if not sub_path.is_file():
            raise ValidationError(f"missing subtitle table {sub_path} (video {vid})")
        try:
            tsm = TimeSpanMap.from_records(json.loads(sub_path.read_text()))
        except ValidationError as exc:
            raise ValidationError(f"{exc} (video {vid})") from exc
        qa_path = root / entry["qa"]
        if not qa_path.is_file():
            raise ValidationError(f"missing QA table {qa_path} (video {vid})")
        qa_list = []
        for rec in json.loads(qa_path.read_text()):
            textual = FeatureSequence(
                "textual",
                _read_payload(
                    root / rec["textual"]["path"],
                    rec["textual"]["length"],
                    rec["textual"]["dim"],
                    vid,
                ),
            )
            qa_list.append(
                QAInstance(
                    question_id=rec["question_id"],
                    gt_start_s=float(rec["gt_start_s"]),
                    gt_end_s=float(rec["gt_end_s"]),
                    language=rec["language"],
                    textual=textual,
                )
            )
        video = VideoSample(
            video_id=vid,
            visual=visual,
            audio=audio,
            tsm=tsm,
            qa=qa_list,
            duration_s=float(entry["duration_s"]),
        )
        video.validate()
        videos.append(video)
    return DatasetManifest(split=split, videos=videos, format_version=version)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def resample_audio_to_video_grid(audio: FeatureSequence, target_len) -> FeatureSequence:
    """Linearly interpolate an audio sequence onto `target_len` positions.

    Interpolation never extrapolates, so per-channel min/max bounds are
    preserved; length 1 sources broadcast.
    """
    if target_len < 1:
        raise ValidationError(f"resample target length must be >= 1, got {target_len}")
    src = audio.values
    n = src.shape[0]
    if n == target_len:
        out = src.copy()
    elif n == 1:
        out = np.tile(src, (target_len, 1))
    else:
        pos = np.linspace(0.0, n - 1.0, target_len)
        lo = np.clip(np.floor(pos).astype(int), 0, n - 2)
        frac = (pos - lo)[:, None].astype(src.dtype)
        out = src[lo] * (1 - frac) + src[lo + 1] * frac
    step = None
    if audio.time_step_s is not None:
        step = audio.time_step_s * n / target_len
    return FeatureSequence("audio", out.astype(src.dtype), time_step_s=step)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    """Knobs of the synthetic dataset generator.

    Each video gets a planted answer span aligned to subtitle-token
    boundaries; inside the span all three modalities carry a shared
    low-rank pattern correlated with the question vector, on top of
    Gaussian noise. Per-modality strength multipliers mirror how
    informative each stream tends to be (text > audio > visual).
    """

    n_videos: int = 8
    v_len_range: tuple = (24, 40)
    t_len_range: tuple = (12, 20)
    d_visual: int = 24
    d_audio: int = 16
    d_textual: int = 20
    time_step_s: float = 1.0
    audio_step_s: float = 0.45
    answer_signal_strength: float = 2.0
    visual_strength_scale: float = 0.55
    audio_strength_scale: float = 1.0
    textual_strength_scale: float = 1.6
    noise_sigma: float = 0.5
    gap_fraction: float = 0.0
    qa_per_video: int = 1
    signal_rank: int = 4
    split: str = "train"
    seed: int = 0

    def validate(self):
        if self.n_videos < 1:
            raise ValidationError("n_videos must be >= 1")
        for name, rng_ in (("v_len_range", self.v_len_range), ("t_len_range", self.t_len_range)):
            lo, hi = rng_
            if not (1 <= lo <= hi):
                raise ValidationError(f"degenerate {name}: {rng_}")
        if not 0 <= self.gap_fraction < 1:
            raise ValidationError(f"gap_fraction must be in [0, 1), got {self.gap_fraction}")
        if self.noise_sigma < 0 or self.answer_signal_strength < 0:
            raise ValidationError("noise_sigma and answer_signal_strength must be >= 0")
        if min(self.d_visual, self.d_audio, self.d_textual) < self.signal_rank:
            raise ValidationError("signal_rank exceeds a feature dim")
        return self


def _uniform_token_spans(t_len, duration_s, gap_fraction):
    slot = duration_s / t_len
    width = slot * (1.0 - gap_fraction)
    margin = (slot - width) / 2.0
    entries = []
    for j in range(t_len):
        start = j * slot + margin
        entries.append(SubtitleToken(j, start, start + width))
    if gap_fraction == 0.0:
        # exact tiling: rebuild from shared boundaries so spans touch bitwise
        bounds = [j * slot for j in range(t_len)] + [duration_s]
        entries = [SubtitleToken(j, bounds[j], bounds[j + 1]) for j in range(t_len)]
    return entries


def synth_generate(config: SynthConfig, out_dir=None) -> DatasetManifest:
    """Build a synthetic dataset; writes it under `out_dir` when given."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    basis = {
        "visual": rng.normal(size=(config.signal_rank, config.d_visual)),
        "audio": rng.normal(size=(config.signal_rank, config.d_audio)),
        "textual": rng.normal(size=(config.signal_rank, config.d_textual)),
    }
    basis = {k: v / np.linalg.norm(v, axis=1, keepdims=True) for k, v in basis.items()}
    scales = {
        "visual": config.visual_strength_scale,
        "audio": config.audio_strength_scale,
        "textual": config.textual_strength_scale,
    }
    videos = []
    for vi in range(config.n_videos):
        v_len = int(rng.integers(config.v_len_range[0], config.v_len_range[1] + 1))
        t_len = int(rng.integers(config.t_len_range[0], config.t_len_range[1] + 1))
        duration = v_len * config.time_step_s
        a_len = max(1, round(duration / config.audio_step_s))
        entries = _uniform_token_spans(t_len, duration, config.gap_fraction)
        tsm = TimeSpanMap(entries)

        visual = rng.normal(scale=config.noise_sigma, size=(v_len, config.d_visual))
        audio = rng.normal(scale=config.noise_sigma, size=(a_len, config.d_audio))

        qa_list = []
        for qi in range(config.qa_per_video):
            span_len = int(rng.integers(max(1, t_len // 4), max(2, t_len // 2) + 1))
            j_start = int(rng.integers(0, t_len - span_len + 1))
            j_end = j_start + span_len - 1
            gt_start = entries[j_start].start_s
            gt_end = entries[j_end].end_s
            question = rng.normal(size=config.signal_rank)
            question /= np.linalg.norm(question)

            textual = rng.normal(scale=config.noise_sigma, size=(t_len, config.d_textual))
            strength = config.answer_signal_strength
            sig = {m: strength * scales[m] * (question @ basis[m]) for m in MODALITIES}

            v_times = np.arange(v_len) * config.time_step_s
            visual[(v_times >= gt_start) & (v_times <= gt_end)] += sig["visual"]
            a_times = np.arange(a_len) * config.audio_step_s
            audio[(a_times >= gt_start) & (a_times <= gt_end)] += sig["audio"]
            textual[j_start : j_end + 1] += sig["textual"]

            qa_list.append(
                QAInstance(
                    question_id=f"vid{vi:04d}_q{qi}",
                    gt_start_s=float(gt_start),
                    gt_end_s=float(gt_end),
                    language=LANGUAGES[(vi + qi) % 2],
                    textual=FeatureSequence("textual", textual.astype(np.float32)),
                )
            )

        videos.append(
            VideoSample(
                video_id=f"vid{vi:04d}",
                visual=FeatureSequence(
                    "visual", visual.astype(np.float32), time_step_s=config.time_step_s
                ),
                audio=FeatureSequence(
                    "audio", audio.astype(np.float32), time_step_s=config.audio_step_s
                ),
                tsm=tsm,
                qa=qa_list,
                duration_s=duration,
            ).validate()
        )
    manifest = DatasetManifest(split=config.split, videos=videos)
    if out_dir is not None:
        save_dataset(manifest, out_dir)
    return manifest
