"""End-to-end orchestration: dataset generation, training runs, fragment
error rate evaluation, and the benchmark sweep over propagation distances.

Dataset generation runs the full read channel per page:

    random_page -> render_page -> complex lift (on = 1+0j) -> propagate(z)
    -> record_hologram -> reconstruct(z) -> apply_channel -> slice_fragments

and stores fragments scaled to [0, 1] in the HMFRAG1 container. Every page
draws its own RNG from a 64-bit mix of (master seed, split tag, page
index), so generation is reproducible and pages are independent.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import datapage as dp
from . import nn
from .optics import ComplexField, IntensityImage, propagate, record_hologram, reconstruct

__all__ = [
    "WAVELENGTH",
    "PITCH",
    "ExperimentConfig",
    "FERReport",
    "page_seed",
    "generate_page",
    "generate_dataset",
    "run_training",
    "evaluate_fer",
    "run_benchmark",
    "write_fer_csv",
    "write_confusion_csv",
    "format_report_text",
    "write_pgm",
]

WAVELENGTH = 633e-9
PITCH = 4e-6

SPLIT_TRAIN = 0
SPLIT_TEST = 1

MODEL_CNN = "cnn"
MODEL_MLP = "mlp"
MODEL_TEMPLATE = "template"
MODELS = (MODEL_CNN, MODEL_MLP, MODEL_TEMPLATE)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that defines one simulated experiment."""

    geometry: dp.PageGeometry = field(default_factory=lambda: dp.PageGeometry(20))
    channel: dp.ChannelConfig = field(default_factory=lambda: dp.ChannelConfig(z=0.05))
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    train_pages: int = 30
    test_pages: int = 10
    model: str = MODEL_CNN
    filters1: int = 16
    filters2: int = 32
    dense_units: int = 128
    wavelength: float = WAVELENGTH
    pitch: float = PITCH

    def __post_init__(self):
        if self.train_pages < 1 or self.test_pages < 1:
            raise ValueError("train_pages and test_pages must be >= 1")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")

    def fingerprint(self) -> str:
        """Stable hash of the full configuration, including the fixed
        channel-model choices (noise after normalization, no cropping)."""
        payload = {
            "geometry": [self.geometry.fragments_per_side, self.geometry.fragment_px, self.geometry.cell_px],
            "channel": [self.channel.z, self.channel.noise_sigma, self.channel.max_shift_px, self.channel.seed],
            "shift_granularity": "fragment" if self.channel.shift_per_fragment else "page",
            "train": [self.train.batch_size, self.train.learning_rate, self.train.epochs,
                      self.train.dropout_pool, self.train.dropout_fc, self.train.seed],
            "pages": [self.train_pages, self.test_pages],
            "model": self.model,
            "widths": [self.filters1, self.filters2, self.dense_units],
            "optics": [self.wavelength, self.pitch],
            "noise_stage": "post-normalization",
            "cropping": "none",
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
        return digest[:16]


@dataclass
class FERReport:
    """Fragment error rate of one (channel, decoder) combination."""

    z: float
    model: str
    n_errors: int
    n_total: int
    confusion: np.ndarray
    wall_seconds: float
    fingerprint: str

    @property
    def fer(self) -> float:
        return self.n_errors / self.n_total

    def validate(self) -> None:
        if self.n_errors > self.n_total:
            raise ValueError("error count exceeds total count")
        if int(self.confusion.sum()) != self.n_total:
            raise ValueError("confusion matrix does not sum to the total count")
        off_diag = int(self.confusion.sum() - np.trace(self.confusion))
        if off_diag != self.n_errors:
            raise ValueError("confusion off-diagonal sum does not equal the error count")


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def page_seed(master_seed: int, split: int, page_index: int) -> int:
    """64-bit per-page seed: splitmix64 over (master, split tag, index).

    Train and test splits can never collide: the mix is a bijection of the
    (master, split, index) triple for each fixed master.
    """
    x = _splitmix64(master_seed & _MASK64)
    x = _splitmix64(x ^ ((split + 1) * 0xD6E8FEB86659FD93 & _MASK64))
    return _splitmix64(x ^ (page_index & _MASK64))


def generate_page(
    config: ExperimentConfig, split: int, page_index: int, return_images: bool = False
):
    """Run the full read channel for one page.

    Returns (pixels (F, fp, fp) float64 scaled to [0, 1], labels (F,)) and,
    when return_images is set, the clean rendered page and the degraded
    reconstruction as a third element (for report image dumps).

    With channel.shift_per_fragment (the default) each sliced fragment
    receives its own misalignment draw, in row-major fragment order;
    otherwise the whole page is shifted once inside apply_channel.
    """
    seed = page_seed(config.channel.seed, split, page_index)
    rng = np.random.default_rng(seed)
    page = dp.random_page(config.geometry, rng)
    rendered = dp.render_page(page)
    field_in = ComplexField(rendered.data.astype(np.complex128), pitch=config.pitch, wavelength=config.wavelength)
    hologram = record_hologram(propagate(field_in, config.channel.z))
    recon = reconstruct(hologram, config.channel.z)
    channel = config.channel
    if channel.shift_per_fragment:
        page_channel = dp.ChannelConfig(z=channel.z, noise_sigma=channel.noise_sigma,
                                        max_shift_px=0, seed=channel.seed)
        degraded, shift = dp.apply_channel(recon, page_channel, rng)
        fragments = dp.slice_fragments(degraded, page)
        pixels = np.stack([dp.shift_image(f.pixels, *dp.draw_shift(channel, rng)) for f in fragments]) / 255.0
    else:
        degraded, shift = dp.apply_channel(recon, channel, rng)
        fragments = dp.slice_fragments(degraded, page)
        pixels = np.stack([f.pixels for f in fragments]) / 255.0
    labels = np.array([f.label for f in fragments], dtype=np.uint8)
    if return_images:
        return pixels, labels, {"rendered": rendered, "reconstruction": recon, "degraded": degraded, "shift": shift}
    return pixels, labels


def _generate_split(config: ExperimentConfig, split: int, pages: int) -> tuple[np.ndarray, np.ndarray]:
    all_pixels = []
    all_labels = []
    for index in range(pages):
        pixels, labels = generate_page(config, split, index)
        all_pixels.append(pixels)
        all_labels.append(labels)
    return np.concatenate(all_pixels), np.concatenate(all_labels)


def generate_dataset(config: ExperimentConfig, train_path, test_path) -> dict:
    """Generate and write the train and test fragment datasets."""
    train_px, train_labels = _generate_split(config, SPLIT_TRAIN, config.train_pages)
    test_px, test_labels = _generate_split(config, SPLIT_TEST, config.test_pages)
    dp.write_fragments(train_path, train_px, train_labels)
    dp.write_fragments(test_path, test_px, test_labels)
    return {
        "train": str(train_path),
        "test": str(test_path),
        "train_count": len(train_labels),
        "test_count": len(test_labels),
    }


def _build_network(config: ExperimentConfig, rng: np.random.Generator, fragment_px: int) -> nn.Network:
    if config.model == MODEL_CNN:
        return nn.build_cnn(
            rng,
            filters1=config.filters1,
            filters2=config.filters2,
            dense_units=config.dense_units,
            dropout_pool=config.train.dropout_pool,
            dropout_fc=config.train.dropout_fc,
            fragment_px=fragment_px,
        )
    if config.model == MODEL_MLP:
        return nn.build_mlp(rng, dense_units=config.dense_units, fragment_px=fragment_px)
    raise ValueError("template decoder requires no training")


def run_training(
    config: ExperimentConfig,
    train_data_path,
    model_path,
    log_path=None,
) -> list[dict]:
    """Train the configured model on a fragment dataset.

    Shuffles with the seeded RNG each epoch, iterates minibatches of
    batch_size, and applies one Adam step per batch. Writes the model file
    plus its ".optstate" companion and, when log_path is given, a per-epoch
    CSV log of (epoch, mean loss, training accuracy). The logged accuracy
    comes from the training-mode forward passes (dropout active).
    """
    pixels, labels = dp.read_fragments(train_data_path)
    fp = pixels.shape[1]
    x = pixels.astype(np.float64).reshape(-1, 1, fp, fp)
    y = labels.astype(np.int64)

    rng = np.random.default_rng(config.train.seed)
    net = _build_network(config, rng)

    tc = config.train
    log_rows = []
    for epoch in range(tc.epochs):
        order = rng.permutation(len(x))
        total_loss = 0.0
        total_correct = 0
        for start in range(0, len(x), tc.batch_size):
            idx = order[start:start + tc.batch_size]
            probs = net.forward(x[idx], training=True, rng=rng)
            total_loss += nn.cross_entropy_loss(probs, y[idx]) * len(idx)
            total_correct += int((np.argmax(probs, axis=1) == y[idx]).sum())
            net.backward_from_logits(nn.cross_entropy_grad_logits(probs, y[idx]))
            nn.adam_step(net, net.grads(), tc.learning_rate)
        log_rows.append({
            "epoch": epoch + 1,
            "mean_loss": total_loss / len(x),
            "train_accuracy": total_correct / len(x),
        })

    nn.save_model(net, model_path)
    if getattr(net, "adam", None) is not None:
        nn.save_optstate(net, str(model_path) + ".optstate")
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss", "train_accuracy"])
            for row in log_rows:
                writer.writerow([row["epoch"], repr(row["mean_loss"]), repr(row["train_accuracy"])])
    return log_rows


def _predict_network(net: nn.Network, pixels: np.ndarray, batch: int = 512) -> np.ndarray:
    fp = pixels.shape[1]
    x = pixels.astype(np.float64).reshape(-1, 1, fp, fp)
    out = np.empty(len(x), dtype=np.int64)
    for start in range(0, len(x), batch):
        out[start:start + batch] = net.predict(x[start:start + batch])
    return out


def evaluate_fer(
    model: str | Path | nn.Network,
    test_data_path,
    z: float,
    fingerprint: str = "",
    model_name: str | None = None,
) -> FERReport:
    """Classify every test fragment and count exact-symbol mismatches.

    `model` is a model file path, an in-memory Network, or the string
    "template" for the non-learned nearest-template decoder.
    """
    pixels, labels = dp.read_fragments(test_data_path)
    start = time.perf_counter()
    if isinstance(model, str) and model == MODEL_TEMPLATE:
        predictions = dp.decode_fragments(pixels, cell_px=pixels.shape[1] // 2)
        name = MODEL_TEMPLATE
    else:
        net = model if isinstance(model, nn.Network) else nn.load_model(model)
        predictions = _predict_network(net, pixels)
        name = model_name or "network"
    wall = time.perf_counter() - start

    labels = labels.astype(np.int64)
    confusion = np.zeros((dp.NUM_SYMBOLS, dp.NUM_SYMBOLS), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    n_errors = int((predictions != labels).sum())
    report = FERReport(
        z=z,
        model=model_name or name,
        n_errors=n_errors,
        n_total=len(labels),
        confusion=confusion,
        wall_seconds=wall,
        fingerprint=fingerprint,
    )
    report.validate()
    return report


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM dump of a 2-D array, min-max scaled to 0-255."""
    a = dp.minmax_normalize(np.asarray(image, dtype=np.float64), 255.0)
    a = np.rint(a).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode())
        fh.write(a.tobytes())


def write_fer_csv(reports: list[FERReport], path) -> None:
    """Machine-readable sweep results. Deliberately excludes wall-clock
    times so identical configurations produce byte-identical files."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z_m", "model", "n_errors", "n_total", "fer", "config"])
        for r in reports:
            writer.writerow([repr(r.z), r.model, r.n_errors, r.n_total, repr(r.fer), r.fingerprint])


def write_confusion_csv(report: FERReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + [str(j) for j in range(dp.NUM_SYMBOLS)])
        for i in range(dp.NUM_SYMBOLS):
            writer.writerow([str(i)] + [int(v) for v in report.confusion[i]])


def format_report_text(reports: list[FERReport]) -> str:
    """Aligned human-readable table, including wall-clock seconds."""
    lines = [f"{'z (m)':>8}  {'model':<10}{'errors':>8}{'total':>8}  {'FER':>12}  {'eval s':>8}  config"]
    for r in reports:
        lines.append(
            f"{r.z:>8.3f}  {r.model:<10}{r.n_errors:>8}{r.n_total:>8}  {r.fer:>12.4e}  {r.wall_seconds:>8.2f}  {r.fingerprint}"
        )
    return "\n".join(lines) + "\n"


def run_benchmark(base: ExperimentConfig, z_list: list[float], out_dir) -> list[FERReport]:
    """Sweep propagation distances: per z, generate datasets, train the CNN
    and the MLP, and evaluate all three decoders on the test split.

    Writes, under out_dir: per-z datasets, model files and training logs,
    sample page images (clean render, reconstruction, degraded sensor
    image), per-combination confusion matrices, a combined fer.csv, and a
    human-readable report.txt.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: list[FERReport] = []
    for z in z_list:
        ztag = f"z{z:g}"
        channel = replace(base.channel, z=z)
        train_path = out_dir / f"train_{ztag}.hmfrag"
        test_path = out_dir / f"test_{ztag}.hmfrag"

        for model in (MODEL_CNN, MODEL_MLP):
            cfg = ExperimentConfig(
                geometry=base.geometry, channel=channel, train=base.train,
                train_pages=base.train_pages, test_pages=base.test_pages, model=model,
                filters1=base.filters1, filters2=base.filters2, dense_units=base.dense_units,
                wavelength=base.wavelength, pitch=base.pitch,
            )
            if model == MODEL_CNN:
                generate_dataset(cfg, train_path, test_path)
                _, _, images = generate_page(cfg, SPLIT_TEST, 0, return_images=True)
                write_pgm(out_dir / f"render_{ztag}.pgm", images["rendered"].data)
                write_pgm(out_dir / f"reconstruction_{ztag}.pgm", images["reconstruction"].data)
                write_pgm(out_dir / f"degraded_{ztag}.pgm", images["degraded"].data)
            model_path = out_dir / f"{model}_{ztag}.hmnet"
            run_training(cfg, train_path, model_path, log_path=out_dir / f"{model}_{ztag}_log.csv")
            report = evaluate_fer(model_path, test_path, z=z, fingerprint=cfg.fingerprint(), model_name=model)
            reports.append(report)
            write_confusion_csv(report, out_dir / f"confusion_{model}_{ztag}.csv")

        tcfg = ExperimentConfig(
            geometry=base.geometry, channel=channel, train=base.train,
            train_pages=base.train_pages, test_pages=base.test_pages, model=MODEL_TEMPLATE,
            filters1=base.filters1, filters2=base.filters2, dense_units=base.dense_units,
            wavelength=base.wavelength, pitch=base.pitch,
        )
        report = evaluate_fer(MODEL_TEMPLATE, test_path, z=z, fingerprint=tcfg.fingerprint())
        reports.append(report)
        write_confusion_csv(report, out_dir / f"confusion_template_{ztag}.csv")

    write_fer_csv(reports, out_dir / "fer.csv")
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(format_report_text(reports))
    return reports
