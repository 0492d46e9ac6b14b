"""SVG charts for scenario and transfer reports."""

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..errors import IoFailure
from .report import BenchReport
from .transfer import mean_by_packets

SCENARIO_SERIES = (
    ("client_setup_ms", "client setup"),
    ("server_setup_ms", "server setup"),
    ("client_identification_ms", "client identification"),
    ("server_identification_ms", "server identification"),
)


def _save(figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        figure.savefig(path, format="svg", bbox_inches="tight")
    except OSError as exc:
        raise IoFailure(f"cannot write chart {path}: {exc}") from exc
    finally:
        plt.close(figure)
    return path


def plot_scenarios(reports: Sequence[BenchReport], path: Union[str, Path]) -> Path:
    """Grouped bars of mean durations per scenario."""
    figure, axis = plt.subplots(figsize=(max(6, 1.2 * len(reports)), 4))
    labels = [r.scenario for r in reports]
    width = 0.8 / len(SCENARIO_SERIES)
    for i, (column, label) in enumerate(SCENARIO_SERIES):
        means = [r.summary[column].mean if column in r.summary else 0.0 for r in reports]
        if not any(means):
            continue
        positions = [x + i * width for x in range(len(reports))]
        axis.bar(positions, means, width=width, label=label)
    axis.set_xticks([x + 0.4 - width / 2 for x in range(len(reports))], labels)
    axis.set_ylabel("mean duration (ms)")
    axis.set_xlabel("scenario")
    axis.legend()
    return _save(figure, path)


def plot_transfer(session: BenchReport, envelope: BenchReport, path: Union[str, Path]) -> Path:
    """Bytes and wall-clock against packet count for both arms."""
    figure, (bytes_axis, time_axis) = plt.subplots(1, 2, figsize=(10, 4))
    for report, label in ((session, "DID Link session"), (envelope, "per-message envelope")):
        by_bytes = mean_by_packets(report, "bytes")
        by_time = mean_by_packets(report, "wall_ms")
        bytes_axis.plot(list(by_bytes), [b / 1000 for b in by_bytes.values()], marker="o", label=label)
        time_axis.plot(list(by_time), list(by_time.values()), marker="o", label=label)
    bytes_axis.set_xlabel("packets")
    bytes_axis.set_ylabel("kB on the wire")
    time_axis.set_xlabel("packets")
    time_axis.set_ylabel("wall-clock (ms)")
    bytes_axis.legend()
    figure.suptitle(f"payload {session.parameters.get('payload_size')} B")
    return _save(figure, path)
