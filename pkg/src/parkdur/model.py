"""Model file: network weights plus everything needed to encode, scale and
explain new records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dataset import DURATION_CLASSES, Transform
from .explain import TrainingStats
from .network import Network

FORMAT = "parkdur-model/1"


class ModelFileError(ValueError):
    pass


@dataclass
class ModelBundle:
    network: Network
    transform: Transform
    stats: TrainingStats
    seed: int = 0
    config: dict = field(default_factory=dict)
    class_labels: tuple = DURATION_CLASSES

    def to_dict(self):
        doc = {"format": FORMAT}
        doc.update(self.network.to_dict())
        tf = self.transform.to_dict()
        doc.update({
            "columns": self.transform.columns,
            "schema": tf["schema"],
            "encoding": tf["encoding"],
            "scaling": tf["scaling"],
            "class_labels": list(self.class_labels),
            "seed": self.seed,
            "config": self.config,
            "training_stats": self.stats.to_dict(),
        })
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, doc) -> "ModelBundle":
        try:
            if doc.get("format") != FORMAT:
                raise ModelFileError(f"unsupported model format {doc.get('format')!r}")
            net = Network.from_dict(doc)
            tf = Transform.from_dict(doc)
            if tf.columns != doc["columns"] or len(tf.columns) != net.d_in:
                raise ModelFileError("encoding does not match the network input width")
            return cls(net, tf, TrainingStats.from_dict(doc["training_stats"]),
                       int(doc.get("seed", 0)), dict(doc.get("config", {})),
                       tuple(doc.get("class_labels", DURATION_CLASSES)))
        except ModelFileError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ModelFileError(f"corrupt model file: {exc!r}") from exc

    @classmethod
    def load(cls, path) -> "ModelBundle":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"model file is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)
