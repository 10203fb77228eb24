"""Versioned JSON persistence for trained model bundles.

A bundle is the self-describing unit the pipeline loads: the network, its
feature selection, its output encoding, and the normalizer fitted on the
training data.  Weights are stored as JSON numbers, whose decimal text
round-trips float64 exactly, so reloaded models predict bit-identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .models import (
    ENCODINGS,
    ElmanModel,
    FfnnModel,
    NarxModel,
    output_width,
)
from .nncore import LayerParams
from .preprocess import FEATURE_PRESETS, FeatureSpec, Normalizer, encode

FORMAT_VERSION = "1.0"
_SUPPORTED_MAJOR = 1


class ModelFormatError(ValueError):
    """Unreadable or unsupported model file."""


@dataclass
class ModelBundle:
    """A trained network plus everything needed to apply it to raw records."""

    family: str
    net: FfnnModel | ElmanModel | NarxModel
    feature_spec: FeatureSpec
    output_encoding: str
    normalizer: Normalizer
    train_meta: dict = field(default_factory=dict)
    source: str | None = None

    def __post_init__(self):
        if self.output_encoding not in ENCODINGS:
            raise ValueError(f"unknown output encoding {self.output_encoding!r}")
        if self.net.in_dim != len(self.feature_spec):
            raise ValueError(
                f"network expects {self.net.in_dim} features but the feature spec "
                f"provides {len(self.feature_spec)}"
            )
        if self.net.out_dim != output_width(self.output_encoding):
            raise ValueError(
                f"network emits {self.net.out_dim} outputs but encoding "
                f"{self.output_encoding!r} needs {output_width(self.output_encoding)}"
            )
        if len(self.normalizer) != len(self.feature_spec):
            raise ValueError("normalizer length does not match the feature spec")

    @property
    def identity(self) -> str:
        return f"{self.family}:{self.source or '<memory>'}"

    def encode_record(self, record) -> np.ndarray:
        return self.normalizer.apply(encode(record, self.feature_spec))

    def predict(self, record) -> np.ndarray:
        """Raw network output for one independent record.

        NARX nets compose their zero delay taps internally; stream-mode
        NARX refuses (no per-record history exists).
        """
        return self.net.forward(self.encode_record(record))


def _layer_doc(layer: LayerParams) -> dict:
    return {"weights": layer.weights.tolist(), "biases": layer.biases.tolist()}


def _layer_from_doc(doc) -> LayerParams:
    return LayerParams(np.array(doc["weights"], dtype=float),
                       np.array(doc["biases"], dtype=float))


def bundle_to_doc(bundle: ModelBundle) -> dict:
    net = bundle.net
    recurrent: dict = {}
    delays: dict = {}
    if isinstance(net, FfnnModel):
        layers = [_layer_doc(net.hidden), _layer_doc(net.output)]
    elif isinstance(net, ElmanModel):
        layers = [
            {"weights": net.wx.tolist(), "biases": net.b1.tolist()},
            {"weights": net.w2.tolist(), "biases": net.b2.tolist()},
        ]
        recurrent = {
            "weights": net.wh.tolist(),
            "context_init": net.context_init,
            "mode": net.mode,
        }
    elif isinstance(net, NarxModel):
        layers = [_layer_doc(net.core.hidden), _layer_doc(net.core.output)]
        delays = {"exogenous": net.d_u, "output": net.d_y, "mode": net.mode}
    else:
        raise ValueError(f"cannot serialize model of type {type(net).__name__}")
    return {
        "version": FORMAT_VERSION,
        "family": bundle.family,
        "feature_spec": {
            "preset": bundle.feature_spec.preset,
            "features": list(bundle.feature_spec.names),
        },
        "output_encoding": bundle.output_encoding,
        "normalizer": {
            "mins": bundle.normalizer.mins.tolist(),
            "maxs": bundle.normalizer.maxs.tolist(),
        },
        "layers": layers,
        "recurrent": recurrent,
        "delays": delays,
        "train_meta": bundle.train_meta,
    }


def bundle_from_doc(doc: dict, source: str | None = None) -> ModelBundle:
    try:
        version = str(doc["version"])
        family = doc["family"]
        spec_doc = doc["feature_spec"]
        encoding = doc["output_encoding"]
        norm_doc = doc["normalizer"]
        layer_docs = doc["layers"]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"model file is missing required field: {exc}") from None

    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise ModelFormatError(f"malformed format version {version!r}") from None
    if major > _SUPPORTED_MAJOR:
        raise ModelFormatError(
            f"model file format {version} is newer than supported major "
            f"{_SUPPORTED_MAJOR}; upgrade to read it"
        )

    preset = spec_doc.get("preset")
    if preset in FEATURE_PRESETS:
        spec = FEATURE_PRESETS[preset]
        if tuple(spec_doc["features"]) != spec.names:
            raise ModelFormatError(f"feature list does not match preset {preset!r}")
    else:
        spec = FeatureSpec(tuple(spec_doc["features"]), preset=preset)

    normalizer = Normalizer(
        mins=np.array(norm_doc["mins"], dtype=float),
        maxs=np.array(norm_doc["maxs"], dtype=float),
    )
    if len(layer_docs) != 2:
        raise ModelFormatError(f"expected 2 layers, found {len(layer_docs)}")

    try:
        if family == "ffnn":
            net = FfnnModel(_layer_from_doc(layer_docs[0]), _layer_from_doc(layer_docs[1]))
        elif family == "elman":
            recurrent = doc.get("recurrent") or {}
            net = ElmanModel(
                wx=np.array(layer_docs[0]["weights"], dtype=float),
                wh=np.array(recurrent["weights"], dtype=float),
                b1=np.array(layer_docs[0]["biases"], dtype=float),
                w2=np.array(layer_docs[1]["weights"], dtype=float),
                b2=np.array(layer_docs[1]["biases"], dtype=float),
                feature_count=len(spec),
                mode=recurrent.get("mode", "single-step"),
                context_init=float(recurrent.get("context_init", 0.5)),
            )
        elif family == "narx":
            delays = doc.get("delays") or {}
            core = FfnnModel(_layer_from_doc(layer_docs[0]), _layer_from_doc(layer_docs[1]))
            net = NarxModel(
                core,
                feature_count=len(spec),
                d_u=int(delays.get("exogenous", 0)),
                d_y=int(delays.get("output", 1)),
                mode=delays.get("mode", "per-record"),
            )
        else:
            raise ModelFormatError(f"unknown model family {family!r}")
    except ModelFormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFormatError(f"inconsistent model file: {exc}") from None

    try:
        return ModelBundle(
            family=family,
            net=net,
            feature_spec=spec,
            output_encoding=encoding,
            normalizer=normalizer,
            train_meta=doc.get("train_meta") or {},
            source=source,
        )
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent model file: {exc}") from None


def save_model(bundle: ModelBundle, path) -> None:
    doc = bundle_to_doc(bundle)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    bundle.source = str(path)


def load_model(path) -> ModelBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    return bundle_from_doc(doc, source=str(path))
