"""Label-dispute oracles: decide per sample whether its label is trusted.

Three implementations: ground truth from generative latents, an external
HTTP question-answering service, and a null oracle that agrees with every
label.
"""

import base64
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
import requests

from .imaging import png_bytes
from .sampling import SpriteDataset

CLASS_NAMES = ("square", "oval", "heart")


class Verdict(Enum):
    AGREE = "agree"
    DISPUTE = "dispute"


class OracleTransportError(RuntimeError):
    def __init__(self, sample_id: int, message: str):
        super().__init__(f"oracle query failed for sample {sample_id}: {message}")
        self.sample_id = sample_id


@dataclass(frozen=True)
class Sample:
    id: int
    image: np.ndarray
    label: int
    shape: int


class GroundTruthOracle:
    """Disputes exactly the samples whose label differs from the generative shape."""

    name = "ground_truth"

    def verdict(self, sample: Sample) -> Verdict:
        return Verdict.AGREE if sample.label == sample.shape else Verdict.DISPUTE


class AlwaysAgree:
    name = "always_agree"

    def verdict(self, sample: Sample) -> Verdict:
        return Verdict.AGREE


class ExternalVqaClient:
    """Asks an external HTTP service one yes/no question per sample.

    POSTs {"image": <base64 PNG>, "question": <template with class name>} and
    expects {"answer": "yes"|"no"}. Transport failures are retried, then the
    run fails with the offending sample id.
    """

    name = "external_vqa"

    def __init__(
        self,
        endpoint: str,
        question_template: str = "Is this a {}?",
        class_names: tuple = CLASS_NAMES,
        timeout: float = 10.0,
        retries: int = 3,
        retry_wait: float = 0.5,
        session=None,
    ):
        if "{}" not in question_template:
            raise ValueError("question_template needs one {} slot for the class name")
        self.endpoint = endpoint
        self.question_template = question_template
        self.class_names = class_names
        self.timeout = timeout
        self.retries = retries
        self.retry_wait = retry_wait
        self.session = session or requests.Session()

    def verdict(self, sample: Sample) -> Verdict:
        payload = {
            "image": base64.b64encode(png_bytes(sample.image)).decode("ascii"),
            "question": self.question_template.format(self.class_names[sample.label]),
        }
        last_error = "no attempt made"
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                answer = resp.json().get("answer", "")
                if answer not in ("yes", "no"):
                    raise ValueError(f"malformed oracle answer {answer!r}")
                return Verdict.AGREE if answer == "yes" else Verdict.DISPUTE
            except (requests.RequestException, ValueError) as e:
                last_error = str(e)
                if attempt < self.retries:
                    time.sleep(self.retry_wait)
        raise OracleTransportError(sample.id, last_error)


def make_oracle(name: str, endpoint: str | None = None, **kwargs):
    if name == "ground_truth":
        return GroundTruthOracle()
    if name == "always_agree":
        return AlwaysAgree()
    if name == "external_vqa":
        if not endpoint:
            raise ValueError("external_vqa oracle needs an endpoint URL")
        return ExternalVqaClient(endpoint, **kwargs)
    raise ValueError(f"unknown oracle {name!r}")


def dispute_labels(oracle, ds: SpriteDataset, ids: np.ndarray):
    """Partition ids into (kept, disputed) by the oracle's verdicts."""
    id_to_row = {int(i): r for r, i in enumerate(ds.columns["id"])}
    kept, disputed = [], []
    for sid in ids:
        sid = int(sid)
        if sid not in id_to_row:
            raise KeyError(f"sample id {sid} not present in dataset")
        row = id_to_row[sid]
        sample = Sample(
            id=sid,
            image=ds.images[row],
            label=int(ds.columns["label"][row]),
            shape=int(ds.columns["shape"][row]),
        )
        if oracle.verdict(sample) == Verdict.AGREE:
            kept.append(sid)
        else:
            disputed.append(sid)
    return np.array(kept, dtype=np.uint64), np.array(disputed, dtype=np.uint64)
