"""
iclp.py

Incremental constituent label prediction (ICLP): predicts the label of the next constituent from a word prefix.

Label predictors share a single method, predict(prefix) -> label, and include:
* IclpModel - an averaged multiclass perceptron over sparse prefix features
* OracleLabeler - reads gold labels from a parse tree
* ExternalLabeler - replays predictions produced by an external (e.g. neural) predictor

A prediction depends only on the prefix. Earlier predictions never feed later ones.
"""
import logging
import random
from collections import Counter, defaultdict
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import Field, ValidationError, root_validator, validator

from .config import (
    ICLP_MODEL_FORMAT_VERSION,
    PREFIX_LENGTH_BUCKETS,
    PredictionColumns,
)
from .models import SimulSegModel
from .support import expand_path
from .treebank import ParseTree, PrefixInstance, next_constituent_label

logger = logging.getLogger(__name__)

SENTENCE_START = "<s>"


class IclpFormatException(Exception):
    """Raised when a predictions or model file contains a malformed line"""

    def __init__(self, message: str, line_number: int) -> None:
        """
        :param message: The error description
        :param line_number: The 1-based line number of the malformed line
        """
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class FeatureTemplate(str, Enum):
    """
    Sparse feature templates computed over a word prefix
    """

    UNIGRAM = "unigram"
    BIGRAM = "bigram"
    TRIGRAM = "trigram"
    SUFFIX = "suffix"
    LENGTH = "length"
    BIAS = "bias"


# feature id prefixes produced by each template
TEMPLATE_PREFIXES: Dict[str, Tuple[str, ...]] = {
    FeatureTemplate.UNIGRAM.value: ("w-1",),
    FeatureTemplate.BIGRAM.value: ("w-2:-1",),
    FeatureTemplate.TRIGRAM.value: ("w-3:-1",),
    FeatureTemplate.SUFFIX.value: ("suf2", "suf3", "suf4"),
    FeatureTemplate.LENGTH.value: ("len",),
    FeatureTemplate.BIAS.value: ("bias",),
}

DEFAULT_FEATURE_SPEC: Tuple[str, ...] = tuple(t.value for t in FeatureTemplate)


def _length_bucket(length: int) -> str:
    """Maps a prefix length to its bucket name: 1, 2, 3, 4-6, 7-10, 11+"""
    lower = 1
    for upper in PREFIX_LENGTH_BUCKETS:
        if length <= upper:
            return str(upper) if lower == upper else f"{lower}-{upper}"
        lower = upper + 1
    return f"{lower}+"


def extract_features(
    prefix: Sequence[str], feature_spec: Sequence[str] = DEFAULT_FEATURE_SPEC
) -> List[str]:
    """
    Computes the sparse feature ids of a prefix.

    :param prefix: The word prefix w_1..w_i
    :param feature_spec: The enabled feature templates
    :return: list of feature ids
    """
    padded = [SENTENCE_START, SENTENCE_START] + list(prefix)
    last = padded[-1]
    features: List[str] = []

    for template in feature_spec:
        if template == FeatureTemplate.BIAS:
            features.append("bias")
        elif template == FeatureTemplate.UNIGRAM:
            features.append(f"w-1={last}")
        elif template == FeatureTemplate.BIGRAM:
            features.append(f"w-2:-1={padded[-2]} {last}")
        elif template == FeatureTemplate.TRIGRAM:
            features.append(f"w-3:-1={padded[-3]} {padded[-2]} {last}")
        elif template == FeatureTemplate.SUFFIX:
            for n in (2, 3, 4):
                if len(last) > n:
                    features.append(f"suf{n}={last[-n:]}")
        elif template == FeatureTemplate.LENGTH:
            features.append(f"len={_length_bucket(len(prefix))}")

    return features


class LabelInventory(SimulSegModel):
    """
    The ordered set of constituent labels. Label ids are dense and contiguous from 0.
    Labels may be appended, which keeps existing ids stable.
    """

    labels: List[str] = []

    class Config:
        allow_mutation = True
        frozen = False

    @validator("labels")
    def validate_unique(cls, v: List[str]) -> List[str]:
        """Validates that labels are unique"""
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate labels in inventory {v}")
        return v

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelInventory":
        """
        Creates an inventory whose ids follow sorted label order.

        :param labels: The labels, duplicates allowed
        :return: The LabelInventory
        """
        return cls(labels=sorted(set(labels)))

    @property
    def index(self) -> Dict[str, int]:
        """Returns the label -> id mapping"""
        return {label: i for i, label in enumerate(self.labels)}

    def id(self, label: str) -> int:
        """
        Returns the id of a label.

        :raises: KeyError if the label is unknown
        """
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label}")

    def add(self, label: str) -> int:
        """
        Adds a label if it is unknown.

        :param label: The label
        :return: The label id
        """
        if label not in self.labels:
            self.labels.append(label)
        return self.labels.index(label)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.labels)


class TrainMeta(SimulSegModel):
    """
    Training metadata carried by a trained model
    """

    epochs: int = Field(ge=0)
    seed: int
    averaged: bool = True
    lookahead: bool = True
    instance_count: int = Field(0, ge=0)
    epoch_errors: Tuple[int, ...] = ()


class IclpModel(SimulSegModel):
    """
    A linear multiclass classifier over sparse prefix features.
    Weights are stored per label as feature -> weight maps; absent features weigh zero.
    """

    inventory: LabelInventory
    weights: Dict[str, Dict[str, float]] = {}
    feature_spec: Tuple[FeatureTemplate, ...] = tuple(FeatureTemplate)
    train_meta: TrainMeta

    @root_validator(skip_on_failure=True)
    def validate_weights(cls, values: Dict) -> Dict:
        """
        Validates that weights reference known labels and features defined by the feature spec.

        :param values: The validated model values
        """
        inventory: LabelInventory = values["inventory"]
        prefixes = {p for t in values["feature_spec"] for p in TEMPLATE_PREFIXES[t]}

        for label, label_weights in values["weights"].items():
            if label not in inventory:
                raise ValueError(f"weights reference unknown label {label}")
            for feature in label_weights:
                if feature.split("=", 1)[0] not in prefixes:
                    raise ValueError(f"feature {feature} is not defined by the feature spec")
        return values

    def scores(self, prefix: Sequence[str]) -> List[float]:
        """
        Scores every label for a prefix.

        :param prefix: The word prefix
        :return: one score per label id
        """
        features = extract_features(prefix, self.feature_spec)
        scores = []
        for label in self.inventory.labels:
            label_weights = self.weights.get(label, {})
            scores.append(sum(label_weights.get(f, 0.0) for f in features))
        return scores

    def predict(self, prefix: Sequence[str]) -> str:
        """
        Returns the argmax label for a prefix. Ties resolve to the lowest label id.

        :param prefix: The word prefix
        :return: The predicted label
        :raises: ValueError if the prefix is empty
        """
        if not prefix:
            raise ValueError("cannot predict a label for an empty prefix")

        scores = self.scores(prefix)
        best = 0
        for label_id in range(1, len(scores)):
            if scores[label_id] > scores[best]:
                best = label_id
        return self.inventory.labels[best]


class OracleLabeler:
    """
    Predicts gold next-constituent labels from a parse tree.
    """

    def __init__(self, tree: ParseTree) -> None:
        self.tree = tree

    def predict(self, prefix: Sequence[str]) -> str:
        """
        Returns the gold label c_i for the prefix w_1..w_i of the tree's sentence.

        :param prefix: The word prefix
        :return: The gold label
        :raises: ValueError if the prefix is empty or is not a prefix of the tree's sentence
        """
        if not prefix:
            raise ValueError("cannot predict a label for an empty prefix")
        if tuple(prefix) != self.tree.words[: len(prefix)]:
            raise ValueError("prefix does not match the oracle tree")
        return next_constituent_label(self.tree, len(prefix))


class PredictionRecord(SimulSegModel):
    """
    A label prediction for word index i of a sentence, with an optional gold label.
    """

    sentence_id: str = Field(min_length=1)
    word_index: int = Field(ge=1)
    predicted: str = Field(min_length=1)
    gold: Optional[str] = None


class ExternalLabeler:
    """
    Replays externally produced predictions for a single sentence.
    Predictions are keyed by word index; the prefix length selects the record.
    """

    def __init__(self, records: Iterable[PredictionRecord], sentence_id: str) -> None:
        self.sentence_id = sentence_id
        self._labels: Dict[int, str] = {
            r.word_index: r.predicted for r in records if r.sentence_id == sentence_id
        }

    def predict(self, prefix: Sequence[str]) -> str:
        """
        Returns the external prediction for word index len(prefix).

        :raises: ValueError if the prefix is empty or no prediction exists
        """
        if not prefix:
            raise ValueError("cannot predict a label for an empty prefix")
        try:
            return self._labels[len(prefix)]
        except KeyError:
            raise ValueError(
                f"no external prediction for sentence {self.sentence_id} word {len(prefix)}"
            )


def predict(model, prefix: Sequence[str]) -> str:
    """
    Predicts the next-constituent label of a prefix with any label predictor.

    :param model: IclpModel, OracleLabeler or ExternalLabeler
    :param prefix: The word prefix
    :return: The predicted label
    :raises: ValueError if the prefix is empty
    """
    if not prefix:
        raise ValueError("cannot predict a label for an empty prefix")
    return model.predict(prefix)


def label_sentence(model, words: Sequence[str]) -> List[str]:
    """
    Predicts c_1..c_n for a sentence by predicting on every prefix independently.

    Models trained without look-ahead predict c_i from w_1..w_(i-1). Their c_1 is predicted from w_1.

    :param model: The label predictor
    :param words: The sentence words
    :return: one label per word
    """
    train_meta = getattr(model, "train_meta", None)
    shift = 0 if train_meta is None or train_meta.lookahead else 1
    return [predict(model, words[: max(i - shift, 1)]) for i in range(1, len(words) + 1)]


class _AveragedPerceptron:
    """
    Multiclass perceptron with lazily updated weight averages.
    Weights are indexed feature -> label id -> weight.
    """

    def __init__(self, label_count: int) -> None:
        self.label_count = label_count
        self.weights: Dict[str, Dict[int, float]] = {}
        # accumulated weight totals and the step of their last change, keyed by (feature, label id)
        self._totals: Dict[Tuple[str, int], float] = defaultdict(float)
        self._timestamps: Dict[Tuple[str, int], int] = defaultdict(int)
        self.steps = 0

    def predict(self, features: List[str]) -> int:
        """Returns the best label id, ties resolve to the lowest id"""
        scores = [0.0] * self.label_count
        for f in features:
            for label_id, weight in self.weights.get(f, {}).items():
                scores[label_id] += weight

        best = 0
        for label_id in range(1, self.label_count):
            if scores[label_id] > scores[best]:
                best = label_id
        return best

    def _update_weight(self, feature: str, label_id: int, delta: float) -> None:
        param = (feature, label_id)
        feature_weights = self.weights.setdefault(feature, {})
        weight = feature_weights.get(label_id, 0.0)
        self._totals[param] += (self.steps - self._timestamps[param]) * weight
        self._timestamps[param] = self.steps
        feature_weights[label_id] = weight + delta

    def update(self, gold: int, guess: int, features: List[str]) -> None:
        """Promotes the gold label and demotes the guess"""
        for f in features:
            self._update_weight(f, gold, 1.0)
            self._update_weight(f, guess, -1.0)

    def tick(self) -> None:
        """Advances the step counter after an instance is processed"""
        self.steps += 1

    def averaged_weights(self) -> Dict[str, Dict[int, float]]:
        """Returns weights averaged over every step"""
        if self.steps == 0:
            return {}

        averaged: Dict[str, Dict[int, float]] = {}
        for feature, feature_weights in self.weights.items():
            for label_id, weight in feature_weights.items():
                param = (feature, label_id)
                total = self._totals[param] + (self.steps - self._timestamps[param]) * weight
                averaged.setdefault(feature, {})[label_id] = total / self.steps
        return averaged


def train(
    instances: List[PrefixInstance],
    epochs: int = 5,
    seed: int = 0,
    feature_spec: Sequence[str] = DEFAULT_FEATURE_SPEC,
    averaged: bool = True,
    lookahead: Optional[bool] = None,
) -> IclpModel:
    """
    Trains an averaged multiclass perceptron.

    Each epoch iterates the instances in a seed-determined shuffled order. A misprediction adds the instance features
    to the gold label weights and subtracts them from the predicted label weights. Training is deterministic given
    (instances, epochs, seed).

    :param instances: The training instances
    :param epochs: The number of passes over the instances. Zero returns a model with zero weights.
    :param seed: The shuffling seed
    :param feature_spec: The enabled feature templates
    :param averaged: Set to False to keep the final, non-averaged, weights
    :param lookahead: The instance variant, inferred from the instances when None
    :return: The trained IclpModel
    :raises: ValueError if instances are empty, mix or mismatch the look-ahead variant, or epochs is negative
    """
    if not instances:
        raise ValueError("cannot train an ICLP model without instances")
    if epochs < 0:
        raise ValueError(f"invalid epoch count {epochs}")

    variants = {len(i.prefix) == i.word_index for i in instances}
    if len(variants) > 1:
        raise ValueError("instances mix the look-ahead and no-look-ahead variants")
    inferred = variants.pop()
    if lookahead is not None and lookahead != inferred:
        variant = "look-ahead" if lookahead else "no-look-ahead"
        raise ValueError(f"expected {variant} instances")

    inventory = LabelInventory.from_labels(i.label for i in instances)
    label_ids = inventory.index
    features = [extract_features(i.prefix, feature_spec) for i in instances]
    gold = [label_ids[i.label] for i in instances]

    perceptron = _AveragedPerceptron(len(inventory))
    order = list(range(len(instances)))
    rng = random.Random(seed)
    epoch_errors: List[int] = []

    for epoch in range(epochs):
        rng.shuffle(order)
        errors = 0
        for index in order:
            guess = perceptron.predict(features[index])
            if guess != gold[index]:
                perceptron.update(gold[index], guess, features[index])
                errors += 1
            perceptron.tick()
        epoch_errors.append(errors)
        logger.info("epoch %d/%d: %d mistakes", epoch + 1, epochs, errors)

    by_feature = perceptron.averaged_weights() if averaged else perceptron.weights

    weights: Dict[str, Dict[str, float]] = {}
    for feature in sorted(by_feature):
        for label_id, weight in sorted(by_feature[feature].items()):
            if weight:
                weights.setdefault(inventory.labels[label_id], {})[feature] = weight

    return IclpModel(
        inventory=inventory,
        weights={label: weights[label] for label in sorted(weights)},
        feature_spec=tuple(feature_spec),
        train_meta=TrainMeta(
            epochs=epochs,
            seed=seed,
            averaged=averaged,
            lookahead=inferred,
            instance_count=len(instances),
            epoch_errors=tuple(epoch_errors),
        ),
    )


def accuracy(model, instances: List[PrefixInstance]) -> float:
    """
    Returns the fraction of instances whose label is predicted correctly.

    :raises: ValueError if instances are empty
    """
    if not instances:
        raise ValueError("cannot compute accuracy without instances")
    correct = sum(1 for i in instances if predict(model, i.prefix) == i.label)
    return correct / len(instances)


def majority_baseline(
    instances: List[PrefixInstance], reference: Optional[List[PrefixInstance]] = None
) -> float:
    """
    Returns the accuracy of always predicting the most frequent label.

    :param instances: The instances to score
    :param reference: The instances used to pick the majority label. Defaults to instances.
    :raises: ValueError if instances are empty
    """
    if not instances:
        raise ValueError("cannot compute a baseline without instances")

    counts = Counter(i.label for i in (reference or instances))
    # ties resolve to the lowest label
    majority = min(counts, key=lambda label: (-counts[label], label))
    return sum(1 for i in instances if i.label == majority) / len(instances)


def predict_instances(model, instances: List[PrefixInstance]) -> List[PredictionRecord]:
    """
    Predicts every instance, keeping the instance label as gold.

    :param model: The label predictor
    :param instances: The instances to predict
    :return: list of PredictionRecord
    """
    return [
        PredictionRecord(
            sentence_id=i.sentence_id,
            word_index=i.word_index,
            predicted=predict(model, i.prefix),
            gold=i.label,
        )
        for i in instances
    ]


class LabelScore(SimulSegModel):
    """
    Precision, recall and F1 of a single label
    """

    precision: float
    recall: float
    f1: float
    support: int
    predicted_count: int


class IclpEvaluation(SimulSegModel):
    """
    Per-label scores and overall accuracy of a set of predictions
    """

    labels: Dict[str, LabelScore]
    accuracy: float
    total: int


def _ratio(numerator: int, denominator: int) -> float:
    """Divides, defining 0/0 as 0"""
    return numerator / denominator if denominator else 0.0


def evaluate(predictions: List[PredictionRecord]) -> IclpEvaluation:
    """
    Computes per-label precision, recall and F1 and overall accuracy.

    :param predictions: Records which carry gold labels
    :return: The IclpEvaluation
    :raises: ValueError if predictions are empty or a record has no gold label
    """
    if not predictions:
        raise ValueError("cannot evaluate an empty prediction list")

    true_positives: Counter = Counter()
    predicted_counts: Counter = Counter()
    gold_counts: Counter = Counter()

    for record in predictions:
        if record.gold is None:
            raise ValueError(
                f"record {record.sentence_id}:{record.word_index} has no gold label"
            )
        predicted_counts[record.predicted] += 1
        gold_counts[record.gold] += 1
        if record.predicted == record.gold:
            true_positives[record.gold] += 1

    scores: Dict[str, LabelScore] = {}
    for label in sorted(set(predicted_counts) | set(gold_counts)):
        tp = true_positives[label]
        precision = _ratio(tp, predicted_counts[label])
        recall = _ratio(tp, gold_counts[label])
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        scores[label] = LabelScore(
            precision=precision,
            recall=recall,
            f1=f1,
            support=gold_counts[label],
            predicted_count=predicted_counts[label],
        )

    return IclpEvaluation(
        labels=scores,
        accuracy=sum(true_positives.values()) / len(predictions),
        total=len(predictions),
    )


def load_external_predictions(
    path: str, inventory: Optional[LabelInventory] = None
) -> List[PredictionRecord]:
    """
    Loads predictions from a TSV file with columns sentence_id, i, predicted and an optional gold label.

    :param path: The predictions file path
    :param inventory: A session inventory. Unknown predicted and gold labels are added to it.
    :return: list of PredictionRecord
    :raises: IclpFormatException if a row is malformed
    """
    records: List[PredictionRecord] = []

    with open(expand_path(path), "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue

            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise IclpFormatException(
                    f"expected 3 or 4 tab separated fields, found {len(fields)}",
                    line_number,
                )

            try:
                word_index = int(fields[PredictionColumns.WORD_INDEX])
            except ValueError:
                raise IclpFormatException(
                    f"invalid word index {fields[PredictionColumns.WORD_INDEX]!r}",
                    line_number,
                )
            if word_index < 1:
                raise IclpFormatException(
                    f"word indices are 1-based, found {word_index}", line_number
                )

            predicted = fields[PredictionColumns.PREDICTED]
            gold = fields[PredictionColumns.GOLD] if len(fields) == 4 else None
            if not fields[PredictionColumns.SENTENCE_ID] or not predicted or gold == "":
                raise IclpFormatException("empty field", line_number)

            if inventory is not None:
                inventory.add(predicted)
                if gold is not None:
                    inventory.add(gold)

            records.append(
                PredictionRecord(
                    sentence_id=fields[PredictionColumns.SENTENCE_ID],
                    word_index=word_index,
                    predicted=predicted,
                    gold=gold,
                )
            )

    logger.info("loaded %d external predictions from %s", len(records), path)
    return records


def save_model(model: IclpModel, path: str) -> None:
    """
    Writes a model in the versioned flat format.

    #iclp-model<TAB>1
    labels<TAB>NP<TAB>VP ...
    features<TAB>unigram<TAB>bigram ...
    meta<TAB>epochs<TAB>5<TAB>seed<TAB>0<TAB>averaged<TAB>true<TAB>lookahead<TAB>true<TAB>instances<TAB>120<TAB>errors<TAB>9,2,0
    w<TAB>NP<TAB>w-1=the<TAB>1.25

    :param model: The model to write
    :param path: The output file path
    """
    meta = model.train_meta
    errors = ",".join(str(e) for e in meta.epoch_errors)
    lines = [
        f"#iclp-model\t{ICLP_MODEL_FORMAT_VERSION}",
        "\t".join(["labels"] + list(model.inventory.labels)),
        "\t".join(["features"] + [FeatureTemplate(t).value for t in model.feature_spec]),
        "\t".join(
            [
                "meta",
                "epochs",
                str(meta.epochs),
                "seed",
                str(meta.seed),
                "averaged",
                "true" if meta.averaged else "false",
                "lookahead",
                "true" if meta.lookahead else "false",
                "instances",
                str(meta.instance_count),
                "errors",
                errors,
            ]
        ),
    ]
    for label in sorted(model.weights):
        for feature in sorted(model.weights[label]):
            lines.append(f"w\t{label}\t{feature}\t{model.weights[label][feature]!r}")

    with open(expand_path(path), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path: str) -> IclpModel:
    """
    Reads a model written by save_model.

    :param path: The model file path
    :return: The IclpModel
    :raises: IclpFormatException if the file is malformed, has an unsupported version or fails model validation.
        Whole model errors are reported at line 1.
    """
    labels: Optional[List[str]] = None
    feature_spec: Optional[List[str]] = None
    meta: Dict[str, str] = {}
    weights: Dict[str, Dict[str, float]] = {}

    with open(expand_path(path), "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            fields = line.rstrip("\n").split("\t")

            if line_number == 1:
                if fields != ["#iclp-model", str(ICLP_MODEL_FORMAT_VERSION)]:
                    raise IclpFormatException("unsupported model header", line_number)
            elif fields[0] == "labels":
                labels = fields[1:]
            elif fields[0] == "features":
                feature_spec = fields[1:]
            elif fields[0] == "meta":
                meta = dict(zip(fields[1::2], fields[2::2]))
            elif fields[0] == "w" and len(fields) == 4:
                try:
                    weights.setdefault(fields[1], {})[fields[2]] = float(fields[3])
                except ValueError:
                    raise IclpFormatException(f"invalid weight {fields[3]!r}", line_number)
            elif fields != [""]:
                raise IclpFormatException("unrecognized model line", line_number)

    if labels is None or feature_spec is None or not meta:
        raise IclpFormatException("model file is missing its header lines", 1)

    errors = meta.get("errors", "")
    try:
        return IclpModel(
            inventory=LabelInventory(labels=labels),
            weights=weights,
            feature_spec=tuple(feature_spec),
            train_meta=TrainMeta(
                epochs=int(meta["epochs"]),
                seed=int(meta["seed"]),
                averaged=meta.get("averaged") == "true",
                lookahead=meta.get("lookahead", "true") == "true",
                instance_count=int(meta.get("instances", 0)),
                epoch_errors=tuple(int(e) for e in errors.split(",") if e),
            ),
        )
    except KeyError as error:
        raise IclpFormatException(f"model meta is missing {error}", 1)
    except (ValidationError, ValueError) as error:
        raise IclpFormatException(f"invalid model: {error}", 1)
