"""
Synthetic worlds with known ground truth
Rasch worlds are written as SLAM text so the whole pipeline runs on them
"""
import io
import logging
from dataclasses import dataclass
from typing import List, Sequence, TextIO, Tuple

import numpy as np
from scipy import special

from kt_errors import ConfigError, DegenerateVariance
from fm_model.fm import fm_forward_batch
from fm_model.links import LinkFunction
from fm_model.params import FmParams
from fm_training.metrics import auc
from slam_data.encoder import SparseInstance
from slam_data.records import LabeledExercise
from slam_data.schema import FeatureSet
from slam_data.vocab import Vocab

logger = logging.getLogger(__name__)


def user_id(i: int) -> str:
    return f"u{i:04d}"


def item_id(j: int) -> str:
    return f"w{j:04d}"


@dataclass
class RaschWorld:
    """Correct answers follow sigma(theta_i - d_j); label 1 (mistake) has the complement"""
    theta: np.ndarray
    diff: np.ndarray
    seed: int = 0

    @property
    def user_ids(self) -> List[str]:
        return [user_id(i) for i in range(len(self.theta))]

    @property
    def item_ids(self) -> List[str]:
        return [item_id(j) for j in range(len(self.diff))]

    def p_correct(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        return special.expit(self.theta[users] - self.diff[items])

    def sample_labels(self, users: np.ndarray, items: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        correct = rng.random(len(users)) < self.p_correct(users, items)
        return (~correct).astype(np.int64)


def gen_rasch(users: int, items: int, per_user: int, seed: int) -> Tuple[RaschWorld, str]:
    """
    Draw a Rasch world and a SLAM-format dataset from it

    theta and d are i.i.d. normal(0, 1); every user answers `per_user` distinct random
    items, one single-token exercise per answer.
    """
    if min(users, items, per_user) < 1:
        raise ConfigError(f"users, items and per_user must be >= 1, got {users}, {items}, {per_user}",
                          module="synth_oracle")
    if per_user > items:
        raise ConfigError(f"per_user ({per_user}) cannot exceed items ({items})", module="synth_oracle")

    rng = np.random.default_rng(seed)
    world = RaschWorld(theta=rng.normal(size=users), diff=rng.normal(size=items), seed=seed)

    out = io.StringIO()
    for i in range(users):
        answered = rng.choice(items, size=per_user, replace=False)
        labels = world.sample_labels(np.full(per_user, i), answered, rng)
        times = rng.integers(1, 60, size=per_user)
        for k, (j, label) in enumerate(zip(answered, labels)):
            out.write(f"# user:{user_id(i)} countries:ZZ days:{k * 0.25} client:web "
                      f"session:lesson format:reverse_translate time:{times[k]}\n")
            out.write(f"r{i:05d}{k:05d}01 {item_id(j)} NOUN _ ROOT 0 {label}\n\n")

    logger.info(f"Generated Rasch world: {users} users, {items} items, {users * per_user} answers (seed {seed})")
    return world, out.getvalue()


def write_truth(world: RaschWorld, writer: TextIO):
    """Ground-truth sidecar: kind, id, true parameter"""
    for uid, theta in zip(world.user_ids, world.theta):
        writer.write(f"user\t{uid}\t{float(theta)!r}\n")
    for iid, diff in zip(world.item_ids, world.diff):
        writer.write(f"item\t{iid}\t{float(diff)!r}\n")


def _pearson(x: np.ndarray, y: np.ndarray, what: str) -> float:
    if len(x) < 2 or np.std(x) == 0.0 or np.std(y) == 0.0:
        raise DegenerateVariance(f"{what}: correlation undefined for constant or too short vectors")
    return float(np.corrcoef(x, y)[0, 1])


def recovery_score(world: RaschWorld, params: FmParams, vocab: Vocab) -> Tuple[float, float]:
    """
    Pearson correlations (true theta vs learned ability, true -d vs learned easiness)

    The model predicts mistakes, so learned biases are negated to the correct side.
    Pearson correlation ignores the common shift left free by the Rasch model.
    """
    users = [(i, vocab.entity_index[("user", uid)]) for i, uid in enumerate(world.user_ids)
             if ("user", uid) in vocab.entity_index]
    items = [(j, vocab.entity_index[("token", iid)]) for j, iid in enumerate(world.item_ids)
             if ("token", iid) in vocab.entity_index]

    true_theta = np.array([world.theta[i] for i, _ in users])
    learned_theta = np.array([-params.w[k - 1] for _, k in users])
    true_easiness = np.array([-world.diff[j] for j, _ in items])
    learned_easiness = np.array([-params.w[k - 1] for _, k in items])

    return (
        _pearson(true_theta, learned_theta, "abilities"),
        _pearson(true_easiness, learned_easiness, "difficulties"),
    )


def bayes_oracle_auc(world: RaschWorld, exercises: Sequence[LabeledExercise]) -> float:
    """AUC of the true mistake probabilities on a labeled dataset"""
    user_index = {uid: i for i, uid in enumerate(world.user_ids)}
    item_index = {iid: j for j, iid in enumerate(world.item_ids)}
    users, items, labels = [], [], []
    for exercise in exercises:
        for token in exercise.tokens:
            users.append(user_index[exercise.meta.user])
            items.append(item_index[token.token])
            labels.append(token.label)
    scores = 1.0 - world.p_correct(np.array(users), np.array(items))
    return auc(scores, labels)


@dataclass
class FmWorld:
    """True FM parameters over a user + item vocabulary"""
    params: FmParams
    vocab: Vocab
    link: LinkFunction = LinkFunction.SIGMOID
    seed: int = 0


def gen_fm(n_users: int, n_items: int, d: int, n_instances: int,
           link: LinkFunction = LinkFunction.SIGMOID, seed: int = 0) -> Tuple[FmWorld, List[SparseInstance]]:
    """
    Draw FM parameters and instances labelled Bernoulli(psi(y_FM))

    Each instance pairs a random user with a random item; None entities keep zero parameters.
    """
    rng = np.random.default_rng(seed)
    entities = [("user", user_id(i)) for i in range(n_users)] + [("user", None)]
    entities += [("token", item_id(j)) for j in range(n_items)] + [("token", None)]
    vocab = Vocab(FeatureSet.IRT, entities)

    w = rng.normal(0.0, 1.0, size=vocab.N)
    V = rng.normal(0.0, 1.0 / np.sqrt(max(d, 1)), size=(vocab.N, d))
    for none_entity in (vocab.lookup("user", None), vocab.lookup("token", None)):
        w[none_entity - 1] = 0.0
        V[none_entity - 1] = 0.0
    world = FmWorld(FmParams(w, V), vocab, LinkFunction(link), seed)

    users = rng.integers(0, n_users, size=n_instances)
    items = rng.integers(0, n_items, size=n_instances)
    rows = np.stack([users, n_users + 1 + items], axis=1)
    y_fm, _ = fm_forward_batch(world.params, rows, np.ones(rows.shape))
    labels = (rng.random(n_instances) < world.link(y_fm)).astype(np.int64)

    instances = [
        SparseInstance(active=[(int(row[0]) + 1, 1.0), (int(row[1]) + 1, 1.0)], label=int(label), token_id=f"fm{n:06d}")
        for n, (row, label) in enumerate(zip(rows, labels))
    ]
    return world, instances
