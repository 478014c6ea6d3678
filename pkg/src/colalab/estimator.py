"""scikit-learn style wrapper around the network, trainer and matcher."""

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidArgumentError
from .matcher import class_posterior, encode_latents, encode_templates
from .model.cola import CoLaNet
from .model.config import DESK_MODEL, ModelConfig
from .model.teacher import train_teacher
from .presets import DESK_TRAIN
from .trainer import TrainConfig, Trainer
from .validation import check_images, check_labels, check_templates


class CoLaClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Template-matching glyph classifier.

    ``fit`` trains the teacher and the latent-component network on labelled
    images plus per-class templates. Candidate classes can be swapped at any
    time with ``fit_templates``, which is how unseen classes are recognized:
    only their templates are needed.

    Parameters
    ----------
    model_config, train_config : dict or None
        Overrides on top of the desk model and desk training preset.
    sampled : bool
        Draw the slot init and latents instead of using their means at
        prediction time.
    random_state : int
        Seed for teacher pretraining, training and any sampled prediction.
    """

    def __init__(self, model_config=None, train_config=None, sampled=False, random_state=0,
                 batch_size=256):
        self.model_config = model_config
        self.train_config = train_config
        self.sampled = sampled
        self.random_state = random_state
        self.batch_size = batch_size

    def _configs(self):
        mc = {**DESK_MODEL.to_dict(), **(self.model_config or {})}
        tc = {**DESK_TRAIN.to_dict(), **(self.train_config or {}), "seed": self.random_state}
        return ModelConfig.from_dict(mc), TrainConfig.from_dict(tc)

    def fit(self, X, y, templates):
        """Train on images ``X`` with labels ``y``.

        ``templates`` is ``(C, N, H, W)`` for the sorted unique labels of ``y``.
        """
        mc, tc = self._configs()
        X = check_images(X, mc.canvas)
        y = check_labels(y, len(X))
        classes = np.unique(y)
        templates = check_templates(templates, mc.canvas)
        if len(templates) != len(classes):
            raise InvalidArgumentError(
                f"got templates for {len(templates)} classes but y has {len(classes)}")
        torch.manual_seed(tc.seed)
        model = CoLaNet(mc)
        self.teacher_accuracy_ = train_teacher(
            model.teacher, X, y, steps=tc.teacher_steps, batch_size=tc.teacher_batch_size,
            lr=tc.teacher_lr, betas=(tc.adam_beta1, tc.adam_beta2), seed=tc.seed)
        trainer = Trainer(model, X, y, templates, classes, tc)
        trainer.run()
        model.training_record = {"classes": classes.tolist()}
        self.model_ = model
        self.history_ = trainer.history
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self.fit_templates(templates, classes)

    def fit_templates(self, templates, classes):
        """Replace the candidate set with ``classes`` described by ``templates``."""
        check_is_fitted(self, "model_")
        templates = check_templates(templates, self.model_.config.canvas)
        classes = np.asarray(classes, dtype=np.int64)
        if len(classes) != len(templates) or len(np.unique(classes)) != len(classes):
            raise InvalidArgumentError("classes must be unique and match the templates")
        gen = self._generator()
        self.eps_ = self.model_.slot_init(gen, sample=self.sampled)
        self.bank_ = encode_templates(templates, self.model_, self.eps_, classes, self.batch_size,
                                      gen, sample=self.sampled)
        self.classes_ = np.asarray(self.bank_.class_ids)
        return self

    def _generator(self):
        return torch.Generator().manual_seed(int(self.random_state))

    def _latents(self, X):
        check_is_fitted(self, "bank_")
        X = check_images(X, self.model_.config.canvas)
        self.model_.eval()
        return encode_latents(self.model_, X, self.eps_, self.batch_size, self._generator(),
                              self.sampled)

    def transform(self, X):
        """Flattened component latents, ``(n, K * D)``."""
        return self._latents(X).flatten(1).numpy()

    def predict_log_proba(self, X):
        post = class_posterior(self._latents(X), self.bank_, self.model_.config.sigma)
        return post.log_probs.numpy()

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        check_is_fitted(self, "bank_")
        return self.classes_[self.predict_log_proba(X).argmax(axis=1)]
