"""Compact convolutional teacher producing the reconstruction target."""

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..exceptions import InvalidArgumentError, StateError


class TeacherEncoder(nn.Module):
    """Four conv layers mapping an image to a ``(C, g, g)`` feature map."""

    def __init__(self, config):
        super().__init__()
        w1, w2, w3 = config.teacher_widths
        self.grid = config.teacher_grid
        self.stem = nn.Sequential(
            nn.Conv2d(1, w1, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(w1, w2, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(w2, w3, 3, stride=2, padding=1), nn.ReLU(),
        )
        self.head = nn.Conv2d(w3, config.teacher_channels, 3, stride=1, padding=1)
        self.register_buffer("trained", torch.zeros((), dtype=torch.bool))

    def forward(self, images):
        if images.dim() == 3:
            images = images[:, None]
        x = self.stem(images)
        if x.shape[-1] != self.grid:
            x = F.adaptive_avg_pool2d(x, self.grid)
        x = self.head(x)
        # parameter-free LayerNorm over channels at every position
        return F.layer_norm(x.transpose(1, -1), (x.shape[1],)).transpose(1, -1)

    def freeze(self):
        self.trained.fill_(True)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    @property
    def is_frozen(self):
        return bool(self.trained)

    def checksum(self):
        return float(sum(p.detach().double().abs().sum() for p in self.parameters()))


class TeacherClassifier(nn.Module):
    """Teacher encoder plus a transient head for pretraining.

    The head pools to a coarse 4x4 grid before the linear layer so that
    classes differing only in layout stay separable.
    """

    POOL = 4

    def __init__(self, encoder, n_classes):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(encoder.head.out_channels * self.POOL ** 2, n_classes)

    def forward(self, images):
        f = torch.relu(self.encoder(images))
        f = F.adaptive_avg_pool2d(f, self.POOL).flatten(1)
        return self.head(f)


def teacher_features(teacher, images):
    """Frozen teacher features; never builds a graph into the teacher."""
    if not teacher.is_frozen:
        raise StateError("teacher has not been trained and frozen")
    with torch.no_grad():
        return teacher(images)


def train_teacher(teacher, images, labels, steps=1500, batch_size=8, lr=3e-4,
                  betas=(0.9, 0.99), seed=0, log=None):
    """Pretrain ``teacher`` as a classifier over ``labels``, then freeze it.

    Returns the head's training-set accuracy measured before the head is
    discarded.
    """
    images = torch.as_tensor(images, dtype=next(teacher.parameters()).dtype)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise InvalidArgumentError("teacher training needs a non-empty split")
    if teacher.is_frozen:
        raise StateError("teacher is already frozen")
    classes, targets = np.unique(labels, return_inverse=True)
    targets = torch.as_tensor(targets, dtype=torch.long)
    model = TeacherClassifier(teacher, len(classes)).to(images.dtype)
    opt = torch.optim.Adam(model.parameters(), lr=lr, betas=betas)
    gen = torch.Generator().manual_seed(seed)
    model.train()
    for step in range(steps):
        idx = torch.randint(len(images), (batch_size,), generator=gen)
        loss = F.cross_entropy(model(images[idx]), targets[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log is not None and step % 200 == 0:
            log(step, float(loss.detach()))
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(images), 256):
            pred = model(images[start:start + 256]).argmax(1)
            correct += int((pred == targets[start:start + 256]).sum())
    teacher.freeze()
    return correct / len(images)
