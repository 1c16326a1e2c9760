"""Learned accent-representation extraction, 2-D projection, and
neighborhood purity: quantifies whether embeddings cluster by accent or
by speaker.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .audio import load_clip
from .errors import DataError
from .manifest import ManifestEntry
from .nets import AcmModels, accent_representation


@dataclass
class LabeledEmbeddings:
    matrix: np.ndarray
    accent_labels: list[str]
    speaker_labels: list[str]
    utt_ids: list[str]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        n = self.matrix.shape[0]
        if not (len(self.accent_labels) == len(self.speaker_labels)
                == len(self.utt_ids) == n):
            raise DataError("embedding labels must align with the matrix rows")

    def __len__(self) -> int:
        return self.matrix.shape[0]


def extract(models: AcmModels, entries: list[ManifestEntry], base_dir,
            log=None) -> LabeledEmbeddings:
    """One representation per utterance; unreadable audio is skipped."""
    rows, accents, speakers, ids = [], [], [], []
    skipped = 0
    models.eval()
    for entry in entries:
        try:
            clip = load_clip(os.path.join(base_dir, entry.audio_path))
        except DataError:
            skipped += 1
            continue
        rows.append(accent_representation(models, clip))
        accents.append(entry.accent)
        speakers.append(entry.speaker)
        ids.append(entry.utt_id)
    if skipped and log:
        log(f"extract: skipped {skipped} entries with unreadable audio")
    if not rows:
        raise DataError("no readable audio in the manifest")
    return LabeledEmbeddings(np.stack(rows), accents, speakers, ids)


def pca_2d(matrix: np.ndarray) -> np.ndarray:
    """Exact projection onto the top-2 eigenvectors of the covariance."""
    centered = matrix - matrix.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(matrix.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    components = eigvecs[:, np.argsort(eigvals)[::-1][:2]]
    # Deterministic sign: largest-magnitude loading is positive.
    for j in range(components.shape[1]):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    return centered @ components


def project_2d(emb: LabeledEmbeddings, method: str = "tsne",
               seed: int = 0) -> np.ndarray:
    """Deterministic 2-D coordinates; PCA is exact, t-SNE is the exact
    (non-approximated) solver at perplexity 10."""
    if len(emb) < 3:
        raise DataError("need at least 3 points to project")
    if method == "pca":
        return pca_2d(emb.matrix)
    if method == "tsne":
        from sklearn.manifold import TSNE
        perplexity = min(10.0, (len(emb) - 1) / 3.0)
        tsne = TSNE(n_components=2, method="exact", perplexity=perplexity,
                    init="pca", random_state=seed)
        return tsne.fit_transform(emb.matrix).astype(np.float64)
    raise DataError(f"unknown projection method {method!r}")


def knn_label_purity(emb: LabeledEmbeddings, label_kind: str, k: int) -> float:
    """Fraction of points whose majority k-NN label matches their own.

    Euclidean metric, self excluded; distance ties resolve to the lower
    row index, vote ties to the lower label index.
    """
    if label_kind == "accent":
        labels = emb.accent_labels
    elif label_kind == "speaker":
        labels = emb.speaker_labels
    else:
        raise DataError(f"label_kind must be accent or speaker, got {label_kind!r}")
    n = len(emb)
    if not 0 < k < n:
        raise DataError(f"k must satisfy 0 < k < n (= {n})")
    vocab = sorted(set(labels))
    label_ids = np.array([vocab.index(lab) for lab in labels])
    diffs = emb.matrix[:, None, :] - emb.matrix[None, :, :]
    dists = np.sqrt(np.sum(diffs ** 2, axis=-1))
    np.fill_diagonal(dists, np.inf)
    hits = 0
    for i in range(n):
        order = np.argsort(dists[i], kind="stable")[:k]
        votes = np.bincount(label_ids[order], minlength=len(vocab))
        majority = int(np.argmax(votes))  # argmax takes the lower index on ties
        hits += int(majority == label_ids[i])
    return hits / n


def purity_report(emb: LabeledEmbeddings, k: int = 5) -> dict:
    """Speaker-vs-accent purity numbers; reported, not asserted."""
    k = min(k, len(emb) - 1)
    return {
        "n": len(emb),
        "k": k,
        "accent_purity": knn_label_purity(emb, "accent", k),
        "speaker_purity": knn_label_purity(emb, "speaker", k),
    }


def save_embeddings(path, emb: LabeledEmbeddings,
                    coords: np.ndarray | None = None) -> None:
    """Delimited text: utt_id, accent, speaker, then values."""
    with open(path, "w", encoding="utf-8") as fh:
        dim = emb.matrix.shape[1]
        head = ["utt_id", "accent", "speaker"] + [f"v{j}" for j in range(dim)]
        if coords is not None:
            head += ["x", "y"]
        fh.write("\t".join(head) + "\n")
        for i in range(len(emb)):
            row = [emb.utt_ids[i], emb.accent_labels[i], emb.speaker_labels[i]]
            row += [f"{v:.8g}" for v in emb.matrix[i]]
            if coords is not None:
                row += [f"{coords[i, 0]:.8g}", f"{coords[i, 1]:.8g}"]
            fh.write("\t".join(row) + "\n")


def load_embeddings(path) -> tuple[LabeledEmbeddings, np.ndarray | None]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        has_coords = header[-2:] == ["x", "y"]
        dim = len(header) - 3 - (2 if has_coords else 0)
        ids, accents, speakers, rows, coords = [], [], [], [], []
        for line in fh:
            cells = line.rstrip("\n").split("\t")
            ids.append(cells[0])
            accents.append(cells[1])
            speakers.append(cells[2])
            rows.append([float(v) for v in cells[3:3 + dim]])
            if has_coords:
                coords.append([float(cells[-2]), float(cells[-1])])
    emb = LabeledEmbeddings(np.array(rows), accents, speakers, ids)
    return emb, (np.array(coords) if has_coords else None)


def plot_embeddings(path, emb: LabeledEmbeddings, coords: np.ndarray,
                    title: str = "accent representations") -> None:
    """Static scatter colored by accent, marker-coded by speaker."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    accents = sorted(set(emb.accent_labels))
    speakers = sorted(set(emb.speaker_labels))
    markers = ["o", "s", "^", "v", "D", "P", "X", "*"]
    cmap = plt.get_cmap("tab10")
    fig, ax = plt.subplots(figsize=(6, 5))
    for i in range(len(emb)):
        a = accents.index(emb.accent_labels[i])
        s = speakers.index(emb.speaker_labels[i])
        ax.scatter(coords[i, 0], coords[i, 1], color=cmap(a % 10),
                   marker=markers[s % len(markers)], s=36, alpha=0.8)
    handles = [plt.Line2D([], [], linestyle="", marker="o", color=cmap(i % 10),
                          label=lab) for i, lab in enumerate(accents)]
    ax.legend(handles=handles, fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
