"""Crossmodal attention-map export as CSV plus a JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import Branch
from .data import MultimodalSample, collate
from .errors import ContractError
from .model import MCMulT


def attention_map(
    model: MCMulT,
    sample: MultimodalSample,
    branch: Branch | str,
    block: int,
    head: int,
    scale: int = 0,
    source_pad: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Attention weights of the first layer of ``block`` against source ``scale``.

    Returns the [T_target, T_source] matrix (T_source = ``source_pad`` when
    given, with padded columns masked) and its metadata.
    """
    if model.graph is None:
        raise ContractError("unimodal models have no crossmodal attention")
    branch = Branch.parse(branch)
    if branch not in model.graph.branches:
        raise ContractError(f"branch {branch} is not computed by this model")
    n_blocks = model.graph.layers[-1].block
    if not 1 <= block <= n_blocks:
        raise ContractError(f"block {block} out of range 1..{n_blocks}")
    if not 0 <= head < model.cfg.heads:
        raise ContractError(f"head {head} out of range 0..{model.cfg.heads - 1}")
    position = model.graph.block_start(block)
    spec = model.graph.layer(position)
    if not 0 <= scale < spec.n_sources:
        raise ContractError(f"scale index {scale} out of range for a layer with {spec.n_sources} sources")

    batch = collate([sample])
    src = branch.source
    real = sample[src].length
    if source_pad is not None:
        if source_pad < real:
            raise ContractError(f"source_pad {source_pad} shorter than source length {real}")
        extra = source_pad - real
        batch.data[src] = np.pad(batch.data[src], ((0, 0), (0, extra), (0, 0)))
        batch.masks[src] = np.pad(batch.masks[src], ((0, 0), (0, extra)))

    trace = model.forward(batch).traces[(branch, position)]
    matrix = trace.attention[scale][0, head]
    meta = {
        "branch": str(branch),
        "block": block,
        "layer_position": position,
        "head": head,
        "scale": spec.sources[scale],
        "target_length": sample[branch.target].length,
        "source_length": real,
        "source_columns": int(matrix.shape[1]),
        "variant": model.cfg.variant.value,
    }
    return matrix, meta


def export_attention(
    model: MCMulT,
    sample: MultimodalSample,
    branch: Branch | str,
    block: int,
    head: int,
    out_dir,
    scale: int = 0,
    source_pad: int | None = None,
    stem: str | None = None,
) -> tuple[Path, Path]:
    matrix, meta = attention_map(model, sample, branch, block, head, scale, source_pad)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or f"attn_{meta['branch'].replace('->', 'to')}_b{block}_h{head}_s{meta['scale']}"
    csv_path = out / f"{stem}.csv"
    np.savetxt(csv_path, matrix, delimiter=",", fmt="%.17g")
    meta_path = out / f"{stem}.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path, meta_path
