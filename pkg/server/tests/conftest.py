import json

import pytest

from hopfuse_server.app import ServeConfig


def write_hash_checkpoints(base, dim=64, seed=0) -> ServeConfig:
    for role in ("encoder", "rerank", "evidence", "rr"):
        role_dir = base / role
        role_dir.mkdir(parents=True, exist_ok=True)
        config = {"kind": "hash", "seed": seed}
        if role == "encoder":
            config["dim"] = dim
        (role_dir / "config.json").write_text(json.dumps(config))
    return ServeConfig(
        encoder_checkpoint=str(base / "encoder"),
        rerank_checkpoint=str(base / "rerank"),
        evidence_checkpoint=str(base / "evidence"),
        rr_checkpoint=str(base / "rr"),
        dim=dim,
    )


@pytest.fixture
def hash_config(tmp_path) -> ServeConfig:
    return write_hash_checkpoints(tmp_path / "ckpt")
