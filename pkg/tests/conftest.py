import os
import hashlib

import pytest

from chainlens.importer import (
    SynthParams, generate_synthetic_chain, write_import_blocks,
)
from chainlens.parser import parse_chain
from chainlens.view import open_view


def chain_blocks(seed, blocks, **kw):
    return list(generate_synthetic_chain(SynthParams(seed=seed, blocks=blocks,
                                                     **kw)))


def parse_blocks(blocks, data_dir, **kw):
    return parse_chain(iter(blocks), str(data_dir), **kw)


def dir_digest(path, include_state=True):
    """Digest of the flat chain files plus a canonical index dump; pickled
    parser state is optional because equivalent states need not pickle
    identically after a revert."""
    from chainlens.indexstore import IndexHandle
    h = hashlib.sha256()
    names = ["txdata.dat", "txoffsets.dat", "blocks.dat"]
    if include_state:
        names.append("parser_state.dat")
    for name in names:
        h.update(name.encode())
        with open(os.path.join(path, name), "rb") as f:
            h.update(f.read())
    sdir = os.path.join(path, "scripts")
    for name in sorted(os.listdir(sdir)):
        h.update(name.encode())
        with open(os.path.join(sdir, name), "rb") as f:
            h.update(f.read())
    with IndexHandle(path, readonly=True) as idx:
        h.update(idx.canonical_dump())
    return h.hexdigest()


@pytest.fixture(scope="session")
def medium_chain(tmp_path_factory):
    """A 120-block synthetic chain parsed once and shared read-only."""
    blocks = chain_blocks(seed=20, blocks=120, txs_per_block=(1, 5))
    d = tmp_path_factory.mktemp("medium")
    parse_blocks(blocks, d)
    return blocks, str(d)


@pytest.fixture()
def medium_view(medium_chain):
    _, d = medium_chain
    return open_view(d, reorg_margin=0)
