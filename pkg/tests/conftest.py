import pytest

from rangeveil.crypto import labels as labels_mod
from rangeveil.crypto.group import standard_group, toy_group
from rangeveil.crypto.paillier import PaillierKeyPair, generate_keypair
from rangeveil.crypto.sealing import seal
from rangeveil.index import (
    SpatioTextualObject,
    build_plain_indexes,
    encrypted_index_build,
    keyword_bytes,
    prefix_bytes,
)
from rangeveil.protocol.maintenance import ShuffleScalars
from rangeveil.protocol.query import (
    MODE_LITERAL,
    client_recover,
    generate_tokens,
    server_complete,
    server_resolve,
)
from rangeveil.protocol.state import TermStateTable
from rangeveil.rng import RandomSource
from rangeveil.spatial import GridSpec, hilbert_decode


@pytest.fixture(scope="session")
def tiny_group():
    return toy_group()


@pytest.fixture(scope="session")
def group512():
    return standard_group(512)


@pytest.fixture(scope="session")
def toy_paillier():
    return PaillierKeyPair.from_primes(5, 7)


@pytest.fixture(scope="session")
def paillier128():
    return generate_keypair(128, RandomSource.seeded("conftest/128"))


@pytest.fixture(scope="session")
def paillier256():
    return generate_keypair(256, RandomSource.seeded("conftest/256"))


@pytest.fixture(scope="session")
def paillier512():
    return generate_keypair(512, RandomSource.seeded("conftest/512"))


def _cell_center(grid: GridSpec, position: int) -> tuple[float, float]:
    cx, cy = hilbert_decode(position, grid.order)
    step_x = (grid.max_x - grid.min_x) / grid.cells_per_axis
    step_y = (grid.max_y - grid.min_y) / grid.cells_per_axis
    return grid.min_x + (cx + 0.5) * step_x, grid.min_y + (cy + 0.5) * step_y


class ProtocolEnv:
    """A tiny two-server deployment wired up outside the message fabric."""

    def __init__(self, group, keypair, grid, records, seed):
        rng = RandomSource.seeded(seed)
        self.group = group
        self.kp = keypair
        self.pk = keypair.public
        self.grid = grid
        self.slot_bits = 16
        self.db = [
            SpatioTextualObject(
                r["id"], grid.curve_position(r["x"], r["y"]), tuple(r["keywords"])
            )
            for r in records
        ]
        self.prefix_rows, self.keyword_rows = build_plain_indexes(self.db, grid)
        self.master = labels_mod.keygen(group, rng)
        self.client = labels_mod.keygen(group, rng)
        self.switch = labels_mod.switch_key(group, self.client, self.master)
        self.share1, self.share2 = keypair.split(rng)
        self.tag_key = rng.randbytes(32)
        self.object_key = rng.randbytes(32)
        self.perm_key = rng.randbytes(32)
        self.pair = encrypted_index_build(
            self.prefix_rows,
            self.keyword_rows,
            self.master,
            self.tag_key,
            group,
            self.pk,
            self.slot_bits,
            rng,
        )
        self.store = {
            o.oid: seal(self.object_key, f"object-{o.oid}".encode(), rng)
            for o in self.db
        }
        self.r1 = group.random_scalar(rng)
        self.r2 = group.random_scalar(rng)
        self.scalars = ShuffleScalars(self.r1, self.r2)

    def fresh_state(self) -> TermStateTable:
        state = TermStateTable(object_count=len(self.db))
        for p in self.prefix_rows:
            state.insert_term(prefix_bytes(p))
        for w in self.keyword_rows:
            state.insert_term(keyword_bytes(w))
        return state

    def run_query(self, query, state=None, mode="corrected"):
        state = state or self.fresh_state()
        tokens, plan = generate_tokens(
            query, self.grid, self.group, self.client, self.r1, self.r2, state
        )
        shares = {1: self.share1, 2: self.share2}
        responses = []
        for side in (1, 2):
            report = server_resolve(
                tokens, *self.pair[side], self.switch, shares[side], self.group, self.pk
            )
            responses.append(
                server_complete(
                    report,
                    shares[3 - side],
                    self.store,
                    self.pk,
                    self.slot_bits,
                    len(self.db),
                    literal=(mode == MODE_LITERAL),
                )
            )
        outcome = client_recover(
            responses[0], responses[1], plan, self.object_key,
            self.pk, self.slot_bits, mode=mode,
        )
        return tokens, plan, responses, outcome


@pytest.fixture(scope="session")
def proto_env(worked_example, paillier256, group512):
    return ProtocolEnv(
        group512, paillier256, worked_example["grid"],
        worked_example["records"], "conftest/proto-env",
    )


@pytest.fixture(scope="session")
def worked_example():
    """Five objects on an 8x8 grid with a two-keyword conjunctive query.

    Curve positions are fixed so that exactly objects 1 and 4 fall in the
    queried range; only object 4 also carries both query keywords, so the
    expected result is {4}.
    """
    grid = GridSpec(0.0, 0.0, 8.0, 8.0, 3)
    positions = [5, 49, 60, 21, 46]
    keyword_sets = [
        ["w1", "w6", "w8"],
        ["w4", "w5"],
        ["w2", "w3"],
        ["w4", "w6"],
        ["w4", "w6", "w7"],
    ]
    records = []
    for i, (pos, words) in enumerate(zip(positions, keyword_sets)):
        x, y = _cell_center(grid, pos)
        records.append({"id": i, "x": x, "y": y, "keywords": words})
    return {
        "grid": grid,
        "records": records,
        "positions": positions,
        "intervals": ((45, 51), (54, 55)),
        "keywords": ("w4", "w6"),
        "expected_ids": (4,),
        "expected_cover": {"101101", "10111*", "1100**", "11011*"},
    }
