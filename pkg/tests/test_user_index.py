import numpy as np
import pytest

from corpus.embeddings import HashEmbeddingProvider
from models.user_encoder import UserEncoder
from models.user_index import (
    UserIndex, build_mean_user_index, build_user_index, load_user_index, rank_users,
    retrieve_users, save_user_index,
)
from utils.errors import ConfigError, ContractError, FormatError, UserLookupError
from utils.helpers import make_rng


@pytest.fixture
def index():
    # u1 is closest to u0, then u2 and u3 tie, then u4
    matrix = np.array([
        [1.0, 0.0, 0.0],
        [0.9, 0.1, 0.0],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
        [0.0, 0.0, 1.0],
    ])
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    return UserIndex(["u0", "u1", "u2", "u3", "u4"], matrix)


def test_self_comes_first_then_by_similarity_and_id(index):
    assert rank_users(index, "u0") == ["u0", "u1", "u2", "u3", "u4"]


def test_self_stays_first_against_an_identical_user():
    # "a0" duplicates u0 and would win the ascending-id tie-break
    matrix = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tied = UserIndex(["u0", "a0", "u1"], matrix)
    assert rank_users(tied, "u0") == ["u0", "a0", "u1"]
    assert retrieve_users(tied, "u0", 1) == ["u0"]
    assert rank_users(tied, "a0") == ["a0", "u0", "u1"]


def test_top_m(index):
    assert retrieve_users(index, "u0", 1) == ["u0"]
    assert retrieve_users(index, "u0", 3) == ["u0", "u1", "u2"]


def test_ranks_m_to_2m(index):
    assert retrieve_users(index, "u0", 2, selection="top_m_to_2m") == ["u0", "u2"]
    assert retrieve_users(index, "u0", 3, selection="top_m_to_2m") == ["u0", "u3", "u4"]


def test_random_selection(index):
    chosen = retrieve_users(index, "u0", 3, selection="random", rng=make_rng(1))
    assert chosen[0] == "u0"
    assert len(set(chosen)) == 3
    assert chosen == retrieve_users(index, "u0", 3, selection="random", rng=make_rng(1))


def test_random_selection_needs_generator(index):
    with pytest.raises(ContractError):
        retrieve_users(index, "u0", 2, selection="random")


@pytest.mark.parametrize("m", [0, 6])
def test_m_out_of_range(index, m):
    with pytest.raises(ContractError):
        retrieve_users(index, "u0", m)


def test_unknown_selection(index):
    with pytest.raises(ConfigError):
        retrieve_users(index, "u0", 2, selection="bottom_m")


def test_unknown_user(index):
    with pytest.raises(UserLookupError):
        retrieve_users(index, "nobody", 2)


def test_file_round_trip(tmp_path, index):
    path = str(tmp_path / "users.emb")
    save_user_index(path, index)
    loaded = load_user_index(path, 3)
    assert loaded.user_ids == index.user_ids
    assert np.allclose(loaded.matrix, index.matrix, atol=1e-6)
    with pytest.raises(FormatError):
        load_user_index(path, 4)


def test_built_indexes_have_unit_rows(synthetic_corpus):
    profiles, _, _ = synthetic_corpus
    provider = HashEmbeddingProvider(16)
    encoder = UserEncoder(16, 8, make_rng(0))
    for index in (build_user_index(encoder, profiles, provider), build_mean_user_index(profiles, provider)):
        assert index.user_ids == list(profiles)
        assert np.allclose(np.linalg.norm(index.matrix, axis=1), 1.0)
