import numpy as np
import pytest

from scareth.basis import brute_force_states, enumerate_basis, product_basis, transfer_matrix_count
from scareth.errors import CapacityError, ValidationError
from scareth.model import ModelSpec, parse_spin, spec_from_dict

from conftest import chain


def test_two_site_open_dimension():
    # 9 products minus the single blockaded |1,-1>
    assert enumerate_basis(chain(2, boundary="open")).dim == 8


def test_open_vs_periodic_three_sites():
    # |1,-1> is blockaded on each bond; periodic adds one more bond
    assert enumerate_basis(chain(3)).dim == 18
    assert enumerate_basis(chain(3, boundary="open")).dim > 18


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("boundary", ["periodic", "open"])
def test_enumeration_matches_brute_force(n, boundary):
    spec = chain(n, boundary=boundary)
    basis = enumerate_basis(spec)
    states = sorted(brute_force_states(spec))
    assert basis.dim == len(states) == transfer_matrix_count(spec)
    assert [tuple(s) for s in basis.states.tolist()] == states


def test_larger_dimensions_from_transfer_matrix():
    assert transfer_matrix_count(chain(9)) == 5778
    assert transfer_matrix_count(chain(7, j="3/2")) == 10084


def test_no_state_contains_a_blockaded_bond():
    basis = enumerate_basis(chain(6))
    s = basis.states
    d = basis.local_dim
    for k in range(6):
        assert not np.any((s[:, k] == 0) & (s[:, (k + 1) % 6] == d - 1))


def test_codes_sorted_and_index_roundtrip():
    basis = enumerate_basis(chain(5))
    assert np.all(np.diff(basis.codes) > 0)
    for i in (0, 7, basis.dim - 1):
        assert basis.index_of(basis.label(i)) == i


def test_blockaded_state_not_in_basis():
    basis = enumerate_basis(chain(4))
    with pytest.raises(KeyError):
        basis.index_of((1, -1, 0, 0))


def test_half_integer_labels():
    basis = enumerate_basis(chain(3, j="3/2"))
    v = basis.product_state(("3/2", "1/2", "-1/2"))
    assert v.sum() == 1


def test_spin_half_rejected():
    with pytest.raises(ValidationError):
        chain(3, j="1/2")


def test_bad_spin_strings():
    assert parse_spin("3/2") == parse_spin(1.5)
    with pytest.raises(ValidationError):
        parse_spin("1/3")


def test_capacity_error_names_size():
    with pytest.raises(CapacityError):
        enumerate_basis(chain(9), cap=100)
    with pytest.raises(CapacityError):
        product_basis(chain(9), cap=1000)


def test_spec_hash_covers_every_field():
    base = chain(5)
    variants = [base.with_(c=201), base.with_(n_sites=6), base.with_(boundary="open"), chain(5, j=2)]
    hashes = {s.spec_hash() for s in [base, *variants]}
    assert len(hashes) == 5
    assert base.spec_hash() == chain(5).spec_hash()


def test_spec_dict_roundtrip_and_unknown_field():
    spec = chain(4, c=50)
    assert spec_from_dict(spec.to_dict()) == spec
    with pytest.raises(ValidationError):
        spec_from_dict({**spec.to_dict(), "colour": "red"})
