"""Durable key-value storage: persistence across reopen, variant fidelity."""

import pytest

from orchestra.errors import StorageError
from orchestra.state import UNDEFINED
from orchestra.storage import Storage


def test_put_survives_reopen(tmp_path):
    path = tmp_path / "store.json"
    Storage(path).put("k", 1)
    assert Storage(path).get("k") == 1


def test_get_absent_is_undefined(tmp_path):
    assert Storage(tmp_path / "s.json").get("nope") is UNDEFINED


def test_delete(tmp_path):
    path = tmp_path / "s.json"
    st = Storage(path)
    st.put("k", "v")
    st.delete("k")
    assert st.get("k") is UNDEFINED
    assert Storage(path).get("k") is UNDEFINED


def test_variants_round_trip_bit_exact(tmp_path):
    path = tmp_path / "s.json"
    st = Storage(path)
    st.put("i", 1)
    st.put("d", 1.0)
    st.put("t", "1")
    st.put("b", True)
    back = Storage(path)
    assert type(back.get("i")) is int and back.get("i") == 1
    assert type(back.get("d")) is float and back.get("d") == 1.0
    assert back.get("t") == "1"
    assert back.get("b") is True


def test_overwrite_keeps_latest(tmp_path):
    path = tmp_path / "s.json"
    st = Storage(path)
    for i in range(20):
        st.put("k", i)
    assert Storage(path).get("k") == 19


def test_corrupt_file_reports_storage_error(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{broken", encoding="utf-8")
    with pytest.raises(StorageError):
        Storage(path)


def test_keys_listing(tmp_path):
    st = Storage(tmp_path / "s.json")
    st.put("b", 1)
    st.put("a", 2)
    assert st.keys() == ["a", "b"]
