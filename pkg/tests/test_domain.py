import random

import pytest
from hypothesis import given, strategies as st

from permcircle.domain import (
    CatalogEntry,
    Decision,
    PermissionDirectory,
    PermissionState,
    Visibility,
    derive_device_key,
    mask_catalog,
)
from permcircle.errors import EmptyFieldError

from .oracles import PERMISSION_POOL

# -- device key ---------------------------------------------------------------


def test_derive_key_deterministic():
    assert derive_device_key("a", "b", "c") == derive_device_key("a", "b", "c")


def test_derive_key_field_sensitivity():
    base = derive_device_key("a", "b", "c")
    assert derive_device_key("a", "b", "d") != base
    assert derive_device_key("a", "x", "c") != base
    assert derive_device_key("x", "b", "c") != base


def test_derive_key_no_concatenation_ambiguity():
    # Same concatenated bytes, different field boundaries.
    assert derive_device_key("ab", "c", "d") != derive_device_key("a", "bc", "d")


def test_derive_key_length():
    assert len(derive_device_key("a", "b", "c")) == 32


@pytest.mark.parametrize("field", ["device_id", "sim_serial", "platform_id"])
def test_derive_key_empty_field_named(field):
    args = {"device_id": "a", "sim_serial": "b", "platform_id": "c", field: ""}
    with pytest.raises(EmptyFieldError) as err:
        derive_device_key(args["device_id"], args["sim_serial"], args["platform_id"])
    assert err.value.field == field
    assert err.value.code == "empty_field"


def test_derive_key_random_triples():
    """1,000 random triples: determinism, field sensitivity, and boundary
    ambiguity resistance, with separator-ish characters in the mix."""
    rng = random.Random(0xD3)
    alphabet = "abc|:;,\x00 ."
    seen: dict[bytes, tuple] = {}
    for _ in range(1000):
        triple = tuple(
            "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 8)))
            for _ in range(3)
        )
        key = derive_device_key(*triple)
        assert derive_device_key(*triple) == key
        if key in seen:
            assert seen[key] == triple
        seen[key] = triple

        # Shift one character across a field boundary; the concatenation is
        # unchanged but the key must not be.
        a, b, c = triple
        if len(a) > 1:
            shifted = (a[:-1], a[-1] + b, c)
            assert shifted != triple
            assert derive_device_key(*shifted) != key
        if len(b) > 1:
            shifted = (a, b[:-1], b[-1] + c)
            assert derive_device_key(*shifted) != key


# -- catalog entries -----------------------------------------------------------


def test_entry_rejects_duplicate_permission():
    with pytest.raises(ValueError):
        CatalogEntry(
            "com.a",
            "A",
            Visibility.VISIBLE,
            (
                PermissionState("android.permission.CAMERA", Decision.GRANTED),
                PermissionState("android.permission.CAMERA", Decision.DENIED),
            ),
        )


def test_entry_permissions_order_insensitive():
    p1 = PermissionState("a.p.ONE", Decision.GRANTED)
    p2 = PermissionState("a.p.TWO", Decision.DENIED)
    assert CatalogEntry("c", "C", Visibility.VISIBLE, (p1, p2)) == CatalogEntry(
        "c", "C", Visibility.VISIBLE, (p2, p1)
    )


# -- masking --------------------------------------------------------------------


def _entries():
    return [
        CatalogEntry("com.a", "A", Visibility.VISIBLE),
        CatalogEntry("com.b", "B", Visibility.HIDDEN),
    ]


def test_mask_owner_sees_all():
    out = mask_catalog(_entries(), viewer_is_owner=True)
    assert out == _entries()
    assert [e.visibility for e in out] == [Visibility.VISIBLE, Visibility.HIDDEN]


def test_mask_non_owner_drops_hidden_and_strips_flag():
    out = mask_catalog(_entries(), viewer_is_owner=False)
    assert [e.package for e in out] == ["com.a"]
    assert out[0].visibility is None


def test_mask_empty():
    assert mask_catalog([], viewer_is_owner=False) == []


_entry_st = st.builds(
    CatalogEntry,
    package=st.sampled_from([f"com.app{i}" for i in range(10)]),
    label=st.text(min_size=1, max_size=6),
    visibility=st.sampled_from([Visibility.VISIBLE, Visibility.HIDDEN]),
    permissions=st.lists(
        st.builds(
            PermissionState,
            permission=st.sampled_from(PERMISSION_POOL),
            decision=st.sampled_from([Decision.GRANTED, Decision.DENIED]),
        ),
        unique_by=lambda s: s.permission,
        max_size=5,
    ).map(tuple),
)

_catalog_st = st.lists(_entry_st, unique_by=lambda e: e.package, max_size=8)


@given(_catalog_st, st.booleans())
def test_mask_properties(entries, owner):
    out = mask_catalog(entries, viewer_is_owner=owner)
    if owner:
        assert out == list(entries)
    else:
        visible = [e for e in entries if e.visibility is not Visibility.HIDDEN]
        assert [e.package for e in out] == [e.package for e in visible]  # order kept
        assert all(e.visibility is None for e in out)
    # Idempotent for both roles.
    assert mask_catalog(out, viewer_is_owner=owner) == out


@given(_catalog_st)
def test_mask_non_owner_never_leaks_hidden(entries):
    hidden = {e.package for e in entries if e.visibility is Visibility.HIDDEN}
    out = mask_catalog(entries, viewer_is_owner=False)
    assert hidden.isdisjoint({e.package for e in out})


# -- permission dictionary --------------------------------------------------------


def test_bundled_dictionary_loads_and_is_total():
    d = PermissionDirectory.bundled()
    assert len(d) >= 30
    for name in PERMISSION_POOL:
        info = d.lookup(name)
        assert info.name == name
        assert info.description


def test_unknown_permission_fallback():
    d = PermissionDirectory.bundled()
    info = d.lookup("com.vendor.permission.SOMETHING_ODD")
    assert info.description == "No description available"
    assert info.protection_level.value == "normal"


def test_dictionary_rejects_duplicates_and_blank_descriptions():
    from permcircle.domain import PermissionInfo, ProtectionLevel

    with pytest.raises(ValueError):
        PermissionDirectory(
            [
                PermissionInfo("x.P", "one", ProtectionLevel.NORMAL),
                PermissionInfo("x.P", "two", ProtectionLevel.NORMAL),
            ]
        )
    with pytest.raises(ValueError):
        PermissionDirectory([PermissionInfo("x.P", "", ProtectionLevel.NORMAL)])
