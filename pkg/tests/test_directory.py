import re

import pytest
from hypothesis import given, strategies as st

from permcircle.domain import DeviceIdentity
from permcircle.errors import (
    AlreadyMemberError,
    AuthRequiredError,
    EmptyFieldError,
    NotAMemberError,
    UnknownInviteCodeError,
)

from .conftest import identity, register


def test_register_idempotent_on_device_key(services):
    s1, r1 = register(services, "t1", "Alice")
    s2, r2 = register(services, "t1", "Alice")
    assert r1.member_id == r2.member_id
    assert s1.token != s2.token


def test_register_distinct_triples_distinct_members(services):
    _, r1 = register(services, "t1", "Alice")
    _, r2 = register(services, "t2", "Bob")
    assert r1.member_id != r2.member_id


def test_register_empty_sim_serial(services):
    with pytest.raises(EmptyFieldError) as err:
        services.directory.register(DeviceIdentity("d", "", "p"), "Alice")
    assert err.value.field == "sim_serial"


def test_register_empty_display_name(services):
    with pytest.raises(EmptyFieldError) as err:
        services.directory.register(identity("x"), "")
    assert err.value.field == "display_name"


def test_reregister_invalidates_previous_token(services):
    s1, _ = register(services, "t1", "Alice")
    register(services, "t1", "Alice")
    with pytest.raises(AuthRequiredError):
        services.directory.authenticate(s1.token)


def test_token_expires_after_ttl(services, clock):
    s, _ = register(services, "t1", "Alice")
    clock.advance(days=29)
    assert services.directory.authenticate(s.token).member_id == s.member_id
    clock.advance(days=2)
    with pytest.raises(AuthRequiredError):
        services.directory.authenticate(s.token)


@given(
    st.lists(
        st.tuples(
            st.text(min_size=1, max_size=6),
            st.text(min_size=1, max_size=6),
            st.text(min_size=1, max_size=6),
        ),
        min_size=1,
        max_size=10,
    )
)
def test_register_idempotence_property(tmp_path_factory, triples):
    # A dedicated store per example; hypothesis reruns share fixtures otherwise.
    from permcircle.directory import DirectoryService
    from permcircle.store import Database

    directory = DirectoryService(Database(tmp_path_factory.mktemp("reg") / "d.db"))
    seen: dict[tuple, str] = {}
    for triple in triples:
        ident = DeviceIdentity(*triple)
        _, ref = directory.register(ident, "Member")
        _, again = directory.register(ident, "Member")
        assert ref.member_id == again.member_id
        if triple in seen:
            assert seen[triple] == ref.member_id
        else:
            assert ref.member_id not in seen.values()
        seen[triple] = ref.member_id


# -- communities -----------------------------------------------------------------


def test_create_community_code_format_and_sole_member(services):
    session, ref = register(services, "t1", "Alice")
    caller = services.directory.authenticate(session.token)
    community = services.directory.create_community(caller, "Family")
    assert re.fullmatch(r"[A-Z0-9]{8}", community.invite_code)
    members = services.directory.list_members(caller, community.community_id)
    assert [m.member_id for m in members] == [ref.member_id]


def test_create_community_requires_name(services):
    session, _ = register(services, "t1", "Alice")
    caller = services.directory.authenticate(session.token)
    with pytest.raises(EmptyFieldError):
        services.directory.create_community(caller, "")


def test_create_with_expired_session(services, clock):
    session, _ = register(services, "t1", "Alice")
    clock.advance(days=31)
    with pytest.raises(AuthRequiredError):
        services.directory.authenticate(session.token)


def test_invite_codes_unique_over_10k(tmp_path):
    """Collision check: 10,000 communities, zero duplicate codes."""
    from permcircle.directory import DirectoryService
    from permcircle.store import Database

    directory = DirectoryService(Database(tmp_path / "codes.db"))
    session, _ = directory.register(identity("codes"), "Creator")
    caller = directory.authenticate(session.token)
    codes = set()
    for i in range(10_000):
        community = directory.create_community(caller, f"c{i}")
        codes.add(community.invite_code)
    assert len(codes) == 10_000


def test_join_flow_and_notification(services):
    s1, r1 = register(services, "t1", "Alice")
    s2, r2 = register(services, "t2", "Bob")
    alice = services.directory.authenticate(s1.token)
    bob = services.directory.authenticate(s2.token)
    community = services.directory.create_community(alice, "Family")

    ref = services.directory.join_community(bob, community.invite_code)
    assert ref.community_id == community.community_id

    members = services.directory.list_members(alice, community.community_id)
    assert [m.display_name for m in members] == ["Alice", "Bob"]  # sorted by name

    # Existing members got exactly one member_joined event; the joiner none.
    alice_events = services.queue.poll(r1.member_id)
    assert [e.kind.value for e in alice_events] == ["member_joined"]
    assert alice_events[0].payload == {
        "community_id": community.community_id,
        "member_id": r2.member_id,
    }
    assert services.queue.poll(r2.member_id) == []


def test_join_unknown_code(services):
    s, _ = register(services, "t1", "Alice")
    caller = services.directory.authenticate(s.token)
    with pytest.raises(UnknownInviteCodeError):
        services.directory.join_community(caller, "NOPE1234")


def test_join_twice_rejected(services):
    s1, _ = register(services, "t1", "Alice")
    s2, _ = register(services, "t2", "Bob")
    alice = services.directory.authenticate(s1.token)
    bob = services.directory.authenticate(s2.token)
    community = services.directory.create_community(alice, "Family")
    services.directory.join_community(bob, community.invite_code)
    with pytest.raises(AlreadyMemberError):
        services.directory.join_community(bob, community.invite_code)
    # The creator joining again is also a duplicate.
    with pytest.raises(AlreadyMemberError):
        services.directory.join_community(alice, community.invite_code)


def test_list_members_requires_membership(services):
    s1, _ = register(services, "t1", "Alice")
    s2, _ = register(services, "t2", "Bob")
    alice = services.directory.authenticate(s1.token)
    bob = services.directory.authenticate(s2.token)
    community = services.directory.create_community(alice, "Family")
    with pytest.raises(NotAMemberError):
        services.directory.list_members(bob, community.community_id)


def test_list_members_unknown_community_reads_as_not_a_member(services):
    s, _ = register(services, "t1", "Alice")
    caller = services.directory.authenticate(s.token)
    with pytest.raises(NotAMemberError):
        services.directory.list_members(caller, "no-such-community")


def test_concurrent_duplicate_joins_create_one_membership_row(services):
    """Racing joins serialize on the membership set: exactly one wins."""
    import threading

    s1, _ = register(services, "t1", "Alice")
    s2, r2 = register(services, "t2", "Bob")
    alice = services.directory.authenticate(s1.token)
    bob = services.directory.authenticate(s2.token)
    community = services.directory.create_community(alice, "Family")

    outcomes = []
    barrier = threading.Barrier(4)

    def join():
        barrier.wait()
        try:
            services.directory.join_community(bob, community.invite_code)
            outcomes.append("joined")
        except AlreadyMemberError:
            outcomes.append("duplicate")

    threads = [threading.Thread(target=join) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(outcomes) == ["duplicate", "duplicate", "duplicate", "joined"]
    members = services.directory.list_members(alice, community.community_id)
    assert [m.member_id for m in members].count(r2.member_id) == 1


def test_member_may_belong_to_multiple_communities(services):
    s, _ = register(services, "t1", "Alice")
    caller = services.directory.authenticate(s.token)
    c1 = services.directory.create_community(caller, "One")
    c2 = services.directory.create_community(caller, "Two")
    ids = {c.community_id for c in services.directory.communities_for(caller.member_id)}
    assert ids == {c1.community_id, c2.community_id}
