"""Typed service errors with stable machine codes.

Every error a module can raise maps to exactly one ``code`` string; the
codes (and the ``{code, message}`` JSON error body) are part of the public
API contract, so clients match on them rather than on message text.
"""

from __future__ import annotations


class ServiceError(Exception):
    """Base class for all errors that cross the API boundary."""

    code = "internal_error"
    http_status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class AuthRequiredError(ServiceError):
    code = "auth_required"
    http_status = 401

    def __init__(self, message: str = "a valid bearer token is required"):
        super().__init__(message)


class EmptyFieldError(ServiceError):
    code = "empty_field"
    http_status = 400

    def __init__(self, field: str):
        super().__init__(f"field {field!r} must be non-empty")
        self.field = field


class NotAMemberError(ServiceError):
    code = "not_a_member"
    http_status = 403

    def __init__(self, community_id: str):
        super().__init__(f"caller is not a member of community {community_id!r}")


class TargetNotInCommunityError(ServiceError):
    code = "target_not_in_community"
    http_status = 404

    def __init__(self, member_id: str, community_id: str):
        super().__init__(
            f"member {member_id!r} is not part of community {community_id!r}"
        )


class UnknownInviteCodeError(ServiceError):
    code = "unknown_invite_code"
    http_status = 404

    def __init__(self, code_value: str):
        super().__init__(f"no community with invite code {code_value!r}")


class AlreadyMemberError(ServiceError):
    code = "already_member"
    http_status = 409

    def __init__(self, community_id: str):
        super().__init__(f"caller already belongs to community {community_id!r}")


class UnknownPackageError(ServiceError):
    code = "unknown_package"
    http_status = 404

    def __init__(self, package: str):
        super().__init__(f"package {package!r} is not in the catalog")


class PackageNotInScopeError(ServiceError):
    code = "package_not_in_scope"
    http_status = 404

    def __init__(self, package: str):
        super().__init__(f"package {package!r} has no visible installation in scope")


class DuplicatePackageError(ServiceError):
    code = "duplicate_package"
    http_status = 400

    def __init__(self, package: str):
        super().__init__(f"package {package!r} appears more than once in the snapshot")


class InvalidDiffError(ServiceError):
    code = "invalid_diff"
    http_status = 400


class UnknownPostError(ServiceError):
    code = "unknown_post"
    http_status = 404

    def __init__(self, post_id: int):
        super().__init__(f"no post with id {post_id}")


class NoSharedCommunityError(ServiceError):
    code = "no_shared_community"
    http_status = 403

    def __init__(self, member_id: str):
        super().__init__(f"no shared community with member {member_id!r}")


class SelfMessageError(ServiceError):
    code = "self_message"
    http_status = 400

    def __init__(self):
        super().__init__("cannot send a direct message to yourself")


class EmptyBodyError(ServiceError):
    code = "empty_body"
    http_status = 400

    def __init__(self):
        super().__init__("body must be non-empty")


class BodyTooLongError(ServiceError):
    code = "body_too_long"
    http_status = 400

    def __init__(self, limit: int):
        super().__init__(f"body exceeds {limit} characters")


class UnknownActionError(ServiceError):
    code = "unknown_action"
    http_status = 400

    def __init__(self, action: str):
        super().__init__(f"{action!r} is not a recognized usage action")


class InvalidRequestError(ServiceError):
    """Malformed request body or query parameters."""

    code = "invalid_request"
    http_status = 400
