"""Community oversight of mobile app permissions, self-hosted.

Trusted members share their installed-app catalogs, review one another's
permission decisions, hide what they don't want seen, and discuss the rest.
"""

__version__ = "0.1.0"
