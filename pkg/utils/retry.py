"""
Retry policy shared by the remote clients (chat completions, embeddings,
cross-encoder).
"""

import logging
from typing import Callable, Tuple, Type, TypeVar

import backoff

from utils.constants import BACKOFF_MAX_WAIT, MAX_RETRIES
from utils.errors import TransportError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def call_with_retries(
    call: Callable[[], T],
    retry_on: Tuple[Type[BaseException], ...],
    description: str,
    max_tries: int = MAX_RETRIES,
    max_wait: float = BACKOFF_MAX_WAIT,
    factor: float = 1.0,
) -> T:
    """
    Run ``call`` with exponential backoff on the given exceptions.

    Args:
        call: Zero-argument request function
        retry_on: Exception types treated as transient
        description: Short name used in log lines and the final error
        max_tries: Total attempts before giving up
        max_wait: Upper bound of a single wait in seconds
        factor: Multiplier of the exponential wait (0 disables waiting)

    Returns:
        The value returned by ``call``

    Raises:
        TransportError: after ``max_tries`` failed attempts
    """

    def log_retry(details):
        logger.warning(
            "%s failed (attempt %d), retrying in %.1fs: %s",
            description, details["tries"], details["wait"], details.get("exception"),
        )

    def give_up(details):
        raise TransportError(f"{description} failed: {details.get('exception')}", attempts=details["tries"])

    wrapped = backoff.on_exception(
        backoff.expo,
        retry_on,
        max_tries=max_tries,
        max_value=max_wait,
        factor=factor,
        jitter=None,
        on_backoff=log_retry,
        on_giveup=give_up,
    )(call)
    return wrapped()
