"""
HTTP client for the reward-lens service.

RewardLensClient talks to a running ``reward-lens serve`` (or any httpx
client wrapping the app in-process) and groups the endpoints into resources.
"""

import time
from typing import Any, Dict, Optional

import httpx

from reward_lens.config import DEFAULT_BIND, DEFAULT_PORT
from reward_lens.errors import RewardLensError
from reward_lens.resources.envs import EnvsResource
from reward_lens.resources.models import ModelsResource
from reward_lens.resources.rewards import RewardsResource
from reward_lens.resources.saliency import SaliencyResource
from reward_lens.resources.scenarios import ScenariosResource

DEFAULT_BASE_URL = f"http://{DEFAULT_BIND}:{DEFAULT_PORT}"
DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_RETRIES = 3


class RewardLensApiError(RewardLensError):
    """Error raised when a service request fails."""

    default_code = "UNKNOWN_ERROR"

    def __init__(
        self,
        message: str,
        status: int = 0,
        code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, code=code, details=details)
        self.status = status

    def __str__(self) -> str:
        text = super().__str__()
        return f"{text} (status={self.status})" if self.status else text


class RewardLensClient:
    """
    reward-lens service client.

    Example:
        >>> from reward_lens import RewardLensClient
        >>>
        >>> with RewardLensClient() as client:
        ...     client.models.load("quirk.json")
        ...     sample = client.envs.sample("coinflip", seed=7, step=0)
        ...     result = client.rewards.evaluate(sample["s"], sample["sp"])
        ...     print(result["reward"])
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        timeout: float = DEFAULT_TIMEOUT,
        max_retries: int = DEFAULT_MAX_RETRIES,
        http_client: Optional[httpx.Client] = None,
    ):
        """
        Initialize the client.

        Args:
            base_url: Service URL (default: http://127.0.0.1:8080)
            timeout: Request timeout in seconds (default: 30)
            max_retries: Retries for 429, 5xx and transport errors (default: 3)
            http_client: Preconfigured httpx client, e.g. a FastAPI TestClient;
                base_url and timeout are ignored when given
        """
        self._base_url = base_url.rstrip("/")
        self._max_retries = max_retries
        self._owns_http = http_client is None
        self._http = http_client or httpx.Client(
            base_url=self._base_url,
            timeout=timeout,
            headers={"Content-Type": "application/json", "Accept": "application/json"},
        )

        self.models = ModelsResource(self)
        self.rewards = RewardsResource(self)
        self.saliency = SaliencyResource(self)
        self.envs = EnvsResource(self)
        self.scenarios = ScenariosResource(self)

    def close(self) -> None:
        """Close the HTTP client if this instance created it."""
        if self._owns_http:
            self._http.close()

    def __enter__(self) -> "RewardLensClient":
        return self

    def __exit__(self, *args: Any) -> None:
        self.close()

    def _get_retry_delay(self, attempt: int) -> float:
        """Exponential backoff, capped at 10 s."""
        return min(1.0 * (2**attempt), 10.0)

    def _is_retryable(self, status: int) -> bool:
        return status == 429 or 500 <= status < 600

    def request(
        self,
        method: str,
        path: str,
        json: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        """
        Make an API request.

        Args:
            method: HTTP method (GET, POST)
            path: Request path (without base URL)
            json: Request body

        Returns:
            Response body as a dictionary

        Raises:
            RewardLensApiError: If the request fails
        """
        last_error: Optional[RewardLensApiError] = None

        for attempt in range(self._max_retries + 1):
            try:
                response = self._http.request(method=method, url=path, json=json)
            except httpx.TimeoutException:
                last_error = RewardLensApiError("Request timeout", code="TIMEOUT")
            except httpx.RequestError as e:
                last_error = RewardLensApiError(str(e), code="REQUEST_ERROR")
            else:
                if response.is_success:
                    body: Dict[str, Any] = response.json()
                    return body

                if self._is_retryable(response.status_code) and attempt < self._max_retries:
                    time.sleep(self._get_retry_delay(attempt))
                    continue

                try:
                    error_info = response.json().get("error", {})
                except (ValueError, AttributeError):
                    error_info = {}
                raise RewardLensApiError(
                    message=error_info.get("message", "Unknown error"),
                    status=response.status_code,
                    code=error_info.get("code", RewardLensApiError.default_code),
                )

            if attempt < self._max_retries:
                time.sleep(self._get_retry_delay(attempt))

        if last_error:
            raise last_error

        raise RewardLensApiError("Request failed")

    def get(self, path: str) -> Dict[str, Any]:
        """Make a GET request."""
        return self.request("GET", path)

    def post(self, path: str, json: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Make a POST request."""
        return self.request("POST", path, json=json)

